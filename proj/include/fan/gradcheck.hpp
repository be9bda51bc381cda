#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fan/fanhead.hpp"

namespace fan {

struct GradcheckCase {
  Mode mode;
  std::size_t dim;
  std::size_t frames;
  std::size_t classes;
  std::uint64_t seed;
};

struct GradcheckResult {
  GradcheckCase config;
  double max_relative_error;
  std::size_t worst_coordinate;        // index into flatten() order
  std::vector<std::size_t> offending;  // coordinates above tolerance
  bool passed;
};

// Random frames (standard normal), parameters (Glorot-initialized kernels and
// classifier, bias uniform in [-0.5, 0.5]) and label, all derived from
// config.seed; compares backward() against central
// differences of the forward loss. `corrupt` perturbs one analytic entry and
// exists so callers can check the checker.
GradcheckResult check_gradients(const GradcheckCase& config, double eps = 1e-5,
                                double tolerance = 1e-4, bool corrupt = false);

// `count` cases cycling through D in {4, 8, 16}, n in 1..6, C in {3, 7}
// and both modes, each with its own derived seed.
std::vector<GradcheckCase> default_gradcheck_cases(std::size_t count, std::uint64_t seed);

}  // namespace fan
