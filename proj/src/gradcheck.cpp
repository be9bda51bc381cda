#include "fan/gradcheck.hpp"

#include <vector>

#include "fan/rng.hpp"

namespace fan {

GradcheckResult check_gradients(const GradcheckCase& config, double eps, double tolerance,
                                bool corrupt) {
  Rng rng = Rng::derive(config.seed, {kGradcheckStream});
  std::vector<double> frames(config.frames * config.dim);
  for (double& x : frames) x = rng.normal();
  const Matrix features(config.frames, config.dim, std::move(frames));

  FanParams params =
      FanParams::initialize(config.mode, config.dim, config.classes, rng.next_u64());
  for (double& b : params.class_bias.span()) b = rng.uniform(-0.5, 0.5);
  const Vector flat = flatten(params);
  const std::size_t label = rng.uniform_index(config.classes);

  Vector analytic = flatten(backward(features, params, label).grads);
  if (corrupt) analytic[analytic.size() - 1] += 0.1;

  const Vector numeric = finite_diff_gradient(
      [&](const Vector& p) {
        const FanParams probe = unflatten(p, config.mode, config.dim, config.classes);
        return softmax_cross_entropy(forward(features, probe).logits, label).loss;
      },
      flat, eps);

  GradcheckResult result{config, 0.0, 0, {}, true};
  for (std::size_t j = 0; j < analytic.size(); ++j) {
    const double err = relative_error(analytic[j], numeric[j]);
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_coordinate = j;
    }
    if (!(err < tolerance)) result.offending.push_back(j);
  }
  result.passed = result.offending.empty();
  return result;
}

std::vector<GradcheckCase> default_gradcheck_cases(std::size_t count, std::uint64_t seed) {
  constexpr std::size_t kDims[] = {4, 8, 16};
  constexpr std::size_t kClasses[] = {3, 7};
  std::vector<GradcheckCase> cases;
  for (std::size_t i = 0; i < count; ++i) {
    cases.push_back(GradcheckCase{i % 2 == 0 ? Mode::Full : Mode::SelfOnly, kDims[i % 3],
                                  1 + i % 6, kClasses[(i / 2) % 2], splitmix64(seed + i)});
  }
  return cases;
}

}  // namespace fan
