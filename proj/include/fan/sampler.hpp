#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "fan/rng.hpp"

namespace fan {

// Half-open frame ranges [begin, end), contiguous and in order, covering [0, n).
struct SegmentPlan {
  std::size_t frames;
  std::vector<std::pair<std::size_t, std::size_t>> segments;
};

// Segment s covers [floor(s*n/K), floor((s+1)*n/K)). Empty segments appear
// only when n < K.
SegmentPlan plan_segments(std::size_t n, std::size_t k);

// One uniform draw from each segment. An empty segment repeats the draw of
// the nearest preceding non-empty one (or of the first non-empty segment when
// none precedes it), so the result always has exactly K non-decreasing indices.
std::vector<std::size_t> sample_training(std::size_t n, std::size_t k, Rng& rng);

std::vector<std::size_t> frames_for_eval(std::size_t n);

}  // namespace fan
