#include "fan/sampler.hpp"

#include <numeric>

#include "fan/errors.hpp"

namespace fan {

SegmentPlan plan_segments(std::size_t n, std::size_t k) {
  if (n == 0) throw DomainError("cannot segment a video with no frames");
  if (k == 0) throw DomainError("segment count must be positive");
  SegmentPlan plan{n, {}};
  plan.segments.reserve(k);
  for (std::size_t s = 0; s < k; ++s) {
    plan.segments.emplace_back(s * n / k, (s + 1) * n / k);
  }
  return plan;
}

std::vector<std::size_t> sample_training(std::size_t n, std::size_t k, Rng& rng) {
  const SegmentPlan plan = plan_segments(n, k);
  std::vector<std::size_t> picks(k);
  std::vector<bool> drawn(k, false);
  for (std::size_t s = 0; s < k; ++s) {
    const auto [begin, end] = plan.segments[s];
    if (begin < end) {
      picks[s] = begin + rng.uniform_index(end - begin);
      drawn[s] = true;
    }
  }
  // With n < K the leading segments can be empty too; they take the first draw.
  std::size_t first = 0;
  while (!drawn[first]) ++first;
  for (std::size_t s = 0; s < first; ++s) picks[s] = picks[first];
  for (std::size_t s = first + 1; s < k; ++s) {
    if (!drawn[s]) picks[s] = picks[s - 1];
  }
  return picks;
}

std::vector<std::size_t> frames_for_eval(std::size_t n) {
  if (n == 0) throw DomainError("a video needs at least one frame");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace fan
