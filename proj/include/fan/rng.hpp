#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fan {

// Seedable random stream with portable output.
//
// Engine is std::mt19937_64, whose output sequence is fixed by the standard.
// The distributions are implemented here rather than taken from <random>,
// because the standard leaves those implementation-defined and golden values
// must not depend on the library vendor.
//
// Streams are split by hashing a parent seed with a list of tags through
// SplitMix64, e.g. Rng::derive(seed, {kSampleStream, epoch, instance}).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, n), by rejection so that every value is equally likely.
  std::size_t uniform_index(std::size_t n);

  // Uniform on [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; one value per call, no cached state.
  double normal();

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Tags for the derived streams used across the library.
enum StreamTag : std::uint64_t {
  kInitStream = 1,
  kShuffleStream = 2,
  kSampleStream = 3,
  kEvalSampleStream = 4,
  kSynthStream = 5,
  kGradcheckStream = 6,
};

}  // namespace fan
