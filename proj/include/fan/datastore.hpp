#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fan/numkernel.hpp"

namespace fan {

struct VideoInstance {
  std::string video_id;
  std::string subject_id;
  std::size_t label;
  Matrix features;  // n x D, one row per frame

  std::size_t frames() const { return features.rows(); }
  bool operator==(const VideoInstance&) const = default;
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<std::string> class_names;
  std::vector<VideoInstance> instances;

  // Throws SchemaError / DataError when shapes or labels are inconsistent.
  void validate() const;

  std::vector<std::string> subjects() const;  // distinct, in canonical order
  bool operator==(const Dataset&) const = default;
};

// FANF, version 1, little-endian:
//   "FANF" u32 version u32 D u32 C u64 count, C class names,
//   then per record: videoId, subjectId, u32 label, u32 n, n*D f32 row-major.
// Strings are a u16 byte length followed by UTF-8 bytes.
inline constexpr std::string_view kFeatureMagic = "FANF";
inline constexpr std::uint32_t kFeatureVersion = 1;

std::string encode_feature_file(const Dataset& dataset);
Dataset decode_feature_file(std::string_view bytes);

void write_feature_file(const Dataset& dataset, const std::string& path);
Dataset load_feature_file(const std::string& path);

// One frame per line: videoId,subjectId,label,frameIndex,v_0,...,v_{D-1}.
// Blank lines and lines starting with '#' are skipped. Videos keep the order
// of their first appearance; frames are ordered by frameIndex. When
// class_names is empty, C = max label + 1 and names are "class<k>".
Dataset import_feature_csv(const std::string& path,
                           const std::vector<std::string>& class_names = {});
Dataset parse_feature_csv(std::string_view text,
                          const std::vector<std::string>& class_names = {});

// Sort key for subject ids: every run of digits is left-padded with zeros,
// so "S5" < "S10" and already padded ids sort lexicographically.
std::string canonical_subject_key(std::string_view subject_id);

struct FoldPlan {
  std::size_t fold_count = 10;
  std::map<std::string, std::size_t> assignment;  // subject -> fold

  std::size_t fold_of(const std::string& subject) const;
  std::vector<std::string> subjects_in(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

// Subjects sorted by canonical key; the subject at sorted position p goes to
// fold p mod fold_count.
FoldPlan build_folds(const Dataset& dataset, std::size_t fold_count = 10);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Instance indices (dataset order) of the test fold and of everything else.
Split split_for_fold(const Dataset& dataset, const FoldPlan& plan, std::size_t fold);

struct SynthConfig {
  std::size_t videos_per_class = 200;
  std::size_t min_frames = 8;
  std::size_t max_frames = 16;
  std::size_t dim = 16;
  std::size_t classes = 4;
  std::size_t peaks_per_video = 1;
  double signal = 3.0;
  double noise = 1.0;  // RMS norm of the per-frame noise vector
  std::uint64_t seed = 7;
  std::size_t subjects = 40;
  bool terminal_peaks = false;  // peaks at the end of the video instead of uniform positions

  void validate() const;
};

struct SynthDataset {
  Dataset dataset;
  Matrix directions;                            // C x D, unit rows, mutually orthogonal
  std::vector<std::vector<std::size_t>> peaks;  // per instance, sorted frame indices
};

// Frames are isotropic Gaussian noise with per-coordinate standard deviation
// noise / sqrt(D), so E|noise|^2 = noise^2; peak frames additionally carry
// signal * direction[label]. Features are rounded to single precision so the
// in-memory dataset equals its FANF round trip.
SynthDataset synth_generate_with_peaks(const SynthConfig& config);
Dataset synth_generate(const SynthConfig& config);

}  // namespace fan
