#include "fan/datastore.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "fan/binary_io.hpp"
#include "fan/errors.hpp"
#include "fan/rng.hpp"

namespace fan {

namespace {

std::string record_name(std::size_t index, const std::string& video_id) {
  return "record " + std::to_string(index) + " ('" + video_id + "')";
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line_no, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" +
                      std::string(text) + "'");
  }
  return value;
}

std::vector<std::string> default_class_names(std::size_t classes) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < classes; ++k) names.push_back("class" + std::to_string(k));
  return names;
}

// Walks the record section using only the length fields. The format carries D
// once, in the header, so a wrong header D shows up as records that overrun the
// file or leave bytes behind; both are reported against the header.
void check_record_layout(ByteReader r, std::size_t dim, std::uint64_t count) {
  auto mismatch = [&](std::uint64_t i, const std::string& what) {
    return SchemaError("record " + std::to_string(i) + " " + what +
                       "; record sizes disagree with the header (D=" + std::to_string(dim) +
                       ", " + std::to_string(count) + " records)");
  };
  for (std::uint64_t i = 0; i < count; ++i) {
    try {
      const std::string video_id(r.raw(r.u16("video id length"), "video id"));
      r.raw(r.u16("subject id length"), "subject id");
      r.u32("label");
      const std::uint32_t n = r.u32("frame count");
      if (n == 0) throw SchemaError(record_name(i, video_id) + " has no frames");
      const std::uint64_t payload = std::uint64_t{n} * dim * sizeof(float);
      if (payload > r.remaining()) {
        throw mismatch(i, "declares " + std::to_string(n) + " frames of dimension " +
                              std::to_string(dim) + " but only " +
                              std::to_string(r.remaining()) + " bytes remain");
      }
      r.raw(static_cast<std::size_t>(payload), "features");
    } catch (const FormatError& e) {
      throw mismatch(i, std::string("runs past the end of the file (") + e.what() + ")");
    }
  }
  if (r.remaining() != 0) {
    throw mismatch(count, "position has " + std::to_string(r.remaining()) + " trailing bytes");
  }
}

}  // namespace

void Dataset::validate() const {
  if (dim == 0) throw SchemaError("feature dimension must be positive");
  if (classes == 0) throw SchemaError("class count must be positive");
  if (class_names.size() != classes) {
    throw SchemaError("dataset declares " + std::to_string(classes) + " classes but names " +
                      std::to_string(class_names.size()));
  }
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const VideoInstance& v = instances[i];
    if (v.features.cols() != dim) {
      throw SchemaError(record_name(i, v.video_id) + " has frame dimension " +
                        std::to_string(v.features.cols()) + ", dataset has " +
                        std::to_string(dim));
    }
    if (v.label >= classes) {
      throw DataError(record_name(i, v.video_id) + " has label " + std::to_string(v.label) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

std::vector<std::string> Dataset::subjects() const {
  std::set<std::pair<std::string, std::string>> keyed;
  for (const auto& v : instances) keyed.emplace(canonical_subject_key(v.subject_id), v.subject_id);
  std::vector<std::string> out;
  out.reserve(keyed.size());
  for (const auto& [key, id] : keyed) out.push_back(id);
  return out;
}

std::string encode_feature_file(const Dataset& dataset) {
  dataset.validate();
  ByteWriter w;
  w.raw(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(dataset.dim));
  w.u32(static_cast<std::uint32_t>(dataset.classes));
  w.u64(dataset.instances.size());
  for (const auto& name : dataset.class_names) w.str(name);
  for (const auto& v : dataset.instances) {
    w.str(v.video_id);
    w.str(v.subject_id);
    w.u32(static_cast<std::uint32_t>(v.label));
    w.u32(static_cast<std::uint32_t>(v.frames()));
    for (double x : v.features.span()) w.f32(static_cast<float>(x));
  }
  return w.take();
}

Dataset decode_feature_file(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kFeatureMagic.size() || r.raw(kFeatureMagic.size(), "magic") != kFeatureMagic) {
    throw FormatError("not a FANF feature file (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kFeatureVersion) {
    throw FormatError("unsupported FANF version " + std::to_string(version));
  }
  Dataset ds;
  ds.dim = r.u32("feature dimension");
  ds.classes = r.u32("class count");
  const std::uint64_t count = r.u64("instance count");
  if (ds.dim == 0) throw SchemaError("FANF header declares feature dimension 0");
  if (ds.classes == 0) throw SchemaError("FANF header declares 0 classes");
  for (std::size_t k = 0; k < ds.classes; ++k) ds.class_names.push_back(r.str("class name"));

  check_record_layout(r, ds.dim, count);

  for (std::uint64_t i = 0; i < count; ++i) {
    std::string video_id = r.str("video id");
    std::string subject_id = r.str("subject id");
    const std::uint32_t label = r.u32("label");
    const std::uint32_t n = r.u32("frame count");
    std::vector<double> values(static_cast<std::size_t>(n) * ds.dim);
    for (double& x : values) {
      x = r.f32("features");
      if (!std::isfinite(x)) {
        throw DataError(record_name(i, video_id) + " contains a non-finite feature value");
      }
    }
    if (label >= ds.classes) {
      throw DataError(record_name(i, video_id) + " has label " + std::to_string(label) +
                      " outside [0, " + std::to_string(ds.classes) + ")");
    }
    ds.instances.push_back(VideoInstance{std::move(video_id), std::move(subject_id), label,
                                         Matrix(n, ds.dim, std::move(values))});
  }
  return ds;
}

void write_feature_file(const Dataset& dataset, const std::string& path) {
  write_file_bytes(path, encode_feature_file(dataset));
}

Dataset load_feature_file(const std::string& path) {
  return decode_feature_file(read_file_bytes(path));
}

Dataset parse_feature_csv(std::string_view text, const std::vector<std::string>& class_names) {
  struct Pending {
    std::string subject;
    std::size_t label;
    std::map<std::size_t, std::vector<double>> frames;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Pending> videos;
  std::size_t dim = 0;
  std::size_t max_label = 0;

  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    auto fields = split_fields(line);
    if (fields.size() < 5) {
      throw FormatError("line " + std::to_string(line_no) +
                        ": expected videoId,subjectId,label,frameIndex and at least one value");
    }
    const std::size_t row_dim = fields.size() - 4;
    if (dim == 0) dim = row_dim;
    if (row_dim != dim) {
      throw SchemaError("line " + std::to_string(line_no) + " has " + std::to_string(row_dim) +
                        " values, earlier lines have " + std::to_string(dim));
    }
    std::string video(fields[0]);
    const auto label = parse_number<std::size_t>(fields[2], line_no, "label");
    const auto frame = parse_number<std::size_t>(fields[3], line_no, "frame index");
    std::vector<double> values(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      values[j] = parse_number<double>(fields[4 + j], line_no, "feature value");
      if (!std::isfinite(values[j])) {
        throw DataError("line " + std::to_string(line_no) + " ('" + video +
                        "') contains a non-finite feature value");
      }
    }

    auto [it, inserted] = videos.try_emplace(video, Pending{std::string(fields[1]), label, {}});
    if (inserted) order.push_back(video);
    Pending& p = it->second;
    if (p.subject != fields[1] || p.label != label) {
      throw DataError("line " + std::to_string(line_no) + ": video '" + video +
                      "' changes subject or label between frames");
    }
    if (!p.frames.emplace(frame, std::move(values)).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate frame " +
                      std::to_string(frame) + " for video '" + video + "'");
    }
    max_label = std::max(max_label, label);
  }

  Dataset ds;
  ds.dim = dim == 0 ? 1 : dim;
  ds.class_names = class_names.empty() ? default_class_names(order.empty() ? 1 : max_label + 1)
                                       : class_names;
  ds.classes = ds.class_names.size();
  for (const auto& id : order) {
    Pending& p = videos.at(id);
    std::vector<double> values;
    values.reserve(p.frames.size() * dim);
    for (auto& [idx, row] : p.frames) values.insert(values.end(), row.begin(), row.end());
    ds.instances.push_back(
        VideoInstance{id, p.subject, p.label, Matrix(p.frames.size(), dim, std::move(values))});
  }
  ds.validate();
  return ds;
}

Dataset import_feature_csv(const std::string& path, const std::vector<std::string>& class_names) {
  return parse_feature_csv(read_file_bytes(path), class_names);
}

std::string canonical_subject_key(std::string_view subject_id) {
  constexpr std::size_t kWidth = 20;
  std::string key;
  std::size_t i = 0;
  while (i < subject_id.size()) {
    if (subject_id[i] >= '0' && subject_id[i] <= '9') {
      std::size_t j = i;
      while (j < subject_id.size() && subject_id[j] >= '0' && subject_id[j] <= '9') ++j;
      const std::size_t len = j - i;
      if (len < kWidth) key.append(kWidth - len, '0');
      key.append(subject_id.substr(i, len));
      i = j;
    } else {
      key.push_back(subject_id[i++]);
    }
  }
  return key;
}

std::size_t FoldPlan::fold_of(const std::string& subject) const {
  auto it = assignment.find(subject);
  if (it == assignment.end()) throw ConfigError("subject '" + subject + "' is not in the fold plan");
  return it->second;
}

std::vector<std::string> FoldPlan::subjects_in(std::size_t fold) const {
  std::vector<std::pair<std::string, std::string>> keyed;
  for (const auto& [subject, f] : assignment) {
    if (f == fold) keyed.emplace_back(canonical_subject_key(subject), subject);
  }
  std::sort(keyed.begin(), keyed.end());
  std::vector<std::string> out;
  for (auto& [key, id] : keyed) out.push_back(std::move(id));
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(fold_count, 0);
  for (const auto& [subject, f] : assignment) ++sizes[f];
  return sizes;
}

FoldPlan build_folds(const Dataset& dataset, std::size_t fold_count) {
  if (fold_count == 0) throw ConfigError("fold count must be positive");
  const std::vector<std::string> subjects = dataset.subjects();
  if (subjects.size() < fold_count) {
    throw ConfigError("need at least " + std::to_string(fold_count) + " distinct subjects, found " +
                      std::to_string(subjects.size()));
  }
  FoldPlan plan;
  plan.fold_count = fold_count;
  for (std::size_t p = 0; p < subjects.size(); ++p) plan.assignment[subjects[p]] = p % fold_count;
  return plan;
}

Split split_for_fold(const Dataset& dataset, const FoldPlan& plan, std::size_t fold) {
  if (fold >= plan.fold_count) throw ConfigError("fold index out of range");
  Split split;
  for (std::size_t i = 0; i < dataset.instances.size(); ++i) {
    if (plan.fold_of(dataset.instances[i].subject_id) == fold) {
      split.test.push_back(i);
    } else {
      split.train.push_back(i);
    }
  }
  return split;
}

void SynthConfig::validate() const {
  if (videos_per_class == 0 || dim == 0 || classes == 0 || subjects == 0 || peaks_per_video == 0) {
    throw ConfigError("synthetic dataset counts must be positive");
  }
  if (min_frames == 0 || min_frames > max_frames) {
    throw ConfigError("frame range must satisfy 1 <= min_frames <= max_frames");
  }
  if (peaks_per_video > min_frames) {
    throw ConfigError("peaks_per_video cannot exceed min_frames");
  }
  if (!(signal >= 0.0) || !(noise >= 0.0) || !std::isfinite(signal) || !std::isfinite(noise)) {
    throw ConfigError("signal and noise magnitudes must be finite and non-negative");
  }
  if (classes > dim) {
    throw ConfigError("orthogonal class directions need classes <= dim (" +
                      std::to_string(classes) + " > " + std::to_string(dim) + ")");
  }
}

SynthDataset synth_generate_with_peaks(const SynthConfig& config) {
  config.validate();
  Rng rng = Rng::derive(config.seed, {kSynthStream});
  const std::size_t d = config.dim;
  const std::size_t c = config.classes;

  // Signed coordinate axes in random order: exactly orthogonal, exactly unit.
  std::vector<std::size_t> axes(d);
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  for (std::size_t i = d - 1; i > 0; --i) std::swap(axes[i], axes[rng.uniform_index(i + 1)]);
  Matrix directions = Matrix::zeros(c, d);
  for (std::size_t k = 0; k < c; ++k) directions(k, axes[k]) = rng.uniform01() < 0.5 ? -1.0 : 1.0;

  SynthDataset out{Dataset{}, directions, {}};
  Dataset& ds = out.dataset;
  ds.dim = d;
  ds.classes = c;
  ds.class_names = default_class_names(c);

  const std::size_t total = config.videos_per_class * c;
  for (std::size_t v = 0; v < total; ++v) {
    const std::size_t label = v % c;
    const std::size_t subject = (v / c) % config.subjects;
    const std::size_t n =
        config.min_frames + rng.uniform_index(config.max_frames - config.min_frames + 1);

    std::vector<std::size_t> peaks;
    if (config.terminal_peaks) {
      for (std::size_t p = n - config.peaks_per_video; p < n; ++p) peaks.push_back(p);
    } else {
      std::vector<std::size_t> pool(n);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      for (std::size_t p = 0; p < config.peaks_per_video; ++p) {
        std::swap(pool[p], pool[p + rng.uniform_index(n - p)]);
        peaks.push_back(pool[p]);
      }
      std::sort(peaks.begin(), peaks.end());
    }

    const double noise_scale = config.noise / std::sqrt(static_cast<double>(d));
    std::vector<double> values(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const bool is_peak = std::binary_search(peaks.begin(), peaks.end(), i);
      for (std::size_t j = 0; j < d; ++j) {
        double x = noise_scale * rng.normal();
        if (is_peak) x += config.signal * directions(label, j);
        values[i * d + j] = static_cast<double>(static_cast<float>(x));
      }
    }

    char vid[32];
    char sid[32];
    std::snprintf(vid, sizeof vid, "V%05zu", v);
    std::snprintf(sid, sizeof sid, "S%03zu", subject);
    ds.instances.push_back(VideoInstance{vid, sid, label, Matrix(n, d, std::move(values))});
    out.peaks.push_back(std::move(peaks));
  }
  return out;
}

Dataset synth_generate(const SynthConfig& config) {
  return synth_generate_with_peaks(config).dataset;
}

}  // namespace fan
