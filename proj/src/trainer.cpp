#include "fan/trainer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numeric>

#include "fan/binary_io.hpp"
#include "fan/errors.hpp"
#include "fan/parallel.hpp"
#include "fan/rng.hpp"
#include "fan/sampler.hpp"

namespace fan {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void check_indices(const Dataset& dataset, std::span<const std::size_t> indices) {
  for (std::size_t i : indices) {
    if (i >= dataset.instances.size()) throw IndexError("instance index out of range");
  }
}

double accuracy_on(const FanParams& params, const Dataset& dataset,
                   std::span<const std::size_t> indices) {
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const auto& v = dataset.instances[i];
    if (predict(forward(v.features, params).logits) == v.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

std::array<std::span<double>, 4> blocks_of(FanParams& p) {
  return {p.q0.span(), p.q1.span(), p.class_weight.span(), p.class_bias.span()};
}

std::array<std::span<const double>, 4> blocks_of(const FanParams& p) {
  return {p.q0.span(), p.q1.span(), p.class_weight.span(), p.class_bias.span()};
}

void accumulate(FanGradients& total, const FanGradients& g, double weight) {
  auto dst = blocks_of(total);
  auto src = blocks_of(g);
  for (std::size_t b = 0; b < dst.size(); ++b) {
    for (std::size_t j = 0; j < dst[b].size(); ++j) dst[b][j] += weight * src[b][j];
  }
}

void scale(FanGradients& g, double factor) {
  for (auto block : blocks_of(g)) {
    for (double& v : block) v *= factor;
  }
}

}  // namespace

void validate_schedule(const Schedule& schedule) {
  if (schedule.empty()) throw ConfigError("learning-rate schedule is empty");
  if (schedule.front().epoch_start != 0) throw ConfigError("schedule must start at epoch 0");
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    if (!(schedule[s].lr >= 0.0) || !std::isfinite(schedule[s].lr)) {
      throw ConfigError("learning rates must be finite and non-negative");
    }
    if (s > 0 && schedule[s].epoch_start <= schedule[s - 1].epoch_start) {
      throw ConfigError("schedule epochs must be strictly increasing");
    }
  }
}

double lr_at(const Schedule& schedule, std::size_t epoch) {
  validate_schedule(schedule);
  double lr = schedule.front().lr;
  for (const auto& step : schedule) {
    if (step.epoch_start <= epoch) lr = step.lr;
  }
  return lr;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (frames_per_instance == 0) throw ConfigError("K must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  validate_schedule(schedule);
}

TrainConfig preset(std::string_view name) {
  TrainConfig cfg;
  if (name == "ck+") {
    cfg.schedule = {{0, 0.1}, {30, 0.02}};
    cfg.total_epochs = 60;
  } else if (name == "afew") {
    cfg.schedule = {{0, 4e-6}, {60, 8e-7}, {120, 1.6e-7}};
    cfg.total_epochs = 180;
  } else if (name == "synth-default") {
    cfg.schedule = {{0, 0.1}, {30, 0.02}};
    cfg.total_epochs = 60;
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return cfg;
}

std::vector<std::string> preset_names() { return {"ck+", "afew", "synth-default"}; }

OptState OptState::zeros_like(const FanParams& params) {
  return OptState{FanParams::zeros(params.mode, params.dim(), params.classes())};
}

void sgd_update(std::span<const ParamBlock> blocks, double lr, double momentum,
                double weight_decay) {
  for (const ParamBlock& b : blocks) {
    if (b.param.size() != b.grad.size() || b.param.size() != b.velocity.size()) {
      throw DimensionError("optimizer block shapes disagree");
    }
    const double wd = b.decay ? weight_decay : 0.0;
    for (std::size_t j = 0; j < b.param.size(); ++j) {
      const double g = b.grad[j] + wd * b.param[j];
      b.velocity[j] = momentum * b.velocity[j] + g;
      b.param[j] -= lr * b.velocity[j];
    }
    if (!all_finite(b.param) || !all_finite(b.velocity)) {
      throw NumericError("optimizer step produced a non-finite parameter");
    }
  }
}

void sgd_step(FanParams& params, const FanGradients& grads, OptState& state, double lr,
              double momentum, double weight_decay, bool freeze_attention) {
  params.validate();
  FanGradients& v = state.velocity;
  if (grads.mode != params.mode || v.mode != params.mode || grads.dim() != params.dim() ||
      grads.classes() != params.classes() || v.dim() != params.dim() ||
      v.classes() != params.classes()) {
    throw DimensionError("gradient or optimizer state shape differs from parameters");
  }
  std::vector<ParamBlock> blocks;
  if (!freeze_attention) {
    blocks.push_back({params.q0.span(), grads.q0.span(), v.q0.span(), true});
    blocks.push_back({params.q1.span(), grads.q1.span(), v.q1.span(), true});
  }
  blocks.push_back({params.class_weight.span(), grads.class_weight.span(), v.class_weight.span(), true});
  blocks.push_back({params.class_bias.span(), grads.class_bias.span(), v.class_bias.span(), false});
  sgd_update(blocks, lr, momentum, weight_decay);
}

std::string TrainHistory::to_log() const {
  std::string out = "epoch\tlr\tloss\ttrain_acc\tval_acc\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + '\t' + format_double(e.lr) + '\t' + format_double(e.loss) +
           '\t' + format_double(e.train_accuracy) + '\t' +
           (e.val_accuracy ? format_double(*e.val_accuracy) : std::string("-")) + '\n';
  }
  return out;
}

std::vector<std::size_t> training_frames(std::size_t n, const TrainConfig& config,
                                         std::size_t epoch, std::size_t instance) {
  if (config.all_frames) return frames_for_eval(n);
  Rng rng = Rng::derive(config.seed, {kSampleStream, epoch, instance});
  return sample_training(n, config.frames_per_instance, rng);
}

std::vector<std::size_t> all_indices(const Dataset& dataset) {
  std::vector<std::size_t> idx(dataset.instances.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

TrainResult train_from(FanParams params, const Dataset& dataset,
                       std::span<const std::size_t> train_indices, const TrainConfig& config,
                       std::span<const std::size_t> val_indices) {
  config.validate();
  dataset.validate();
  params.validate();
  if (params.mode != config.mode) throw ConfigError("initial parameters use a different mode");
  if (params.dim() != dataset.dim || params.classes() != dataset.classes) {
    throw SchemaError("model shape (D=" + std::to_string(params.dim()) + ", C=" +
                      std::to_string(params.classes()) + ") does not match the dataset (D=" +
                      std::to_string(dataset.dim) + ", C=" + std::to_string(dataset.classes) + ")");
  }
  if (train_indices.empty()) throw ConfigError("training set is empty");
  check_indices(dataset, train_indices);
  check_indices(dataset, val_indices);

  OptState state = OptState::zeros_like(params);
  TrainHistory history;
  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  std::vector<std::optional<BackwardResult>> slots;

  for (std::size_t epoch = 0; epoch < config.total_epochs; ++epoch) {
    const double lr = lr_at(config.schedule, epoch);
    std::vector<std::size_t> shuffled = order;
    Rng shuffle_rng = Rng::derive(config.seed, {kShuffleStream, epoch});
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) {
      std::swap(shuffled[i], shuffled[shuffle_rng.uniform_index(i + 1)]);
    }

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < shuffled.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, shuffled.size() - start);
      slots.assign(count, std::nullopt);
      parallel_for(count, config.workers, [&](std::size_t b) {
        const std::size_t idx = shuffled[start + b];
        const VideoInstance& v = dataset.instances[idx];
        const auto frames = training_frames(v.frames(), config, epoch, idx);
        slots[b] = backward(v.features.select_rows(frames), params, v.label);
      });

      // Fixed reduction order: batch position.
      FanGradients total = FanParams::zeros(params.mode, params.dim(), params.classes());
      for (std::size_t b = 0; b < count; ++b) {
        const BackwardResult& r = *slots[b];
        loss_sum += r.loss;
        if (predict(r.logits) == dataset.instances[shuffled[start + b]].label) ++correct;
        accumulate(total, r.grads, 1.0);
      }
      scale(total, 1.0 / static_cast<double>(count));
      sgd_step(params, total, state, lr, config.momentum, config.weight_decay,
               config.freeze_attention);
      ++history.steps;
    }

    EpochRecord record{epoch, lr, loss_sum / static_cast<double>(shuffled.size()),
                       static_cast<double>(correct) / static_cast<double>(shuffled.size()),
                       std::nullopt};
    if (!val_indices.empty()) record.val_accuracy = accuracy_on(params, dataset, val_indices);
    history.epochs.push_back(record);
  }
  return TrainResult{std::move(params), std::move(history)};
}

TrainResult train(const Dataset& dataset, std::span<const std::size_t> train_indices,
                  const TrainConfig& config, std::span<const std::size_t> val_indices) {
  dataset.validate();
  return train_from(FanParams::initialize(config.mode, dataset.dim, dataset.classes, config.seed),
                    dataset, train_indices, config, val_indices);
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  const auto idx = all_indices(dataset);
  return train(dataset, idx, config);
}

std::string encode_checkpoint(const FanParams& params) {
  params.validate();
  ByteWriter w;
  w.raw(kParamMagic);
  w.u32(kParamVersion);
  w.u32(static_cast<std::uint32_t>(params.dim()));
  w.u32(static_cast<std::uint32_t>(params.classes()));
  w.u32(static_cast<std::uint32_t>(params.mode));
  const Vector flat = flatten(params);
  for (double v : flat.values()) w.f64(v);
  return w.take();
}

FanParams decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kParamMagic.size() || r.raw(kParamMagic.size(), "magic") != kParamMagic) {
    throw FormatError("not a FANP checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kParamVersion) {
    throw FormatError("unsupported FANP version " + std::to_string(version));
  }
  const std::size_t dim = r.u32("feature dimension");
  const std::size_t classes = r.u32("class count");
  const std::uint32_t mode_tag = r.u32("mode");
  if (dim == 0 || classes == 0) throw SchemaError("FANP header declares an empty shape");
  if (mode_tag > 1) throw FormatError("unknown FANP mode tag " + std::to_string(mode_tag));
  const Mode mode = static_cast<Mode>(mode_tag);

  const std::size_t count = parameter_count(mode, dim, classes);
  if (r.remaining() != count * sizeof(double)) {
    throw SchemaError("FANP payload has " + std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(count * sizeof(double)));
  }
  std::vector<double> flat(count);
  for (double& v : flat) {
    v = r.f64("parameters");
    if (!std::isfinite(v)) throw DataError("FANP checkpoint contains a non-finite parameter");
  }
  return unflatten(Vector(std::move(flat)), mode, dim, classes);
}

void write_checkpoint(const FanParams& params, const std::string& path) {
  write_file_bytes(path, encode_checkpoint(params));
}

FanParams load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace fan
