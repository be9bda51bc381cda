#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fan/datastore.hpp"
#include "fan/fanhead.hpp"

namespace fan {

struct ScheduleStep {
  std::size_t epoch_start;
  double lr;
};

// Piecewise-constant learning rate; steps sorted by strictly increasing
// epoch_start, the first at epoch 0.
using Schedule = std::vector<ScheduleStep>;

void validate_schedule(const Schedule& schedule);
double lr_at(const Schedule& schedule, std::size_t epoch);

struct TrainConfig {
  std::size_t batch_size = 48;
  std::size_t frames_per_instance = 3;  // K
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Schedule schedule{{0, 0.1}};
  std::size_t total_epochs = 60;
  std::uint64_t seed = 7;
  Mode mode = Mode::Full;
  bool all_frames = false;        // use every frame instead of K segment samples
  bool freeze_attention = false;  // keep q0 and q1 at their initial values
  std::size_t workers = 1;

  void validate() const;
};

// "ck+":  lr 0.1, 0.02 from epoch 30, 60 epochs.
// "afew": lr 4e-6, 8e-7 from epoch 60, 1.6e-7 from epoch 120, 180 epochs.
// "synth-default": the ck+ schedule, used for the planted-peak synthetic task.
// All three use batches of 48, K = 3, momentum 0.9, weight decay 1e-4.
TrainConfig preset(std::string_view name);
std::vector<std::string> preset_names();

struct OptState {
  FanGradients velocity;

  static OptState zeros_like(const FanParams& params);
};

// One parameter tensor as seen by the optimizer.
struct ParamBlock {
  std::span<double> param;
  std::span<const double> grad;
  std::span<double> velocity;
  bool decay;
};

// g = grad + wd * param (decayed blocks only); v = momentum * v + g;
// param -= lr * v. Throws NumericError if any parameter becomes non-finite.
void sgd_update(std::span<const ParamBlock> blocks, double lr, double momentum,
                double weight_decay);

// Classifier bias is not decayed. With freeze_attention, q0 and q1 are skipped.
void sgd_step(FanParams& params, const FanGradients& grads, OptState& state, double lr,
              double momentum, double weight_decay, bool freeze_attention = false);

struct EpochRecord {
  std::size_t epoch;
  double lr;
  double loss;  // mean instance loss over the epoch
  double train_accuracy;
  std::optional<double> val_accuracy;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t steps = 0;  // optimizer steps applied

  // Tab-separated: header line, then one line per epoch. Doubles use
  // round-trip precision so equal histories give equal text.
  std::string to_log() const;
};

struct TrainResult {
  FanParams params;
  TrainHistory history;
};

// Trains a fresh FanParams (initialized from config.seed) on the given
// instances. Each epoch shuffles the instances; each batch averages the
// per-instance gradients in batch order and applies one sgd_step.
TrainResult train(const Dataset& dataset, std::span<const std::size_t> train_indices,
                  const TrainConfig& config, std::span<const std::size_t> val_indices = {});
TrainResult train(const Dataset& dataset, const TrainConfig& config);

// Continues training from the given parameters.
TrainResult train_from(FanParams init, const Dataset& dataset,
                       std::span<const std::size_t> train_indices, const TrainConfig& config,
                       std::span<const std::size_t> val_indices = {});

// Frame indices used for one training instance in one epoch.
std::vector<std::size_t> training_frames(std::size_t n, const TrainConfig& config,
                                         std::size_t epoch, std::size_t instance);

std::vector<std::size_t> all_indices(const Dataset& dataset);

// FANP, version 1, little-endian: "FANP" u32 version u32 D u32 C u32 mode,
// then every parameter as f64 in flatten() order.
inline constexpr std::string_view kParamMagic = "FANP";
inline constexpr std::uint32_t kParamVersion = 1;

std::string encode_checkpoint(const FanParams& params);
FanParams decode_checkpoint(std::string_view bytes);
void write_checkpoint(const FanParams& params, const std::string& path);
FanParams load_checkpoint(const std::string& path);

}  // namespace fan
