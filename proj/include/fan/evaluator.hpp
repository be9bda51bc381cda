#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fan/datastore.hpp"
#include "fan/fanhead.hpp"
#include "fan/trainer.hpp"

namespace fan {

enum class FrameMode { AllFrames, SampledK };

struct EvalOptions {
  FrameMode frames = FrameMode::AllFrames;
  std::size_t k = 3;        // SampledK only
  std::uint64_t seed = 0;   // SampledK only
  std::size_t workers = 1;
};

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // 0 for classes with no instances
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t instances = 0;
  std::size_t correct = 0;

  // Dataset indices that were evaluated and what each was predicted as.
  std::vector<std::size_t> indices;
  std::vector<std::size_t> predictions;

  // {"accuracy", "per_class_accuracy", "confusion", "instances", "correct"}
  nlohmann::json to_json() const;
};

// Builds a report from parallel label/prediction lists.
EvalReport make_report(std::size_t classes, std::span<const std::size_t> labels,
                       std::span<const std::size_t> predictions);

// Sums confusion matrices; accuracy is instance-weighted over all inputs.
EvalReport pool_reports(std::size_t classes, std::span<const EvalReport> reports);

EvalReport evaluate(const FanParams& params, const Dataset& dataset,
                    std::span<const std::size_t> indices, const EvalOptions& options = {});
EvalReport evaluate(const FanParams& params, const Dataset& dataset,
                    const EvalOptions& options = {});

enum class Method { Fan, ScoreFusion };
enum class Fusion { Logits, Probabilities };

// Per-frame affine classifier used by the score-fusion baseline.
struct FrameClassifier {
  Matrix weight;  // C x D
  Vector bias;    // C

  std::vector<double> frame_logits(std::span<const double> frame) const;
};

// Trains on individual frames: every training video contributes its K
// sampled frames per epoch (or all frames with config.all_frames), each as a
// separate example labelled with the video label. Batches hold
// config.batch_size videos; the loss is the mean over their frames.
FrameClassifier train_frame_classifier(const Dataset& dataset,
                                       std::span<const std::size_t> train_indices,
                                       const TrainConfig& config);

// Sum over frames of per-frame logits (or softmax probabilities).
std::vector<double> fused_scores(const FrameClassifier& clf, const Matrix& features,
                                 Fusion fusion = Fusion::Logits);

EvalReport evaluate_score_fusion(const FrameClassifier& clf, const Dataset& dataset,
                                 std::span<const std::size_t> indices,
                                 Fusion fusion = Fusion::Logits);

EvalReport score_fusion_baseline(const Dataset& dataset, std::span<const std::size_t> train_indices,
                                 std::span<const std::size_t> test_indices,
                                 const TrainConfig& config, Fusion fusion = Fusion::Logits);

struct FoldResult {
  std::size_t fold;
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;
  EvalReport report;
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  EvalReport pooled;  // instance-weighted over all folds
  double fold_mean_accuracy = 0.0;

  nlohmann::json to_json() const;
};

// Trains on out-of-fold subjects and tests on each fold in turn. Throws
// ConfigError for a fold without test instances and std::logic_error if a
// subject ever lands on both sides of a split.
CrossValidation cross_validate(const Dataset& dataset, const TrainConfig& config,
                               const FoldPlan& plan, Method method = Method::Fan,
                               Fusion fusion = Fusion::Logits);

struct AttentionExport {
  struct Video {
    std::string video_id;
    std::size_t label;
    std::size_t prediction;
    std::vector<std::size_t> frames;
    std::vector<double> alpha;
    std::vector<double> final_weights;
  };
  std::vector<Video> videos;

  // Header "videoId,frameIndex,alpha,finalWeight,label,prediction", one row per frame.
  std::string to_csv() const;
  // {"videos": [{"videoId","label","prediction","frames","alpha","finalWeight"}]}
  nlohmann::json to_json() const;
};

AttentionExport build_attention_export(const FanParams& params, const Dataset& dataset,
                                       std::span<const std::size_t> indices);

// Writes the CSV to csv_path and the JSON summary to json_path.
AttentionExport export_attention(const FanParams& params, const Dataset& dataset,
                                 const std::string& csv_path, const std::string& json_path);

// Raises SchemaError when the model and dataset disagree on D or C.
void check_compatible(const FanParams& params, const Dataset& dataset);

}  // namespace fan
