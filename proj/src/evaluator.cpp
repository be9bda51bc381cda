#include "fan/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>

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

}  // namespace

void check_compatible(const FanParams& params, const Dataset& dataset) {
  if (params.dim() != dataset.dim || params.classes() != dataset.classes) {
    throw SchemaError("model shape (D=" + std::to_string(params.dim()) + ", C=" +
                      std::to_string(params.classes()) + ") does not match the dataset (D=" +
                      std::to_string(dataset.dim) + ", C=" + std::to_string(dataset.classes) + ")");
  }
}

nlohmann::json EvalReport::to_json() const {
  return nlohmann::json{{"accuracy", accuracy},
                        {"per_class_accuracy", per_class_accuracy},
                        {"confusion", confusion},
                        {"instances", instances},
                        {"correct", correct}};
}

// Fills accuracy, per-class accuracy and totals from the confusion matrix.
static void finalize_counts(EvalReport& rep) {
  const std::size_t classes = rep.confusion.size();
  rep.instances = 0;
  rep.correct = 0;
  rep.per_class_accuracy.assign(classes, 0.0);
  for (std::size_t k = 0; k < classes; ++k) {
    std::size_t row = 0;
    for (std::size_t v : rep.confusion[k]) row += v;
    rep.instances += row;
    rep.correct += rep.confusion[k][k];
    if (row > 0) rep.per_class_accuracy[k] = static_cast<double>(rep.confusion[k][k]) / row;
  }
  rep.accuracy = rep.instances ? static_cast<double>(rep.correct) / rep.instances : 0.0;
}

EvalReport make_report(std::size_t classes, std::span<const std::size_t> labels,
                       std::span<const std::size_t> predictions) {
  if (labels.size() != predictions.size()) throw DimensionError("label/prediction count mismatch");
  EvalReport rep;
  rep.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predictions[i] >= classes) throw IndexError("class out of range");
    ++rep.confusion[labels[i]][predictions[i]];
  }
  rep.predictions.assign(predictions.begin(), predictions.end());
  finalize_counts(rep);
  return rep;
}

EvalReport pool_reports(std::size_t classes, std::span<const EvalReport> reports) {
  EvalReport pooled;
  pooled.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (const EvalReport& r : reports) {
    if (r.confusion.size() != classes) throw DimensionError("reports disagree on class count");
    for (std::size_t a = 0; a < classes; ++a) {
      for (std::size_t b = 0; b < classes; ++b) pooled.confusion[a][b] += r.confusion[a].at(b);
    }
    pooled.indices.insert(pooled.indices.end(), r.indices.begin(), r.indices.end());
    pooled.predictions.insert(pooled.predictions.end(), r.predictions.begin(), r.predictions.end());
  }
  finalize_counts(pooled);
  return pooled;
}

EvalReport evaluate(const FanParams& params, const Dataset& dataset,
                    std::span<const std::size_t> indices, const EvalOptions& options) {
  check_compatible(params, dataset);
  check_indices(dataset, indices);
  std::vector<std::size_t> preds(indices.size());
  parallel_for(indices.size(), options.workers, [&](std::size_t t) {
    const VideoInstance& v = dataset.instances[indices[t]];
    if (options.frames == FrameMode::AllFrames) {
      preds[t] = predict(forward(v.features, params).logits);
    } else {
      Rng rng = Rng::derive(options.seed, {kEvalSampleStream, indices[t]});
      const auto frames = sample_training(v.frames(), options.k, rng);
      preds[t] = predict(forward(v.features.select_rows(frames), params).logits);
    }
  });
  std::vector<std::size_t> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) labels.push_back(dataset.instances[i].label);
  EvalReport rep = make_report(dataset.classes, labels, preds);
  rep.indices.assign(indices.begin(), indices.end());
  return rep;
}

EvalReport evaluate(const FanParams& params, const Dataset& dataset, const EvalOptions& options) {
  const auto idx = all_indices(dataset);
  return evaluate(params, dataset, idx, options);
}

std::vector<double> FrameClassifier::frame_logits(std::span<const double> frame) const {
  std::vector<double> z(weight.rows());
  for (std::size_t k = 0; k < weight.rows(); ++k) z[k] = dot(weight.row(k), frame) + bias[k];
  return z;
}

FrameClassifier train_frame_classifier(const Dataset& dataset,
                                       std::span<const std::size_t> train_indices,
                                       const TrainConfig& config) {
  config.validate();
  dataset.validate();
  if (train_indices.empty()) throw ConfigError("training set is empty");
  check_indices(dataset, train_indices);
  const std::size_t d = dataset.dim;
  const std::size_t c = dataset.classes;

  FrameClassifier clf{Matrix::zeros(c, d), Vector::zeros(c)};
  Rng init = Rng::derive(config.seed, {kInitStream});
  const double limit = std::sqrt(6.0 / static_cast<double>(d + c));
  for (double& w : clf.weight.span()) w = init.uniform(-limit, limit);

  Matrix vel_w = Matrix::zeros(c, d);
  Vector vel_b = Vector::zeros(c);
  Matrix grad_w = Matrix::zeros(c, d);
  Vector grad_b = Vector::zeros(c);

  std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
  for (std::size_t epoch = 0; epoch < config.total_epochs; ++epoch) {
    const double lr = lr_at(config.schedule, epoch);
    Rng shuffle_rng = Rng::derive(config.seed, {kShuffleStream, epoch});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);
    }
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::fill(grad_w.span().begin(), grad_w.span().end(), 0.0);
      std::fill(grad_b.span().begin(), grad_b.span().end(), 0.0);
      std::size_t examples = 0;
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t idx = order[start + b];
        const VideoInstance& v = dataset.instances[idx];
        for (std::size_t f : training_frames(v.frames(), config, epoch, idx)) {
          auto frame = v.features.row(f);
          const LossAndGrad ce = softmax_cross_entropy(clf.frame_logits(frame), v.label);
          for (std::size_t k = 0; k < c; ++k) {
            grad_b[k] += ce.grad[k];
            auto gw = grad_w.row(k);
            for (std::size_t j = 0; j < d; ++j) gw[j] += ce.grad[k] * frame[j];
          }
          ++examples;
        }
      }
      const double scale = 1.0 / static_cast<double>(examples);
      for (double& g : grad_w.span()) g *= scale;
      for (double& g : grad_b.span()) g *= scale;
      const ParamBlock blocks[] = {
          {clf.weight.span(), grad_w.span(), vel_w.span(), true},
          {clf.bias.span(), grad_b.span(), vel_b.span(), false},
      };
      sgd_update(blocks, lr, config.momentum, config.weight_decay);
    }
  }
  return clf;
}

std::vector<double> fused_scores(const FrameClassifier& clf, const Matrix& features,
                                 Fusion fusion) {
  if (features.cols() != clf.weight.cols()) throw DimensionError("frame dimension mismatch");
  std::vector<double> total(clf.weight.rows(), 0.0);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    std::vector<double> z = clf.frame_logits(features.row(i));
    if (fusion == Fusion::Probabilities) z = softmax(z);
    for (std::size_t k = 0; k < z.size(); ++k) total[k] += z[k];
  }
  return total;
}

EvalReport evaluate_score_fusion(const FrameClassifier& clf, const Dataset& dataset,
                                 std::span<const std::size_t> indices, Fusion fusion) {
  check_indices(dataset, indices);
  if (clf.weight.cols() != dataset.dim || clf.weight.rows() != dataset.classes) {
    throw SchemaError("frame classifier shape does not match the dataset");
  }
  std::vector<std::size_t> labels;
  std::vector<std::size_t> preds;
  for (std::size_t i : indices) {
    const VideoInstance& v = dataset.instances[i];
    labels.push_back(v.label);
    preds.push_back(predict(fused_scores(clf, v.features, fusion)));
  }
  EvalReport rep = make_report(dataset.classes, labels, preds);
  rep.indices.assign(indices.begin(), indices.end());
  return rep;
}

EvalReport score_fusion_baseline(const Dataset& dataset, std::span<const std::size_t> train_indices,
                                 std::span<const std::size_t> test_indices,
                                 const TrainConfig& config, Fusion fusion) {
  const FrameClassifier clf = train_frame_classifier(dataset, train_indices, config);
  return evaluate_score_fusion(clf, dataset, test_indices, fusion);
}

nlohmann::json CrossValidation::to_json() const {
  nlohmann::json folds_json = nlohmann::json::array();
  for (const FoldResult& f : folds) {
    std::set<std::string> train(f.train_subjects.begin(), f.train_subjects.end());
    bool disjoint = true;
    for (const auto& s : f.test_subjects) disjoint = disjoint && !train.count(s);
    folds_json.push_back({{"fold", f.fold},
                          {"train_subjects", f.train_subjects},
                          {"test_subjects", f.test_subjects},
                          {"subject_disjoint", disjoint},
                          {"report", f.report.to_json()}});
  }
  return nlohmann::json{{"folds", folds_json},
                        {"pooled", pooled.to_json()},
                        {"fold_mean_accuracy", fold_mean_accuracy}};
}

CrossValidation cross_validate(const Dataset& dataset, const TrainConfig& config,
                               const FoldPlan& plan, Method method, Fusion fusion) {
  dataset.validate();
  for (const auto& s : dataset.subjects()) plan.fold_of(s);

  CrossValidation cv;
  std::vector<EvalReport> reports;
  for (std::size_t fold = 0; fold < plan.fold_count; ++fold) {
    const Split split = split_for_fold(dataset, plan, fold);
    if (split.test.empty()) {
      throw ConfigError("fold " + std::to_string(fold) + " has no test instances");
    }
    if (split.train.empty()) {
      throw ConfigError("fold " + std::to_string(fold) + " leaves no training instances");
    }
    std::set<std::string> train_subjects;
    std::set<std::string> test_subjects;
    for (std::size_t i : split.train) train_subjects.insert(dataset.instances[i].subject_id);
    for (std::size_t i : split.test) test_subjects.insert(dataset.instances[i].subject_id);
    for (const auto& s : test_subjects) {
      if (train_subjects.count(s)) {
        throw std::logic_error("subject '" + s + "' appears in both splits of fold " +
                               std::to_string(fold));
      }
    }

    EvalReport rep;
    if (method == Method::Fan) {
      const TrainResult trained = train(dataset, split.train, config);
      EvalOptions opts;
      opts.workers = config.workers;
      rep = evaluate(trained.params, dataset, split.test, opts);
    } else {
      rep = score_fusion_baseline(dataset, split.train, split.test, config, fusion);
    }

    FoldResult result{fold, {}, plan.subjects_in(fold), rep};
    for (std::size_t other = 0; other < plan.fold_count; ++other) {
      if (other == fold) continue;
      for (auto& s : plan.subjects_in(other)) result.train_subjects.push_back(std::move(s));
    }
    cv.fold_mean_accuracy += rep.accuracy / static_cast<double>(plan.fold_count);
    reports.push_back(rep);
    cv.folds.push_back(std::move(result));
  }
  cv.pooled = pool_reports(dataset.classes, reports);
  return cv;
}

std::string AttentionExport::to_csv() const {
  std::string out = "videoId,frameIndex,alpha,finalWeight,label,prediction\n";
  for (const Video& v : videos) {
    for (std::size_t t = 0; t < v.frames.size(); ++t) {
      out += v.video_id + ',' + std::to_string(v.frames[t]) + ',' + format_double(v.alpha[t]) +
             ',' + format_double(v.final_weights[t]) + ',' + std::to_string(v.label) + ',' +
             std::to_string(v.prediction) + '\n';
    }
  }
  return out;
}

nlohmann::json AttentionExport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const Video& v : videos) {
    list.push_back({{"videoId", v.video_id},
                    {"label", v.label},
                    {"prediction", v.prediction},
                    {"frames", v.frames},
                    {"alpha", v.alpha},
                    {"finalWeight", v.final_weights}});
  }
  return nlohmann::json{{"videos", list}};
}

AttentionExport build_attention_export(const FanParams& params, const Dataset& dataset,
                                       std::span<const std::size_t> indices) {
  check_compatible(params, dataset);
  check_indices(dataset, indices);
  AttentionExport out;
  for (std::size_t i : indices) {
    const VideoInstance& v = dataset.instances[i];
    const ForwardResult fwd = forward(v.features, params);
    out.videos.push_back(AttentionExport::Video{v.video_id, v.label, predict(fwd.logits),
                                                frames_for_eval(v.frames()),
                                                fwd.trace.alpha.values(),
                                                fwd.trace.final_weights.values()});
  }
  return out;
}

AttentionExport export_attention(const FanParams& params, const Dataset& dataset,
                                 const std::string& csv_path, const std::string& json_path) {
  const auto idx = all_indices(dataset);
  AttentionExport out = build_attention_export(params, dataset, idx);
  write_file_bytes(csv_path, out.to_csv());
  write_file_bytes(json_path, out.to_json().dump(2) + "\n");
  return out;
}

}  // namespace fan
