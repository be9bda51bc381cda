#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "fan/binary_io.hpp"
#include "fan/datastore.hpp"
#include "fan/errors.hpp"
#include "fan/evaluator.hpp"
#include "fan/trainer.hpp"

using namespace fan;
namespace fs = std::filesystem;

namespace {

Dataset small_synth(std::uint64_t seed = 3, std::size_t subjects = 6) {
  SynthConfig cfg;
  cfg.videos_per_class = 12;
  cfg.min_frames = 4;
  cfg.max_frames = 7;
  cfg.dim = 6;
  cfg.classes = 3;
  cfg.subjects = subjects;
  cfg.seed = seed;
  return synth_generate(cfg);
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.total_epochs = 3;
  return cfg;
}

}  // namespace

TEST(Evaluate, UniformLogitsPredictClassZero) {
  const Dataset ds = small_synth();
  const FanParams zero = FanParams::zeros(Mode::Full, ds.dim, ds.classes);
  const EvalReport rep = evaluate(zero, ds);
  std::size_t class0 = 0;
  for (const auto& v : ds.instances) class0 += v.label == 0;
  EXPECT_EQ(rep.accuracy, static_cast<double>(class0) / ds.instances.size());
  for (std::size_t p : rep.predictions) EXPECT_EQ(p, 0u);
}

TEST(Evaluate, SingleCorrectInstance) {
  Dataset ds;
  ds.dim = 1;
  ds.classes = 2;
  ds.class_names = {"a", "b"};
  ds.instances.push_back({"v", "s", 1, Matrix{{1.0}}});
  FanParams p = FanParams::zeros(Mode::SelfOnly, 1, 2);
  p.class_bias[1] = 1.0;
  const EvalReport rep = evaluate(p, ds);
  EXPECT_EQ(rep.accuracy, 1.0);
  EXPECT_EQ(rep.confusion, (std::vector<std::vector<std::size_t>>{{0, 0}, {0, 1}}));
}

TEST(Evaluate, ConfusionInvariants) {
  const Dataset ds = small_synth();
  const FanParams p = FanParams::initialize(Mode::Full, ds.dim, ds.classes, 4);
  const EvalReport rep = evaluate(p, ds);
  std::vector<std::size_t> per_class(ds.classes, 0);
  for (const auto& v : ds.instances) ++per_class[v.label];
  std::size_t trace = 0, total = 0;
  for (std::size_t k = 0; k < ds.classes; ++k) {
    const auto& row = rep.confusion[k];
    EXPECT_EQ(std::accumulate(row.begin(), row.end(), std::size_t{0}), per_class[k]);
    trace += row[k];
    total += per_class[k];
    EXPECT_DOUBLE_EQ(rep.per_class_accuracy[k], static_cast<double>(row[k]) / per_class[k]);
  }
  EXPECT_EQ(rep.correct, trace);
  EXPECT_EQ(rep.instances, total);
  EXPECT_EQ(rep.accuracy, static_cast<double>(trace) / total);
  const auto j = rep.to_json();
  for (const char* key : {"accuracy", "per_class_accuracy", "confusion", "instances", "correct"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(Evaluate, DeterministicAndWorkerInvariant) {
  const Dataset ds = small_synth();
  const FanParams p = FanParams::initialize(Mode::Full, ds.dim, ds.classes, 4);
  EvalOptions many;
  many.workers = 3;
  EXPECT_EQ(evaluate(p, ds).predictions, evaluate(p, ds, many).predictions);
  EvalOptions sampled;
  sampled.frames = FrameMode::SampledK;
  sampled.seed = 5;
  EXPECT_EQ(evaluate(p, ds, sampled).predictions, evaluate(p, ds, sampled).predictions);
}

TEST(Evaluate, FrameOrderInvariant) {
  Dataset ds = small_synth();
  const FanParams p = FanParams::initialize(Mode::Full, ds.dim, ds.classes, 4);
  const EvalReport base = evaluate(p, ds);
  for (auto& v : ds.instances) {
    std::vector<std::size_t> rev(v.frames());
    std::iota(rev.rbegin(), rev.rend(), std::size_t{0});
    v.features = v.features.select_rows(rev);
  }
  EXPECT_EQ(evaluate(p, ds).predictions, base.predictions);
}

TEST(Evaluate, ShapeMismatchIsSchemaError) {
  const Dataset ds = small_synth();
  EXPECT_THROW(evaluate(FanParams::zeros(Mode::Full, ds.dim + 1, ds.classes), ds), SchemaError);
  EXPECT_THROW(evaluate(FanParams::zeros(Mode::Full, ds.dim, ds.classes + 1), ds), SchemaError);
}

TEST(Reports, PooledIsInstanceWeighted) {
  const std::vector<std::size_t> l1{0, 0, 1, 1}, p1{0, 0, 1, 0};  // 3 / 4
  const std::vector<std::size_t> l2{1}, p2{0};                     // 0 / 1
  const std::vector<EvalReport> reps{make_report(2, l1, p1), make_report(2, l2, p2)};
  const EvalReport pooled = pool_reports(2, reps);
  EXPECT_EQ(pooled.accuracy, 3.0 / 5.0);
  EXPECT_NE(pooled.accuracy, (0.75 + 0.0) / 2);
  EXPECT_EQ(pooled.confusion, (std::vector<std::vector<std::size_t>>{{2, 0}, {2, 1}}));
}

TEST(CrossValidate, SubjectDisjointFolds) {
  const Dataset ds = small_synth(3, 6);
  const FoldPlan plan = build_folds(ds, 3);
  const CrossValidation cv = cross_validate(ds, quick_config(), plan);
  ASSERT_EQ(cv.folds.size(), 3u);
  std::size_t total = 0, correct = 0;
  double mean = 0;
  for (const auto& f : cv.folds) {
    const std::set<std::string> train(f.train_subjects.begin(), f.train_subjects.end());
    for (const auto& s : f.test_subjects) EXPECT_EQ(train.count(s), 0u);
    EXPECT_EQ(train.size() + f.test_subjects.size(), 6u);
    total += f.report.instances;
    correct += f.report.correct;
    mean += f.report.accuracy / 3;
  }
  EXPECT_EQ(total, ds.instances.size());
  EXPECT_EQ(cv.pooled.accuracy, static_cast<double>(correct) / total);
  EXPECT_DOUBLE_EQ(cv.fold_mean_accuracy, mean);
  const auto j = cv.to_json();
  EXPECT_TRUE(j.contains("pooled"));
  EXPECT_EQ(j["folds"].size(), 3u);
}

TEST(CrossValidate, TwoFoldsOnTwoSubjectsSwap) {
  const Dataset ds = small_synth(4, 2);
  const CrossValidation cv = cross_validate(ds, quick_config(), build_folds(ds, 2));
  ASSERT_EQ(cv.folds.size(), 2u);
  EXPECT_EQ(cv.folds[0].test_subjects, cv.folds[1].train_subjects);
  EXPECT_EQ(cv.folds[1].test_subjects, cv.folds[0].train_subjects);
}

TEST(CrossValidate, EmptyFoldIsConfigError) {
  const Dataset ds = small_synth(3, 2);
  FoldPlan plan = build_folds(ds, 2);
  plan.fold_count = 3;
  EXPECT_THROW(cross_validate(ds, quick_config(), plan), ConfigError);
}

TEST(ScoreFusion, SingleFrameVideosMatchFrameClassifier) {
  Dataset ds = small_synth();
  for (auto& v : ds.instances) v.features = v.features.select_rows(std::vector<std::size_t>{0});
  const auto idx = all_indices(ds);
  const FrameClassifier clf = train_frame_classifier(ds, idx, quick_config());
  const EvalReport rep = evaluate_score_fusion(clf, ds, idx);
  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    EXPECT_EQ(rep.predictions[i], predict(Vector(clf.frame_logits(ds.instances[i].features.row(0)))));
  }
}

TEST(ScoreFusion, RepeatedFramesKeepDecision) {
  const Dataset ds = small_synth();
  const FrameClassifier clf = train_frame_classifier(ds, all_indices(ds), quick_config());
  for (const auto& v : ds.instances) {
    const Matrix one = v.features.select_rows(std::vector<std::size_t>{0});
    const Matrix many = v.features.select_rows(std::vector<std::size_t>{0, 0, 0, 0, 0});
    for (Fusion f : {Fusion::Logits, Fusion::Probabilities}) {
      EXPECT_EQ(predict(Vector(fused_scores(clf, one, f))), predict(Vector(fused_scores(clf, many, f))));
    }
  }
}

TEST(ScoreFusion, LogitSumIsSumOfFrames) {
  const Dataset ds = small_synth();
  const FrameClassifier clf = train_frame_classifier(ds, all_indices(ds), quick_config());
  const Matrix& f = ds.instances[0].features;
  const auto fused = fused_scores(clf, f);
  for (std::size_t k = 0; k < ds.classes; ++k) {
    double s = 0;
    for (std::size_t i = 0; i < f.rows(); ++i) s += clf.frame_logits(f.row(i))[k];
    EXPECT_NEAR(fused[k], s, 1e-12);
  }
  const auto probs = fused_scores(clf, f, Fusion::Probabilities);
  EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), static_cast<double>(f.rows()), 1e-12);
}

TEST(ScoreFusion, BaselineLearnsSignal) {
  const Dataset ds = small_synth(6, 6);
  const FoldPlan plan = build_folds(ds, 3);
  const Split split = split_for_fold(ds, plan, 0);
  TrainConfig cfg = preset("synth-default");
  cfg.batch_size = 8;
  cfg.total_epochs = 15;
  const EvalReport rep = score_fusion_baseline(ds, split.train, split.test, cfg);
  EXPECT_EQ(rep.instances, split.test.size());
  EXPECT_GT(rep.accuracy, 1.0 / 3.0);
}

TEST(AttentionExport, ZeroParamsGiveUniformWeights) {
  const Dataset ds = small_synth();
  const AttentionExport ex =
      build_attention_export(FanParams::zeros(Mode::Full, ds.dim, ds.classes), ds, all_indices(ds));
  ASSERT_EQ(ex.videos.size(), ds.instances.size());
  for (const auto& v : ex.videos) {
    const double n = static_cast<double>(v.frames.size());
    for (double a : v.alpha) EXPECT_EQ(a, 0.5);
    for (double w : v.final_weights) EXPECT_NEAR(w, 1.0 / n, 1e-15);
  }
}

TEST(AttentionExport, SingleFrameAndWeightSums) {
  Dataset ds = small_synth();
  ds.instances[0].features = ds.instances[0].features.select_rows(std::vector<std::size_t>{2});
  const FanParams p = FanParams::initialize(Mode::Full, ds.dim, ds.classes, 9);
  const AttentionExport ex = build_attention_export(p, ds, all_indices(ds));
  EXPECT_EQ(ex.videos[0].final_weights, (std::vector<double>{1.0}));
  for (const auto& v : ex.videos) {
    EXPECT_EQ(v.alpha.size(), v.frames.size());
    EXPECT_EQ(v.final_weights.size(), v.frames.size());
    EXPECT_NEAR(std::accumulate(v.final_weights.begin(), v.final_weights.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(AttentionExport, CsvAndJsonSchema) {
  const Dataset ds = small_synth();
  const FanParams p = FanParams::initialize(Mode::SelfOnly, ds.dim, ds.classes, 9);
  const fs::path dir = fs::temp_directory_path() / "fan_export_test";
  fs::create_directories(dir);
  const auto csv = (dir / "att.csv").string();
  const auto json = (dir / "att.json").string();
  const AttentionExport ex = export_attention(p, ds, csv, json);

  const std::string text = read_file_bytes(csv);
  std::istringstream lines(text);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "videoId,frameIndex,alpha,finalWeight,label,prediction");
  std::size_t rows = 0, frames = 0;
  for (std::string line; std::getline(lines, line);) rows += !line.empty();
  for (const auto& v : ds.instances) frames += v.frames();
  EXPECT_EQ(rows, frames);

  const auto j = nlohmann::json::parse(read_file_bytes(json));
  ASSERT_EQ(j["videos"].size(), ds.instances.size());
  const auto& first = j["videos"][0];
  for (const char* key : {"videoId", "label", "prediction", "frames", "alpha", "finalWeight"}) {
    EXPECT_TRUE(first.contains(key)) << key;
  }
  EXPECT_EQ(first["videoId"], ds.instances[0].video_id);
  EXPECT_EQ(ex.to_json(), j);
}
