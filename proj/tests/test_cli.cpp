#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "cli.hpp"
#include "fan/binary_io.hpp"
#include "fan/datastore.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
  json parsed() const { return json::parse(out); }
};

Outcome run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = fan::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fan_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string make_data(const std::string& name, std::vector<std::string> extra = {}) {
    const std::vector<std::pair<std::string, std::string>> defaults{
        {"--videos-per-class", "6"}, {"--dim", "4"},        {"--classes", "3"},
        {"--subjects", "4"},         {"--min-frames", "3"}, {"--max-frames", "5"}};
    std::vector<std::string> args{"synth", "--out", path(name)};
    for (const auto& [flag, value] : defaults) {
      if (std::find(extra.begin(), extra.end(), flag) == extra.end()) {
        args.push_back(flag);
        args.push_back(value);
      }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    const Outcome o = run_cli(args);
    EXPECT_EQ(o.code, 0) << o.err;
    return path(name);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SynthIsLoadableAndReproducible) {
  const auto a = make_data("a.fanf", {"--seed", "3"});
  const auto b = make_data("b.fanf", {"--seed", "3"});
  EXPECT_EQ(fan::read_file_bytes(a), fan::read_file_bytes(b));
  const fan::Dataset ds = fan::load_feature_file(a);
  EXPECT_EQ(ds.instances.size(), 18u);
  EXPECT_EQ(ds.dim, 4u);
}

TEST_F(CliTest, SynthRejectsMoreClassesThanDimensions) {
  const Outcome o = run_cli({"synth", "--out", path("x.fanf"), "--dim", "2", "--classes", "3"});
  EXPECT_EQ(o.code, fan::cli::kExitData);
  EXPECT_FALSE(fs::exists(path("x.fanf")));
}

TEST_F(CliTest, TrainPresetsSetEpochCounts) {
  const auto data = make_data("d.fanf");
  const Outcome ck = run_cli({"train", "--data", data, "--preset", "ck+", "--out", path("m.fanp")});
  ASSERT_EQ(ck.code, 0) << ck.err;
  EXPECT_TRUE(fs::exists(path("m.fanp")));
  EXPECT_EQ(ck.parsed()["epochs"], 60);
  const std::string log = fan::read_file_bytes(path("m.fanp.history.tsv"));
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 61);

  const Outcome afew = run_cli({"train", "--data", data, "--preset", "afew", "--out",
                                path("a.fanp"), "--history", path("a.tsv")});
  ASSERT_EQ(afew.code, 0) << afew.err;
  EXPECT_EQ(afew.parsed()["epochs"], 180);
  EXPECT_TRUE(fs::exists(path("a.tsv")));
}

TEST_F(CliTest, TrainMissingDataLeavesNoOutputs) {
  const Outcome o =
      run_cli({"train", "--data", path("missing.fanf"), "--out", path("m.fanp")});
  EXPECT_NE(o.code, 0);
  EXPECT_FALSE(fs::exists(path("m.fanp")));
  EXPECT_FALSE(fs::exists(path("m.fanp.history.tsv")));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, fan::cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--data", "x"}).code, fan::cli::kExitUsage);
  EXPECT_EQ(run_cli({"bogus"}).code, fan::cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, fan::cli::kExitOk);
}

TEST_F(CliTest, EvalReproducesTrainingAccuracy) {
  const auto data = make_data("d.fanf");
  const Outcome t = run_cli({"train", "--data", data, "--out", path("s.fanp"), "--mode",
                             "self-only", "--epochs", "5"});
  ASSERT_EQ(t.code, 0) << t.err;
  const Outcome e = run_cli({"eval", "--model", path("s.fanp"), "--data", data, "--dump",
                             path("pred.csv")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.parsed()["accuracy"], t.parsed()["train_eval_accuracy"]);
  EXPECT_EQ(e.parsed()["mode"], "self-only");
  EXPECT_TRUE(fs::exists(path("pred.csv")));
}

TEST_F(CliTest, EvalDimensionMismatchIsDataError) {
  const auto data = make_data("d.fanf");
  const auto wide = make_data("w.fanf", {"--dim", "5"});
  ASSERT_EQ(run_cli({"train", "--data", data, "--out", path("m.fanp"), "--epochs", "1"}).code, 0);
  const Outcome e = run_cli({"eval", "--model", path("m.fanp"), "--data", wide});
  EXPECT_EQ(e.code, fan::cli::kExitData);
}

TEST_F(CliTest, CrossValidationReport) {
  const auto data = make_data("d.fanf");
  const Outcome o = run_cli({"cv", "--data", data, "--folds", "4", "--epochs", "2"});
  ASSERT_EQ(o.code, 0) << o.err;
  const json j = o.parsed();
  ASSERT_EQ(j["folds"].size(), 4u);
  std::size_t correct = 0, total = 0;
  for (const auto& f : j["folds"]) {
    EXPECT_TRUE(f["subject_disjoint"].get<bool>());
    const auto& conf = f["report"]["confusion"];
    for (std::size_t r = 0; r < conf.size(); ++r) {
      for (std::size_t c = 0; c < conf[r].size(); ++c) {
        total += conf[r][c].get<std::size_t>();
        if (r == c) correct += conf[r][c].get<std::size_t>();
      }
    }
  }
  EXPECT_EQ(total, 18u);
  EXPECT_DOUBLE_EQ(j["pooled"]["accuracy"].get<double>(), static_cast<double>(correct) / total);

  const Outcome sf = run_cli({"cv", "--data", data, "--folds", "4", "--epochs", "2", "--method",
                              "score-fusion"});
  EXPECT_EQ(sf.code, 0) << sf.err;
  EXPECT_EQ(run_cli({"cv", "--data", data, "--folds", "10"}).code, fan::cli::kExitData);
}

TEST_F(CliTest, Gradcheck) {
  const Outcome def = run_cli({"gradcheck"});
  EXPECT_EQ(def.code, 0) << def.err;
  EXPECT_EQ(def.parsed()["cases"].size(), 20u);
  const std::vector<std::string> args{"gradcheck", "--configs", "1", "--d", "4", "--n", "2",
                                      "--c",       "3",         "--seed", "1"};
  const Outcome a = run_cli(args);
  const Outcome b = run_cli(args);
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  auto corrupt = args;
  corrupt.push_back("--corrupt");
  EXPECT_NE(run_cli(corrupt).code, 0);
}

TEST_F(CliTest, VisualizeWritesCsvAndJson) {
  const auto data = make_data("d.fanf");
  ASSERT_EQ(run_cli({"train", "--data", data, "--out", path("m.fanp"), "--epochs", "1"}).code, 0);
  const Outcome o =
      run_cli({"visualize", "--model", path("m.fanp"), "--data", data, "--out", path("att")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(path("att.csv")));
  const json j = json::parse(fan::read_file_bytes(path("att.json")));
  EXPECT_EQ(j["videos"].size(), 18u);
}

TEST_F(CliTest, ImportCsv) {
  fan::write_file_bytes(path("f.csv"), "v1,s1,0,0,1.5,2\nv1,s1,0,1,3,4\nv2,s2,1,0,5,6\n");
  const Outcome o = run_cli({"import-csv", "--csv", path("f.csv"), "--out", path("f.fanf"),
                             "--class-names", "calm,happy"});
  ASSERT_EQ(o.code, 0) << o.err;
  const fan::Dataset ds = fan::load_feature_file(path("f.fanf"));
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"calm", "happy"}));
  EXPECT_EQ(ds.instances[0].frames(), 2u);

  fan::write_file_bytes(path("bad.csv"), "v1,s1,0,0,nan\n");
  EXPECT_EQ(run_cli({"import-csv", "--csv", path("bad.csv"), "--out", path("bad.fanf")}).code,
            fan::cli::kExitData);
}

TEST_F(CliTest, NoSignalTrainsToChance) {
  const auto data = make_data("n.fanf", {"--signal", "0", "--videos-per-class", "40", "--subjects",
                                         "8"});
  const Outcome o = run_cli({"cv", "--data", data, "--folds", "4", "--epochs", "10"});
  ASSERT_EQ(o.code, 0) << o.err;
  // 120 held-out videos over 3 classes: chance is 1/3 with a standard error near 0.043.
  EXPECT_NEAR(o.parsed()["pooled"]["accuracy"].get<double>(), 1.0 / 3.0, 0.17);
}
