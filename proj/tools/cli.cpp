#include "cli.hpp"

#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "fan/binary_io.hpp"
#include "fan/datastore.hpp"
#include "fan/errors.hpp"
#include "fan/evaluator.hpp"
#include "fan/gradcheck.hpp"
#include "fan/trainer.hpp"

namespace fan::cli {

namespace {

using nlohmann::json;

struct TrainOverrides {
  std::string preset = "synth-default";
  std::string mode = "full";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> k;
  std::optional<double> momentum;
  std::optional<double> weight_decay;
  bool all_frames = false;
  std::size_t workers = 1;

  TrainConfig resolve() const {
    TrainConfig cfg = fan::preset(preset);
    cfg.mode = parse_mode(mode);
    if (seed) cfg.seed = *seed;
    if (epochs) cfg.total_epochs = *epochs;
    if (lr) cfg.schedule = {{0, *lr}};
    if (batch_size) cfg.batch_size = *batch_size;
    if (k) cfg.frames_per_instance = *k;
    if (momentum) cfg.momentum = *momentum;
    if (weight_decay) cfg.weight_decay = *weight_decay;
    cfg.all_frames = all_frames;
    cfg.workers = workers;
    cfg.validate();
    return cfg;
  }
};

void add_train_options(CLI::App* cmd, TrainOverrides& o) {
  cmd->add_option("--preset", o.preset, "Hyperparameter preset")
      ->check(CLI::IsMember({"ck+", "afew", "synth-default"}));
  cmd->add_option("--mode", o.mode, "full or self-only")
      ->check(CLI::IsMember({"full", "self-only"}));
  cmd->add_option("--seed", o.seed, "Seed for initialization, shuffling and sampling");
  cmd->add_option("--epochs", o.epochs, "Override the preset's epoch count");
  cmd->add_option("--lr", o.lr, "Constant learning rate instead of the preset schedule");
  cmd->add_option("--batch-size", o.batch_size, "Instances per batch");
  cmd->add_option("--k", o.k, "Frames sampled per instance");
  cmd->add_option("--momentum", o.momentum);
  cmd->add_option("--weight-decay", o.weight_decay);
  cmd->add_flag("--all-frames", o.all_frames, "Train on every frame instead of K samples");
  cmd->add_option("--workers", o.workers, "Threads for per-instance gradients")
      ->check(CLI::PositiveNumber);
}

void print(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

int cmd_synth(const SynthConfig& cfg, const std::string& path, std::ostream& out) {
  const Dataset ds = synth_generate(cfg);
  write_feature_file(ds, path);
  std::size_t frames = 0;
  for (const auto& v : ds.instances) frames += v.frames();
  print(out, {{"path", path},
              {"instances", ds.instances.size()},
              {"frames", frames},
              {"dim", ds.dim},
              {"classes", ds.classes},
              {"subjects", ds.subjects().size()},
              {"seed", cfg.seed}});
  return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& out_path,
              std::optional<std::string> history_path, std::optional<std::string> val_path,
              const TrainOverrides& o, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = o.resolve();
  const Dataset ds = load_feature_file(data_path);
  std::optional<Dataset> val;
  if (val_path) {
    val = load_feature_file(*val_path);
    if (val->dim != ds.dim || val->classes != ds.classes) {
      throw SchemaError("validation data shape differs from training data");
    }
  }
  err << "training " << to_string(cfg.mode) << " model on " << ds.instances.size()
      << " videos for " << cfg.total_epochs << " epochs\n";

  const auto idx = all_indices(ds);
  TrainResult result = train(ds, idx, cfg);
  json summary = {{"epochs", result.history.epochs.size()},
                  {"steps", result.history.steps},
                  {"mode", to_string(cfg.mode)},
                  {"checkpoint", out_path}};
  if (!result.history.epochs.empty()) {
    summary["final_loss"] = result.history.epochs.back().loss;
    summary["final_train_accuracy"] = result.history.epochs.back().train_accuracy;
  }
  // Accuracy of the final model on the training data with all frames; cmd_eval
  // on the same checkpoint and data reproduces it.
  summary["train_eval_accuracy"] = evaluate(result.params, ds).accuracy;
  if (val) {
    const double acc = evaluate(result.params, *val).accuracy;
    summary["val_accuracy"] = acc;
    if (!result.history.epochs.empty()) result.history.epochs.back().val_accuracy = acc;
  }
  for (const auto& e : result.history.epochs) {
    err << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss << " acc "
        << e.train_accuracy << '\n';
  }

  const std::string hist = history_path.value_or(out_path + ".history.tsv");
  write_checkpoint(result.params, out_path);
  write_file_bytes(hist, result.history.to_log());
  summary["history"] = hist;
  print(out, summary);
  return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             const std::string& frames, std::size_t k, std::uint64_t seed, std::size_t workers,
             std::optional<std::string> dump, std::ostream& out) {
  const FanParams params = load_checkpoint(model_path);
  const Dataset ds = load_feature_file(data_path);
  check_compatible(params, ds);
  EvalOptions opts;
  opts.frames = frames == "sampled" ? FrameMode::SampledK : FrameMode::AllFrames;
  opts.k = k;
  opts.seed = seed;
  opts.workers = workers;
  const EvalReport rep = evaluate(params, ds, opts);
  if (dump) {
    std::string csv = "videoId,label,prediction\n";
    for (std::size_t t = 0; t < rep.indices.size(); ++t) {
      const auto& v = ds.instances[rep.indices[t]];
      csv += v.video_id + ',' + std::to_string(v.label) + ',' + std::to_string(rep.predictions[t]) +
             '\n';
    }
    write_file_bytes(*dump, csv);
  }
  json j = rep.to_json();
  j["mode"] = to_string(params.mode);
  print(out, j);
  return kExitOk;
}

int cmd_cv(const std::string& data_path, std::size_t folds, const std::string& method,
           const std::string& fusion, const TrainOverrides& o, std::ostream& out,
           std::ostream& err) {
  const TrainConfig cfg = o.resolve();
  const Dataset ds = load_feature_file(data_path);
  const FoldPlan plan = build_folds(ds, folds);
  err << "cross-validating over " << folds << " folds, " << ds.subjects().size() << " subjects\n";
  const CrossValidation cv =
      cross_validate(ds, cfg, plan, method == "score-fusion" ? Method::ScoreFusion : Method::Fan,
                     fusion == "probabilities" ? Fusion::Probabilities : Fusion::Logits);
  json j = cv.to_json();
  j["method"] = method;
  j["mode"] = to_string(cfg.mode);
  print(out, j);
  return kExitOk;
}

struct GradcheckArgs {
  std::size_t configs = 20;
  std::optional<std::size_t> dim;
  std::optional<std::size_t> frames;
  std::optional<std::size_t> classes;
  std::optional<std::string> mode;
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tolerance = 1e-4;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<GradcheckCase> cases = default_gradcheck_cases(a.configs, a.seed);
  for (auto& c : cases) {
    if (a.dim) c.dim = *a.dim;
    if (a.frames) c.frames = *a.frames;
    if (a.classes) c.classes = *a.classes;
    if (a.mode) c.mode = parse_mode(*a.mode);
  }
  json list = json::array();
  bool all_passed = true;
  for (const auto& c : cases) {
    const GradcheckResult r = check_gradients(c, a.eps, a.tolerance, a.corrupt);
    list.push_back({{"mode", to_string(c.mode)},
                    {"dim", c.dim},
                    {"frames", c.frames},
                    {"classes", c.classes},
                    {"seed", c.seed},
                    {"max_relative_error", r.max_relative_error},
                    {"passed", r.passed}});
    if (!r.passed) {
      all_passed = false;
      err << "gradient mismatch (mode " << to_string(c.mode) << ", D=" << c.dim
          << ", n=" << c.frames << ", C=" << c.classes << "), coordinates:";
      for (std::size_t j : r.offending) err << ' ' << j;
      err << '\n';
    }
  }
  print(out, {{"cases", list}, {"tolerance", a.tolerance}, {"passed", all_passed}});
  return all_passed ? kExitOk : kExitNumeric;
}

int cmd_visualize(const std::string& model_path, const std::string& data_path,
                  const std::string& prefix, std::ostream& out) {
  const FanParams params = load_checkpoint(model_path);
  const Dataset ds = load_feature_file(data_path);
  const std::string csv = prefix + ".csv";
  const std::string js = prefix + ".json";
  const AttentionExport ex = export_attention(params, ds, csv, js);
  print(out, {{"csv", csv}, {"json", js}, {"videos", ex.videos.size()}});
  return kExitOk;
}

int cmd_import_csv(const std::string& csv_path, const std::string& out_path,
                   const std::vector<std::string>& names, std::ostream& out) {
  const Dataset ds = import_feature_csv(csv_path, names);
  write_feature_file(ds, out_path);
  print(out, {{"path", out_path},
              {"instances", ds.instances.size()},
              {"dim", ds.dim},
              {"classes", ds.classes}});
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frame attention aggregation: training, evaluation and diagnostics", "fan"};
  app.require_subcommand(1);

  SynthConfig synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-peak synthetic FANF file");
  synth_cmd->add_option("--out", synth_out, "Output FANF path")->required();
  synth_cmd->add_option("--videos-per-class", synth.videos_per_class);
  synth_cmd->add_option("--min-frames", synth.min_frames);
  synth_cmd->add_option("--max-frames", synth.max_frames);
  synth_cmd->add_option("--dim", synth.dim);
  synth_cmd->add_option("--classes", synth.classes);
  synth_cmd->add_option("--peaks", synth.peaks_per_video);
  synth_cmd->add_option("--signal", synth.signal);
  synth_cmd->add_option("--noise", synth.noise);
  synth_cmd->add_option("--subjects", synth.subjects);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_flag("--terminal-peaks", synth.terminal_peaks,
                      "Place peaks at the end of each video");

  std::string csv_in;
  std::string csv_out;
  std::vector<std::string> class_names;
  auto* import_cmd = app.add_subcommand("import-csv", "Convert a per-frame CSV file to FANF");
  import_cmd->add_option("--csv", csv_in)->required();
  import_cmd->add_option("--out", csv_out)->required();
  import_cmd->add_option("--class-names", class_names, "Class names in label order")
      ->delimiter(',');

  TrainOverrides train_opts;
  std::string train_data;
  std::string train_out;
  std::optional<std::string> train_history;
  std::optional<std::string> train_val;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a FANP checkpoint");
  train_cmd->add_option("--data", train_data, "Training FANF file")->required();
  train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
  train_cmd->add_option("--history", train_history, "History log (default <out>.history.tsv)");
  train_cmd->add_option("--val-data", train_val, "Optional FANF file for validation accuracy");
  add_train_options(train_cmd, train_opts);

  std::string eval_model;
  std::string eval_data;
  std::string eval_frames = "all";
  std::size_t eval_k = 3;
  std::uint64_t eval_seed = 0;
  std::size_t eval_workers = 1;
  std::optional<std::string> eval_dump;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a FANF file");
  eval_cmd->add_option("--model", eval_model)->required();
  eval_cmd->add_option("--data", eval_data)->required();
  eval_cmd->add_option("--frames", eval_frames, "all or sampled")
      ->check(CLI::IsMember({"all", "sampled"}));
  eval_cmd->add_option("--k", eval_k, "Frames per video with --frames sampled");
  eval_cmd->add_option("--seed", eval_seed, "Sampling seed with --frames sampled");
  eval_cmd->add_option("--workers", eval_workers)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--dump", eval_dump, "Write per-instance predictions as CSV");

  TrainOverrides cv_opts;
  std::string cv_data;
  std::size_t cv_folds = 10;
  std::string cv_method = "fan";
  std::string cv_fusion = "logits";
  auto* cv_cmd = app.add_subcommand("cv", "Person-independent k-fold cross-validation");
  cv_cmd->add_option("--data", cv_data)->required();
  cv_cmd->add_option("--folds", cv_folds)->check(CLI::PositiveNumber);
  cv_cmd->add_option("--method", cv_method)->check(CLI::IsMember({"fan", "score-fusion"}));
  cv_cmd->add_option("--fusion", cv_fusion, "Score fusion over logits or probabilities")
      ->check(CLI::IsMember({"logits", "probabilities"}));
  add_train_options(cv_cmd, cv_opts);

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  gc_cmd->add_option("--configs", gc.configs)->check(CLI::PositiveNumber);
  gc_cmd->add_option("--d", gc.dim)->check(CLI::PositiveNumber);
  gc_cmd->add_option("--n", gc.frames)->check(CLI::PositiveNumber);
  gc_cmd->add_option("--c", gc.classes)->check(CLI::PositiveNumber);
  gc_cmd->add_option("--mode", gc.mode)->check(CLI::IsMember({"full", "self-only"}));
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--eps", gc.eps);
  gc_cmd->add_option("--tol", gc.tolerance);
  gc_cmd->add_flag("--corrupt", gc.corrupt, "Perturb the analytic gradient (self-test)")
      ->group("");

  std::string vis_model;
  std::string vis_data;
  std::string vis_out;
  auto* vis_cmd = app.add_subcommand("visualize", "Export per-frame attention weights");
  vis_cmd->add_option("--model", vis_model)->required();
  vis_cmd->add_option("--data", vis_data)->required();
  vis_cmd->add_option("--out", vis_out, "Output prefix; writes <out>.csv and <out>.json")
      ->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, synth_out, out);
    if (*import_cmd) return cmd_import_csv(csv_in, csv_out, class_names, out);
    if (*train_cmd) {
      return cmd_train(train_data, train_out, train_history, train_val, train_opts, out, err);
    }
    if (*eval_cmd) {
      return cmd_eval(eval_model, eval_data, eval_frames, eval_k, eval_seed, eval_workers,
                      eval_dump, out);
    }
    if (*cv_cmd) return cmd_cv(cv_data, cv_folds, cv_method, cv_fusion, cv_opts, out, err);
    if (*gc_cmd) return cmd_gradcheck(gc, out, err);
    if (*vis_cmd) return cmd_visualize(vis_model, vis_data, vis_out, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace fan::cli
