#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "fan/binary_io.hpp"
#include "fan/datastore.hpp"
#include "fan/errors.hpp"
#include "fan/evaluator.hpp"
#include "fan/fanhead.hpp"
#include "fan/gradcheck.hpp"
#include "fan/rng.hpp"
#include "fan/sampler.hpp"
#include "fan/trainer.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace fan;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_array(const Vector& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.values().data());
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> out({static_cast<py::ssize_t>(m.rows()), static_cast<py::ssize_t>(m.cols())});
  std::copy(m.span().begin(), m.span().end(), out.mutable_data());
  return out;
}

Vector to_vector(const DoubleArray& a) {
  if (a.ndim() != 1) throw DimensionError("expected a 1-d array");
  return Vector(std::vector<double>(a.data(), a.data() + a.size()));
}

Matrix to_matrix(const DoubleArray& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array of shape (frames, dim)");
  return Matrix(a.shape(0), a.shape(1), std::vector<double>(a.data(), a.data() + a.size()));
}

py::object json_to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<std::size_t> indices_or_all(const Dataset& ds,
                                        const std::optional<std::vector<std::size_t>>& idx) {
  return idx ? *idx : all_indices(ds);
}

py::dict history_to_python(const TrainHistory& h) {
  py::list epochs;
  for (const auto& e : h.epochs) {
    py::dict d("epoch"_a = e.epoch, "lr"_a = e.lr, "loss"_a = e.loss,
               "train_accuracy"_a = e.train_accuracy);
    d["val_accuracy"] = e.val_accuracy ? py::cast(*e.val_accuracy) : py::none();
    epochs.append(d);
  }
  return py::dict("epochs"_a = epochs, "steps"_a = h.steps, "log"_a = h.to_log());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Frame attention aggregation head with training and evaluation tools";

  auto base = py::register_exception<Error>(m, "FanError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<IndexError>(m, "FanIndexError", base);
  py::register_exception<DomainError>(m, "DomainError", base);
  py::register_exception<NumericError>(m, "NumericError", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<SchemaError>(m, "SchemaError", base);
  py::register_exception<DataError>(m, "DataError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<IoError>(m, "IoError", base);

  py::enum_<Mode>(m, "Mode").value("FULL", Mode::Full).value("SELF_ONLY", Mode::SelfOnly);

  m.def("sigmoid", &sigmoid, "x"_a);
  m.def(
      "softmax_cross_entropy",
      [](const DoubleArray& logits, std::size_t label) {
        const LossAndGrad r = softmax_cross_entropy(to_vector(logits), label);
        return py::make_tuple(r.loss, to_array(r.grad));
      },
      "logits"_a, "label"_a);

  py::class_<FanParams>(m, "FanParams")
      .def(py::init([](Mode mode, const DoubleArray& q0, const DoubleArray& q1,
                       const DoubleArray& w, const DoubleArray& b) {
             FanParams p{mode, to_vector(q0), to_vector(q1), to_matrix(w), to_vector(b)};
             p.validate();
             return p;
           }),
           "mode"_a, "q0"_a, "q1"_a, "class_weight"_a, "class_bias"_a)
      .def_static("zeros", &FanParams::zeros, "mode"_a, "dim"_a, "classes"_a)
      .def_static("initialize", &FanParams::initialize, "mode"_a, "dim"_a, "classes"_a, "seed"_a)
      .def_readonly("mode", &FanParams::mode)
      .def_property_readonly("dim", &FanParams::dim)
      .def_property_readonly("classes", &FanParams::classes)
      .def_property_readonly("q0", [](const FanParams& p) { return to_array(p.q0); })
      .def_property_readonly("q1", [](const FanParams& p) { return to_array(p.q1); })
      .def_property_readonly("class_weight", [](const FanParams& p) { return to_array(p.class_weight); })
      .def_property_readonly("class_bias", [](const FanParams& p) { return to_array(p.class_bias); })
      .def("flatten", [](const FanParams& p) { return to_array(flatten(p)); })
      .def_static(
          "unflatten",
          [](const DoubleArray& flat, Mode mode, std::size_t dim, std::size_t classes) {
            return unflatten(to_vector(flat), mode, dim, classes);
          },
          "flat"_a, "mode"_a, "dim"_a, "classes"_a)
      .def("__eq__", [](const FanParams& a, const FanParams& b) { return a == b; })
      .def("__repr__", [](const FanParams& p) {
        return "FanParams(mode=" + std::string(to_string(p.mode)) + ", dim=" +
               std::to_string(p.dim()) + ", classes=" + std::to_string(p.classes()) + ")";
      });

  m.def(
      "forward",
      [](const DoubleArray& features, const FanParams& params) {
        const ForwardResult r = forward(to_matrix(features), params);
        return py::dict("logits"_a = to_array(r.logits), "alpha"_a = to_array(r.trace.alpha),
                        "beta"_a = to_array(r.trace.beta),
                        "final_weights"_a = to_array(r.trace.final_weights),
                        "anchor"_a = to_array(r.trace.anchor),
                        "aggregate"_a = to_array(r.trace.aggregate));
      },
      "features"_a, "params"_a);
  m.def(
      "backward",
      [](const DoubleArray& features, const FanParams& params, std::size_t label) {
        BackwardResult r = backward(to_matrix(features), params, label);
        return py::make_tuple(r.loss, std::move(r.grads));
      },
      "features"_a, "params"_a, "label"_a);
  m.def(
      "predict", [](const DoubleArray& logits) { return predict(to_vector(logits)); }, "logits"_a);

  m.def(
      "plan_segments", [](std::size_t n, std::size_t k) { return plan_segments(n, k).segments; },
      "n"_a, "k"_a);
  m.def(
      "sample_training",
      [](std::size_t n, std::size_t k, std::uint64_t seed) {
        Rng rng(seed);
        return sample_training(n, k, rng);
      },
      "n"_a, "k"_a, "seed"_a);

  py::class_<VideoInstance>(m, "VideoInstance")
      .def(py::init([](std::string video_id, std::string subject_id, std::size_t label,
                       const DoubleArray& features) {
             return VideoInstance{std::move(video_id), std::move(subject_id), label,
                                  to_matrix(features)};
           }),
           "video_id"_a, "subject_id"_a, "label"_a, "features"_a)
      .def_readonly("video_id", &VideoInstance::video_id)
      .def_readonly("subject_id", &VideoInstance::subject_id)
      .def_readonly("label", &VideoInstance::label)
      .def_property_readonly("features", [](const VideoInstance& v) { return to_array(v.features); })
      .def_property_readonly("frames", &VideoInstance::frames);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](std::size_t dim, std::size_t classes, std::vector<std::string> names,
                       std::vector<VideoInstance> instances) {
             Dataset ds{dim, classes, std::move(names), std::move(instances)};
             ds.validate();
             return ds;
           }),
           "dim"_a, "classes"_a, "class_names"_a, "instances"_a)
      .def_readonly("dim", &Dataset::dim)
      .def_readonly("classes", &Dataset::classes)
      .def_readonly("class_names", &Dataset::class_names)
      .def_readonly("instances", &Dataset::instances)
      .def("subjects", &Dataset::subjects)
      .def("__len__", [](const Dataset& d) { return d.instances.size(); })
      .def("__eq__", [](const Dataset& a, const Dataset& b) { return a == b; });

  m.def("load_feature_file", &load_feature_file, "path"_a);
  m.def("write_feature_file", &write_feature_file, "dataset"_a, "path"_a);
  m.def(
      "encode_feature_file", [](const Dataset& d) { return py::bytes(encode_feature_file(d)); },
      "dataset"_a);
  m.def(
      "decode_feature_file", [](const py::bytes& b) { return decode_feature_file(std::string(b)); },
      "data"_a);
  m.def("import_feature_csv", &import_feature_csv, "path"_a,
        "class_names"_a = std::vector<std::string>{});

  m.def(
      "build_folds",
      [](const Dataset& d, std::size_t folds) { return build_folds(d, folds).assignment; },
      "dataset"_a, "folds"_a = 10);
  m.def(
      "split_for_fold",
      [](const Dataset& d, std::size_t folds, std::size_t fold) {
        const Split s = split_for_fold(d, build_folds(d, folds), fold);
        return py::make_tuple(s.train, s.test);
      },
      "dataset"_a, "folds"_a, "fold"_a);

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("videos_per_class", &SynthConfig::videos_per_class)
      .def_readwrite("min_frames", &SynthConfig::min_frames)
      .def_readwrite("max_frames", &SynthConfig::max_frames)
      .def_readwrite("dim", &SynthConfig::dim)
      .def_readwrite("classes", &SynthConfig::classes)
      .def_readwrite("peaks_per_video", &SynthConfig::peaks_per_video)
      .def_readwrite("signal", &SynthConfig::signal)
      .def_readwrite("noise", &SynthConfig::noise)
      .def_readwrite("seed", &SynthConfig::seed)
      .def_readwrite("subjects", &SynthConfig::subjects)
      .def_readwrite("terminal_peaks", &SynthConfig::terminal_peaks);
  m.def("synth_generate", &synth_generate, "config"_a = SynthConfig{});
  m.def(
      "synth_generate_with_peaks",
      [](const SynthConfig& c) {
        SynthDataset s = synth_generate_with_peaks(c);
        return py::make_tuple(std::move(s.dataset), to_array(s.directions), s.peaks);
      },
      "config"_a = SynthConfig{});

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("frames_per_instance", &TrainConfig::frames_per_instance)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_property(
          "schedule",
          [](const TrainConfig& c) {
            std::vector<std::pair<std::size_t, double>> out;
            for (const auto& s : c.schedule) out.emplace_back(s.epoch_start, s.lr);
            return out;
          },
          [](TrainConfig& c, const std::vector<std::pair<std::size_t, double>>& steps) {
            Schedule s;
            for (const auto& [e, lr] : steps) s.push_back({e, lr});
            validate_schedule(s);
            c.schedule = std::move(s);
          })
      .def_readwrite("total_epochs", &TrainConfig::total_epochs)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("mode", &TrainConfig::mode)
      .def_readwrite("all_frames", &TrainConfig::all_frames)
      .def_readwrite("freeze_attention", &TrainConfig::freeze_attention)
      .def_readwrite("workers", &TrainConfig::workers);
  m.def("preset", &preset, "name"_a);
  m.def("preset_names", &preset_names);
  m.def(
      "lr_at",
      [](const std::vector<std::pair<std::size_t, double>>& steps, std::size_t epoch) {
        Schedule s;
        for (const auto& [e, lr] : steps) s.push_back({e, lr});
        validate_schedule(s);
        return lr_at(s, epoch);
      },
      "schedule"_a, "epoch"_a);

  m.def(
      "train",
      [](const Dataset& d, const TrainConfig& c, std::optional<std::vector<std::size_t>> train_idx,
         std::optional<std::vector<std::size_t>> val_idx) {
        const auto tr = indices_or_all(d, train_idx);
        const std::vector<std::size_t> va = val_idx.value_or(std::vector<std::size_t>{});
        std::optional<TrainResult> r;
        {
          py::gil_scoped_release release;
          r = train(d, tr, c, va);
        }
        return py::make_tuple(std::move(r->params), history_to_python(r->history));
      },
      "dataset"_a, "config"_a, "train_indices"_a = py::none(), "val_indices"_a = py::none());

  m.def(
      "evaluate",
      [](const FanParams& p, const Dataset& d, std::optional<std::vector<std::size_t>> idx,
         const std::string& frames, std::size_t k, std::uint64_t seed) {
        EvalOptions opts;
        if (frames != "all" && frames != "sampled") throw ConfigError("frames must be 'all' or 'sampled'");
        opts.frames = frames == "sampled" ? FrameMode::SampledK : FrameMode::AllFrames;
        opts.k = k;
        opts.seed = seed;
        const EvalReport r = evaluate(p, d, indices_or_all(d, idx), opts);
        py::dict out = json_to_python(r.to_json());
        out["predictions"] = r.predictions;
        return out;
      },
      "params"_a, "dataset"_a, "indices"_a = py::none(), "frames"_a = "all", "k"_a = 3,
      "seed"_a = 0);

  m.def(
      "score_fusion_baseline",
      [](const Dataset& d, const std::vector<std::size_t>& train_idx,
         const std::vector<std::size_t>& test_idx, const TrainConfig& c, const std::string& fusion) {
        const EvalReport r = score_fusion_baseline(
            d, train_idx, test_idx, c, fusion == "probabilities" ? Fusion::Probabilities : Fusion::Logits);
        return json_to_python(r.to_json());
      },
      "dataset"_a, "train_indices"_a, "test_indices"_a, "config"_a, "fusion"_a = "logits");

  m.def(
      "cross_validate",
      [](const Dataset& d, const TrainConfig& c, std::size_t folds, const std::string& method,
         const std::string& fusion) {
        CrossValidation cv;
        {
          py::gil_scoped_release release;
          cv = cross_validate(d, c, build_folds(d, folds),
                              method == "score-fusion" ? Method::ScoreFusion : Method::Fan,
                              fusion == "probabilities" ? Fusion::Probabilities : Fusion::Logits);
        }
        return json_to_python(cv.to_json());
      },
      "dataset"_a, "config"_a, "folds"_a = 10, "method"_a = "fan", "fusion"_a = "logits");

  m.def(
      "check_gradients",
      [](Mode mode, std::size_t dim, std::size_t frames, std::size_t classes, std::uint64_t seed,
         double eps, double tol) {
        const GradcheckResult r = check_gradients({mode, dim, frames, classes, seed}, eps, tol);
        return py::dict("max_relative_error"_a = r.max_relative_error,
                        "worst_coordinate"_a = r.worst_coordinate, "offending"_a = r.offending,
                        "passed"_a = r.passed);
      },
      "mode"_a, "dim"_a, "frames"_a, "classes"_a, "seed"_a = 1, "eps"_a = 1e-5, "tol"_a = 1e-4);

  m.def("write_checkpoint", &write_checkpoint, "params"_a, "path"_a);
  m.def("load_checkpoint", &load_checkpoint, "path"_a);
  m.def(
      "encode_checkpoint", [](const FanParams& p) { return py::bytes(encode_checkpoint(p)); },
      "params"_a);
  m.def(
      "decode_checkpoint", [](const py::bytes& b) { return decode_checkpoint(std::string(b)); },
      "data"_a);

  m.def(
      "export_attention",
      [](const FanParams& p, const Dataset& d, const std::string& csv, const std::string& json) {
        return json_to_python(export_attention(p, d, csv, json).to_json());
      },
      "params"_a, "dataset"_a, "csv_path"_a, "json_path"_a);
}
