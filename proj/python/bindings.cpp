#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cvar/common/binary_io.hpp"
#include "cvar/common/error.hpp"
#include "cvar/eval/ablation.hpp"
#include "cvar/eval/checks.hpp"
#include "cvar/eval/metrics.hpp"
#include "cvar/loss/metrics.hpp"
#include "cvar/synth/dataset.hpp"
#include "cvar/train/config.hpp"
#include "cvar/train/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace cvar;

namespace {

using Overrides = std::map<std::string, std::string>;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

train::TrainConfig configure(const Overrides& overrides, train::TrainConfig cfg = {}) {
  for (const auto& [k, v] : overrides) train::apply_override(cfg, k, v);
  cfg.validate();
  return cfg;
}

eval::ScoreMatrix to_scores(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  eval::ScoreMatrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::dict view_dict(const eval::ViewReport& r) {
  py::dict d;
  d["samples"] = r.samples;
  d["top1"] = r.top1;
  d["top5"] = r.top5;
  d["map"] = r.map;
  d["per_class_ap"] = r.per_class_ap;
  return d;
}

py::dict generate(const fs::path& out, const Overrides& overrides, bool force) {
  const auto cfg = configure(overrides);
  const auto m = synth::generate_dataset(cfg.dataset, out, force);
  py::dict splits;
  for (const auto& s : m.splits) {
    std::vector<int> counts(cfg.dataset.classes, 0);
    for (const auto& c : s.exo) ++counts[c.label];
    py::dict d;
    d["paired"] = s.paired;
    d["exo"] = s.exo.size();
    d["ego"] = s.ego.size();
    d["per_class"] = counts;
    splits[py::str(s.name)] = d;
  }
  py::dict r;
  r["splits"] = splits;
  r["manifest_sha256"] = io::sha256_hex(io::read_bytes(out / "manifest.json"));
  return r;
}

py::list train_run(const fs::path& data_root, const fs::path& out, const Overrides& overrides, bool resume) {
  const auto cfg = configure(overrides);
  const auto data = synth::load_dataset(data_root);
  train::RunOptions opt{out};
  opt.resume = resume;
  const auto run = train::run_training(cfg, data, opt);
  py::list epochs;
  for (const auto& e : run.epochs) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["steps"] = e.steps;
    d["ce_exo"] = e.ce_exo;
    d["ce_ego"] = e.ce_ego;
    d["l_self"] = e.l_self;
    d["total"] = e.total;
    epochs.append(d);
  }
  return epochs;
}

py::dict evaluate_run(const fs::path& data_root, const fs::path& run_dir, std::size_t remark2_clips) {
  const auto cfg = train::load_config(run_dir / "config.txt");
  const auto data = synth::load_dataset(data_root);
  train::RunOptions opt{run_dir};
  opt.resume = true;
  const auto run = train::run_training(cfg, data, opt);
  eval::Remark2Options r2;
  r2.seed = cfg.seed;
  r2.max_clips = remark2_clips;
  const auto rep = eval::full_report(run, cfg, data, r2);
  py::dict d;
  d["exo"] = view_dict(rep.exo);
  d["ego"] = view_dict(rep.ego);
  d["proportionality"] = rep.proportionality;
  d["proportionality_untrained"] = rep.proportionality_untrained;
  if (rep.remark2) {
    py::dict r;
    r["clips"] = rep.remark2->clips;
    r["mean"] = rep.remark2->mean;
    r["null_mean"] = rep.remark2->null_mean;
    r["null_std"] = rep.remark2->null_std;
    r["pass"] = rep.remark2->pass();
    d["remark2"] = r;
  } else {
    d["remark2"] = py::none();
  }
  d["fingerprint"] = rep.fingerprint;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-view attention regularization core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("config_text", [](const Overrides& o) { return train::to_text(configure(o)); }, py::arg("overrides") = Overrides{},
        "Effective configuration as key = value text.");
  m.def("fingerprint", [](const Overrides& o) { return train::fingerprint(configure(o)); },
        py::arg("overrides") = Overrides{});

  m.def("generate_dataset", &generate, py::arg("out"), py::arg("overrides") = Overrides{}, py::arg("force") = false,
        "Render the synthetic exo/ego dataset; `data.*` keys configure it.");
  m.def("train", &train_run, py::arg("data"), py::arg("out"), py::arg("overrides") = Overrides{},
        py::arg("resume") = false, "Train into `out` and return per-epoch metrics.");
  m.def("evaluate", &evaluate_run, py::arg("data"), py::arg("run"), py::arg("remark2_clips") = 0,
        "Val-split report of a finished run directory.");

  m.def(
      "gradcheck",
      [](std::size_t coords, std::uint64_t seed) {
        loss::LossConfig lc;
        lc.layers = {1, 2};
        lc.lambda = 1.0;
        return eval::objective_gradcheck(eval::gradcheck_model(), lc, seed, coords).max_rel_error;
      },
      py::arg("coords_per_tensor") = 8, py::arg("seed") = 1,
      "Max relative error of the full objective's gradient against central differences.");

  m.def(
      "d_a",
      [](const std::vector<double>& p, const std::vector<double>& q, const std::string& kind, double beta) {
        loss::LossConfig c;
        c.da = loss::parse_da(kind);
        c.beta = beta;
        return loss::d_a(p, q, c);
      },
      py::arg("p"), py::arg("q"), py::arg("kind") = "symkl", py::arg("beta") = loss::LossConfig{}.beta);
  m.def(
      "d_x_pixel",
      [](const std::vector<float>& a, const std::vector<float>& b, double beta) {
        loss::LossConfig c;
        c.beta = beta;
        return loss::d_x_pixel(a, b, c);
      },
      py::arg("a"), py::arg("b"), py::arg("beta") = loss::LossConfig{}.beta);

  m.def(
      "topk_accuracy",
      [](const Array& scores, const std::vector<int>& labels, int k) {
        return eval::topk_accuracy(to_scores(scores), labels, k);
      },
      py::arg("scores"), py::arg("labels"), py::arg("k") = 1);
  m.def(
      "mean_average_precision",
      [](const Array& scores, const Array& positives) {
        const auto r = eval::mean_average_precision(to_scores(scores), to_scores(positives));
        return py::make_tuple(r.map, r.per_class);
      },
      py::arg("scores"), py::arg("positives"), "Returns (mAP, per-class AP with NaN for excluded classes).");
}
