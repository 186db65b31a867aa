// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

using OptPath = std::optional<std::filesystem::path>;

#include "unlearn/checkpoint.hpp"
#include "unlearn/config.hpp"
#include "unlearn/harness.hpp"
#include "unlearn/metrics_io.hpp"
#include "unlearn/saliency.hpp"
#include "unlearn/synthlab.hpp"

namespace py = pybind11;
using namespace unlearn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor::matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["images_seen"] = r.images_seen;
  d["loss_psi"] = r.loss_psi;
  d["loss_theta"] = r.loss_theta;
  d["loss_distill"] = r.loss_distill;
  d["loss_forget"] = r.loss_forget;
  d["mask_density"] = r.mask_density;
  d["mask_threshold"] = r.mask_threshold;
  d["mask_overlap"] = r.mask_overlap;
  d["ua"] = r.ua;
  d["cover_alignment"] = r.cover_alignment;
  d["frechet"] = r.frechet;
  d["is"] = r.is;
  d["precision"] = r.precision;
  return d;
}

RunConfig with_overrides(RunConfig cfg, const std::map<std::string, std::string>& overrides) {
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  return cfg;
}

// Runs a harness command, returning its log text alongside the result.
template <class F>
auto logged(F&& f) {
  std::ostringstream log;
  auto result = f(log);
  return std::make_pair(std::move(result), log.str());
}

}  // namespace

PYBIND11_MODULE(_unlearnlab, m) {
  m.doc() = "Saliency-masked unlearning of one-step diffusion generators on 2-d mixtures";
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

  py::class_<RunConfig>(m, "Config")
      .def(py::init<>())
      .def("get", [](const RunConfig& c, const std::string& key) { return get_config_value(c, key); })
      .def("set", [](RunConfig& c, const std::string& key, const std::string& value) { set_config_value(c, key, value); })
      .def("with_overrides", &with_overrides, py::arg("overrides"))
      .def("validate", &RunConfig::validate)
      .def("serialize", [](const RunConfig& c) { return serialize_config(c); })
      .def("to_dict",
           [](const RunConfig& c) {
             py::dict d;
             for (const std::string& k : config_keys()) d[py::str(k)] = get_config_value(c, k);
             return d;
           })
      .def("__repr__", [](const RunConfig& c) { return "Config(\n" + serialize_config(c) + ")"; });

  m.def("parse_config", &parse_config, py::arg("text"));
  m.def("load_config", &load_config, py::arg("path"));
  m.def("config_keys", &config_keys);

  m.def(
      "pretrain",
      [](const RunConfig& cfg, std::optional<std::uint64_t> seed, const OptPath& out) {
        auto [r, log] =
            logged([&](std::ostream& o) { return cmd_pretrain(PretrainRequest{cfg, seed, out.value_or("")}, o); });
        py::dict d;
        d["dir"] = r.paths.dir;
        d["checkpoint"] = r.paths.checkpoint();
        d["final_loss"] = r.final_loss;
        d["log"] = log;
        return d;
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none());

  m.def(
      "unlearn",
      [](std::optional<RunConfig> cfg, std::optional<std::string> method, const OptPath& teacher,
         std::optional<std::uint64_t> seed, std::optional<std::uint64_t> images, std::optional<std::uint64_t> steps,
         const OptPath& resume, const OptPath& out) {
        UnlearnRequest req;
        req.config = std::move(cfg);
        if (method) req.method = parse_method(*method);
        req.teacher = teacher.value_or("");
        req.seed = seed;
        req.images = images;
        req.steps = steps;
        req.resume = resume.value_or("");
        req.out_dir = out.value_or("");
        auto [r, log] = logged([&](std::ostream& o) { return cmd_unlearn(req, o); });
        py::dict d;
        d["dir"] = r.paths.dir;
        d["checkpoint"] = r.paths.checkpoint();
        d["metrics"] = r.paths.metrics();
        d["final"] = record_dict(r.final_record);
        d["log"] = log;
        return d;
      },
      py::arg("config") = py::none(), py::arg("method") = py::none(), py::arg("teacher") = py::none(),
      py::arg("seed") = py::none(), py::arg("images") = py::none(), py::arg("steps") = py::none(),
      py::arg("resume") = py::none(), py::arg("out") = py::none());

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, std::optional<std::size_t> n, std::optional<std::uint64_t> seed,
         const OptPath& out_file) {
        EvalRequest req{checkpoint, std::nullopt, n, seed, out_file.value_or("")};
        auto [r, log] = logged([&](std::ostream& o) { return cmd_eval(req, o); });
        py::dict d;
        d["sampler"] = r.sampler;
        d["ua"] = r.summary.ua.ua;
        d["cover_alignment"] = r.summary.ua.cover_alignment;
        d["forget_rate"] = r.summary.ua.forget_rate;
        d["frechet"] = r.summary.frechet;
        d["is"] = r.summary.is;
        d["precision"] = r.summary.precision;
        d["text"] = r.text;
        return d;
      },
      py::arg("checkpoint"), py::arg("n") = py::none(), py::arg("seed") = py::none(),
      py::arg("out_file") = py::none());

  m.def(
      "sweep",
      [](const RunConfig& base, const std::vector<std::pair<std::string, std::vector<std::string>>>& grid,
         const OptPath& teacher, const OptPath& out, std::size_t jobs) {
        SweepRequest req{base, {}, teacher.value_or(""), out.value_or(""), jobs};
        for (const auto& [k, vs] : grid) {
          if (!has_config_key(k)) throw ConfigError("grid: unknown key '" + k + "'");
          req.grid.push_back(GridAxis{k, vs});
        }
        auto [r, log] = logged([&](std::ostream& o) { return cmd_sweep(req, o); });
        py::dict d;
        std::vector<std::filesystem::path> dirs;
        for (const RunPaths& p : r.runs) dirs.push_back(p.dir);
        d["runs"] = dirs;
        d["aggregate"] = r.aggregate;
        d["log"] = log;
        return d;
      },
      py::arg("base"), py::arg("grid"), py::arg("teacher") = py::none(),
      py::arg("out") = py::none(), py::arg("jobs") = 0);

  m.def(
      "read_metrics",
      [](const std::filesystem::path& path) {
        py::list rows;
        for (const MetricsRecord& r : read_metrics(path).rows) rows.append(record_dict(r));
        return rows;
      },
      py::arg("path"));

  m.def(
      "make_mixture",
      [](int k, const std::string& layout, double spread, std::size_t per_class, std::uint64_t seed) {
        const MixtureDataset d = make_mixture(k, parse_layout(layout), spread, per_class, seed);
        py::dict out;
        out["means"] = d.means;
        out["covariances"] = d.covariances;
        out["samples"] = to_array(d.samples);
        out["labels"] = d.labels;
        return out;
      },
      py::arg("k"), py::arg("layout") = "ring", py::arg("spread") = 2.0, py::arg("per_class") = 1000,
      py::arg("seed") = 0);

  m.def(
      "bayes_classify",
      [](const Array& x, int k, const std::string& layout, double spread) {
        const MixtureDataset d = make_mixture(k, parse_layout(layout), spread, 1, 0);
        const Posterior p = bayes_classify(to_tensor(x), d);
        return py::make_tuple(to_array(p.probs), p.argmax);
      },
      py::arg("x"), py::arg("k"), py::arg("layout") = "ring", py::arg("spread") = 2.0);

  m.def(
      "frechet_proxy", [](const Array& a, const Array& b) { return frechet_proxy(to_tensor(a), to_tensor(b)); },
      py::arg("a"), py::arg("b"));
  m.def("frechet_gaussian", &frechet_gaussian, py::arg("mu_a"), py::arg("cov_a"), py::arg("mu_b"), py::arg("cov_b"));
  m.def(
      "precision_proxy",
      [](const Array& g, const Array& r, std::size_t k) { return precision_proxy(to_tensor(g), to_tensor(r), k); },
      py::arg("generated"), py::arg("real"), py::arg("k") = 3);

  m.def(
      "build_mask",
      [](std::vector<double> scores, std::optional<double> q, std::optional<double> gamma) {
        if (q.has_value() == gamma.has_value()) throw std::invalid_argument("pass exactly one of q and gamma");
        const MaskPolicy policy = q ? MaskPolicy::quantile(*q) : MaskPolicy::absolute(*gamma);
        const SaliencyMask mask = build_mask(SaliencyScore{std::move(scores), 0, 1}, policy);
        py::dict d;
        d["bits"] = std::vector<int>(mask.bits.begin(), mask.bits.end());
        d["threshold"] = mask.threshold;
        d["density"] = mask.density;
        d["degenerate"] = mask.degenerate;
        return d;
      },
      py::arg("scores"), py::arg("q") = py::none(), py::arg("gamma") = py::none());
}
