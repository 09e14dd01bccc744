#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>

#include "wlmix/bench.hpp"
#include "wlmix/models.hpp"
#include "wlmix/rjmcmc.hpp"
#include "wlmix/wl.hpp"

namespace py = pybind11;
using namespace wlmix;

// Structured arguments cross the boundary as JSON text; the Python wrapper handles dict conversion.
namespace {

std::string estimate(const std::string& model_spec, const std::string& method, const std::string& config,
                     std::uint64_t seed) {
  const ModelInstance model = build_model(json::parse(model_spec));
  Rng rng(seed, 0);
  MethodOutcome o;
  {
    py::gil_scoped_release release;
    o = run_method(model, method, json::parse(config), rng);
  }
  json out = {{"model", model.label}, {"method", o.method}, {"ok", o.ok},
              {"log_z", o.ok ? json(o.log_z) : json(nullptr)}, {"record", o.record}};
  if (model.log_z_true) out["log_z_true"] = *model.log_z_true;
  if (!o.ok) out["error"] = o.error;
  return out.dump();
}

std::string benchmark(const std::string& config, const std::string& output_dir, int workers) {
  ExperimentConfig cfg = ExperimentConfig::from_json(json::parse(config));
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  py::gil_scoped_release release;
  return run_experiment(cfg, workers).to_json().dump();
}

std::string gprior_select(const std::vector<std::vector<double>>& X, const std::vector<double>& y, double g,
                          const std::string& sampler, long iters, double burn_frac, int tries, std::uint64_t seed) {
  if (X.size() != y.size() || X.empty()) throw std::invalid_argument("X and y must have the same nonzero length");
  Mat xm(static_cast<Eigen::Index>(X.size()), static_cast<Eigen::Index>(X[0].size()));
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i].size() != X[0].size()) throw std::invalid_argument("ragged X");
    for (std::size_t j = 0; j < X[i].size(); ++j) xm(i, j) = X[i][j];
  }
  const Vec yv = Eigen::Map<const Vec>(y.data(), static_cast<Eigen::Index>(y.size()));
  GPriorFamily fam(gprior_build(xm, yv, g));
  const TransDimConfig cfg = sampler == "bd"             ? TransDimConfig::birth_death()
                             : sampler == "mtm-adaptive" ? TransDimConfig::mtm_adaptive(tries)
                                                         : TransDimConfig::mtm_fixed(tries);
  Rng rng(seed, 0);
  const ModelId start = fam.default_start();
  ChainState init{start, fam.mode(start, fam.default_shared()), fam.default_shared()};
  ModelSelectionResult res;
  {
    py::gil_scoped_release release;
    res = run_model_selection(fam, cfg, iters, burn_frac, init, rng);
  }
  json out = res.to_json(fam);
  const EnumerationResult ex = gprior_enumerate(fam.model());
  out["exact_inclusion"] = ex.inclusion;
  out["exact_expected_size"] = ex.expected_size;
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_wlmix, m) {
  m.doc() = "Wang-Landau surrogate-mixture evidence estimators";
  m.def("_estimate", &estimate, py::arg("model_spec"), py::arg("method"), py::arg("config"), py::arg("seed"));
  m.def("_benchmark", &benchmark, py::arg("config"), py::arg("output_dir"), py::arg("workers"));
  m.def("_gprior_select", &gprior_select, py::arg("X"), py::arg("y"), py::arg("g"), py::arg("sampler"),
        py::arg("iters"), py::arg("burn_frac"), py::arg("tries"), py::arg("seed"));
  m.def("models", &registered_models);
  m.def("methods", &registered_methods);
  m.def(
      "wl_update",
      [](std::vector<double> log_psi, int indicator, double eta, double beta) {
        WlState s;
        s.log_psi_gamma = log_psi.at(0);
        s.log_psi_q = log_psi.at(1);
        s = beta > 0.0 ? wl_update_momentum(s, indicator, eta, beta) : wl_update_plain(s, indicator, eta);
        return std::vector<double>{s.log_psi_gamma, s.log_psi_q};
      },
      py::arg("log_psi"), py::arg("indicator"), py::arg("eta"), py::arg("beta") = 0.0,
      "One weight update on (log psi_gamma, log psi_q); indicator 1 means the target side.");
}
