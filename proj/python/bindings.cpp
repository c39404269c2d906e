#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kabi/cli.hpp"
#include "kabi/dataset.hpp"
#include "kabi/diagnostics.hpp"
#include "kabi/error.hpp"
#include "kabi/features.hpp"
#include "kabi/flow.hpp"
#include "kabi/oscillator.hpp"

namespace py = pybind11;
using namespace kabi;

namespace {

data::Scenario scenario_arg(const std::string& s) { return data::scenario_from_string(s); }

std::vector<diag::PosteriorSamples> cases_from(const std::vector<Eigen::MatrixXd>& draws,
                                              const std::vector<std::vector<double>>& truths) {
  if (draws.size() != truths.size()) throw ConfigError("draws and truths differ in length");
  std::vector<diag::PosteriorSamples> out(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    out[i].draws = draws[i];
    out[i].truth = truths[i];
  }
  return out;
}

data::PriorSpec prior_arg(const std::vector<double>& lo, const std::vector<double>& hi) { return {lo, hi}; }

}  // namespace

PYBIND11_MODULE(_kabi, m) {
  m.doc() = "Kuramoto simulation, summary features, coupling-flow posteriors and diagnostics";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<DependencyError>(m, "DependencyError", PyExc_FileNotFoundError);

  m.def("drift_pairwise", [](const std::vector<double>& p, const std::vector<double>& w, double k) {
    return osc::drift_pairwise(p, w, k);
  }, py::arg("phases"), py::arg("omega"), py::arg("kappa"));
  m.def("drift_meanfield", [](const std::vector<double>& p, const std::vector<double>& w, double k) {
    return osc::drift_meanfield(p, w, k);
  }, py::arg("phases"), py::arg("omega"), py::arg("kappa"));
  m.def("order_parameter", [](const std::vector<double>& p) {
    const auto op = osc::order_parameter(p);
    return py::make_tuple(op.r, op.psi);
  }, py::arg("phases"), "(r, psi) of a phase vector");
  m.def("critical_coupling", &osc::critical_coupling, py::arg("sigma"));

  m.def("summarize_step", [](const std::vector<double>& p) {
    const auto a = summary::summarize_step(p).as_array();
    py::dict d;
    for (std::size_t k = 0; k < summary::kStatsPerStep; ++k) d[py::str(summary::kStatNames[k])] = a[k];
    return d;
  }, py::arg("phases"));
  m.def("summarize_rows", [](const Eigen::MatrixXd& phases, std::size_t first_row) {
    return summary::summarize_rows(phases, first_row).as_matrix();
  }, py::arg("phases"), py::arg("first_row") = 0, "n_obs x 6 summary matrix of an observation-by-oscillator array");

  m.def("simulate_features", [](const std::string& scenario, const std::vector<double>& theta, std::uint64_t seed) {
    const auto cfg = data::resolve(data::preset(scenario_arg(scenario)));
    return data::simulate_features(cfg, theta, seed).as_matrix();
  }, py::arg("scenario"), py::arg("theta"), py::arg("seed") = 41,
        "summary features (context rows only) of one preset simulation");
  m.def("simulate_mean_field", [](std::size_t n, double kappa, double omega_std, std::uint64_t seed, std::size_t n_steps,
                                  double obs_noise_std) {
    osc::SimConfig cfg;
    cfg.seed = seed;
    cfg.n_steps = n_steps;
    cfg.obs_noise_std = obs_noise_std;
    return osc::integrate(osc::NetworkSpec{n, osc::MeanField{kappa}},
                          osc::FrequencySpec{osc::GaussianFrequencies{1.0, omega_std}}, cfg)
        .observed_phases;
  }, py::arg("n_oscillators") = 100, py::arg("kappa") = 1.0, py::arg("omega_std") = 0.5, py::arg("seed") = 41,
        py::arg("n_steps") = 1000, py::arg("obs_noise_std") = 0.1, "observed phases, one row per recorded step");

  m.def("sample_prior", [](const std::vector<double>& lo, const std::vector<double>& hi, std::size_t n,
                           std::uint64_t seed) { return data::sample_prior(prior_arg(lo, hi), n, seed); },
        py::arg("lower"), py::arg("upper"), py::arg("n"), py::arg("seed") = 41);

  m.def("posterior_sample", [](const std::string& checkpoint, const std::vector<double>& features, std::size_t n,
                               std::uint64_t seed) {
    const auto ck = flow::load_checkpoint(checkpoint);
    return flow::sample_posterior(ck.model, ck.standardizer, features, n, seed).draws;
  }, py::arg("checkpoint"), py::arg("features"), py::arg("n") = 1000, py::arg("seed") = 41,
        "posterior draws in natural units from a trained checkpoint");

  m.def("pit", [](const Eigen::MatrixXd& draws, const std::vector<double>& truth, std::uint64_t seed) {
    diag::PosteriorSamples s;
    s.draws = draws;
    s.truth = truth;
    Rng rng(seed);
    return diag::pit(s, rng);
  }, py::arg("draws"), py::arg("truth"), py::arg("seed") = 41);
  m.def("ks_uniform", [](const std::vector<double>& v) {
    const auto r = diag::ks_uniform(v);
    return py::make_tuple(r.statistic, r.p_value);
  }, py::arg("values"), "(statistic, p_value)");
  m.def("evaluate", [](const std::vector<Eigen::MatrixXd>& draws, const std::vector<std::vector<double>>& truths,
                       const std::vector<double>& lo, const std::vector<double>& hi, std::uint64_t seed) {
    const auto cases = cases_from(draws, truths);
    return diag::evaluate(cases, prior_arg(lo, hi), seed).to_json().dump();
  }, py::arg("draws"), py::arg("truths"), py::arg("lower"), py::arg("upper"), py::arg("seed") = 41,
        "metrics report as a JSON string");

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "kabi");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    py::gil_scoped_release release;
    return cli::main(static_cast<int>(argv.size()), argv.data());
  }, py::arg("args"), "run a kabi subcommand; returns its exit code");

  m.attr("__version__") = KABI_VERSION;
}
