#include "kabi/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>

#include <spdlog/spdlog.h>

#include "kabi/diagnostics.hpp"
#include "kabi/error.hpp"
#include "kabi/features.hpp"
#include "kabi/json_fields.hpp"
#include "kabi/oscillator.hpp"
#include "kabi/parallel.hpp"
#include "kabi/pipeline.hpp"
#include "kabi/svg.hpp"

namespace kabi::cli {

namespace fs = std::filesystem;

namespace {

void check_keys(const io::Json& j, const std::set<std::string>& allowed, const std::string& path) {
  if (j.is_null()) return;
  if (!j.is_object()) throw ConfigError("config key '" + path + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + (path.empty() ? key : path + "." + key) + "'");
  }
}

std::vector<std::vector<double>> default_simulate_thetas(data::Scenario s) {
  if (s == data::Scenario::Complex) return {{0.6, 0.5, 0.4, 0.3, 0.2, 0.1}};
  return {{0.2}, {1.0}, {4.0}};
}

std::vector<double> default_truth(data::Scenario s) {
  if (s == data::Scenario::Complex) return {0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  return {2.0};
}

std::string theta_label(std::span<const double> theta) {
  std::string s;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%.3g", k ? ", " : "", theta[k]);
    s += buf;
  }
  return theta.size() == 1 ? "kappa = " + s : "kappa = (" + s + ")";
}

}  // namespace

RunConfig parse_run_config(const io::Json& j, const std::uint64_t* seed_override) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j,
             {"scenario", "seed", "n_train", "n_val", "n_test", "posterior_draws", "epochs", "batches_per_epoch",
              "initial_lr", "dropout", "param_map", "simulation", "prior", "flow", "simulate", "mcmc", "compare"},
             "");
  check_keys(io::section(j, "simulation"),
             {"n_oscillators", "dt", "n_steps", "subsample", "obs_noise_std", "init_phase_std", "omega_mean",
              "omega_std", "fixed_omega", "context_first_row"},
             "simulation");
  check_keys(io::section(j, "prior"), {"lower", "upper"}, "prior");
  check_keys(io::section(j, "flow"), {"n_layers", "hidden_widths", "dropout", "scale_clamp", "zero_init_output"},
             "flow");
  check_keys(io::section(j, "simulate"), {"thetas"}, "simulate");
  check_keys(io::section(j, "compare"), {"case"}, "compare");
  const auto& mc = io::section(j, "mcmc");
  check_keys(mc, {"truth", "observation_seed", "likelihood", "chain", "reference"}, "mcmc");
  check_keys(io::section(mc, "likelihood"),
             {"features", "bin_edges", "n_edges", "edge_lower_quantile", "edge_upper_quantile", "n_replicates",
              "n_replicates_proposal", "lambda_reg", "covariance"},
             "mcmc.likelihood");
  check_keys(io::section(mc, "chain"),
             {"n_iterations", "burn_in", "thinning", "proposal_std", "seed", "refresh_current"}, "mcmc.chain");
  check_keys(io::section(mc, "reference"), {"theta", "pilot_iterations", "variance_repeats"}, "mcmc.reference");

  RunConfig rc;
  auto exp = data::experiment_from_json(j);
  if (seed_override) exp.seed = *seed_override;
  rc.experiment = data::resolve(exp);
  const auto& e = rc.experiment;
  const std::size_t d = e.param_dim();

  rc.flow = io::section(j, "flow").is_null() ? io::Json::object() : io::section(j, "flow");

  rc.simulate_thetas = io::field_or(io::section(j, "simulate"), "thetas", "simulate", default_simulate_thetas(e.scenario));
  if (rc.simulate_thetas.empty()) throw ConfigError("config key 'simulate.thetas' must not be empty");
  for (const auto& t : rc.simulate_thetas)
    if (t.size() != d) throw ConfigError("config key 'simulate.thetas' needs " + std::to_string(d) + " values per entry");

  rc.truth = io::field_or(mc, "truth", "mcmc", default_truth(e.scenario));
  if (rc.truth.size() != d || !e.prior.contains(rc.truth))
    throw ConfigError("config key 'mcmc.truth' must have " + std::to_string(d) + " values inside the prior box");
  rc.observation_seed = io::field_or<std::uint64_t>(mc, "observation_seed", "mcmc", stream_seed(e.seed, 0x0b5));
  rc.likelihood = mcmc::ecdf_spec_from_json(io::section(mc, "likelihood"), mcmc::EcdfLikelihoodSpec{});
  mcmc::ChainConfig chain_defaults;
  chain_defaults.seed = e.seed;
  rc.chain = mcmc::chain_config_from_json(io::section(mc, "chain"), chain_defaults);
  if (seed_override) rc.chain.seed = *seed_override;
  rc.chain.validate(d);
  rc.reference = mcmc::reference_from_json(io::section(mc, "reference"), mcmc::ReferenceOptions{});
  rc.compare_case = io::field_or<std::size_t>(io::section(j, "compare"), "case", "compare", 0);
  return rc;
}

io::Json RunConfig::to_json() const {
  auto j = data::to_json(experiment);
  j["flow"] = flow;
  j["simulate"] = {{"thetas", simulate_thetas}};
  j["mcmc"] = {{"truth", truth},
               {"observation_seed", observation_seed},
               {"likelihood", mcmc::to_json(likelihood)},
               {"chain", mcmc::to_json(chain)},
               {"reference", mcmc::to_json(reference)}};
  j["compare"] = {{"case", compare_case}};
  return j;
}

RunConfig load_run_config(const fs::path& path, const std::uint64_t* seed_override) {
  if (!fs::exists(path)) throw DependencyError("config file " + path.string() + " does not exist");
  io::Json j;
  try {
    j = io::read_json(path);
  } catch (const io::Json::exception& ex) {
    throw ConfigError(path.string() + ": " + ex.what());
  }
  return parse_run_config(j, seed_override);
}

Eigen::MatrixXd observed_features(const RunConfig& config) {
  return data::simulate_features(config.experiment, config.truth, config.observation_seed).as_matrix();
}

namespace {

class Manifest {
 public:
  Manifest(std::string command, fs::path out) : command_(std::move(command)), out_(std::move(out)) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    started_ = buf;
  }

  void input(const std::string& name, const fs::path& p) { inputs_[name] = p.string(); }
  void output(const fs::path& p) { outputs_.push_back(p); }
  void outputs(const std::vector<fs::path>& ps) { outputs_.insert(outputs_.end(), ps.begin(), ps.end()); }

  template <typename F>
  auto stage(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Record {
      Manifest* m;
      std::string name;
      std::chrono::steady_clock::time_point t0;
      ~Record() { m->timings_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
    } record{this, name, t0};
    return body();
  }

  // Checks every declared output and writes manifest.json. Returns false if any output is invalid.
  bool finish(const RunConfig& config, std::size_t threads) {
    bool ok = true;
    io::Json files = io::Json::array();
    for (const auto& p : outputs_) {
      std::string problem = validate(p);
      if (!problem.empty()) {
        spdlog::error("output {} failed validation: {}", p.string(), problem);
        ok = false;
      }
      io::Json entry{{"path", fs::relative(p, out_).generic_string()}, {"valid", problem.empty()}};
      if (fs::exists(p)) {
        entry["bytes"] = fs::file_size(p);
        entry["fnv1a"] = io::hex_digest(io::read_text(p));
      }
      files.push_back(std::move(entry));
    }
    io::Json m{{"command", command_},
               {"version", KABI_VERSION},
               {"seed", config.experiment.seed},
               {"threads", threads},
               {"config", config.to_json()},
               {"inputs", inputs_},
               {"outputs", files},
               {"timings_seconds", timings_},
               {"started_at", started_},
               {"valid", ok}};
    io::write_json(out_ / "manifest.json", m);
    return ok;
  }

 private:
  static std::string validate(const fs::path& p) {
    if (!fs::exists(p)) return "missing";
    if (fs::file_size(p) == 0) return "empty";
    const auto ext = p.extension().string();
    try {
      if (ext == ".json") {
        (void)io::read_json(p);
      } else if (ext == ".csv") {
        const auto t = io::read_csv(p);
        if (t.header.empty()) return "no header";
        if (!t.values.allFinite()) return "non-finite values";
      } else if (ext == ".svg") {
        const auto text = io::read_text(p);
        if (text.find("<svg") == std::string::npos || text.find("</svg>") == std::string::npos) return "not an SVG document";
      }
    } catch (const std::exception& e) {
      return e.what();
    }
    return {};
  }

  std::string command_;
  fs::path out_;
  std::string started_;
  io::Json inputs_ = io::Json::object();
  io::Json timings_ = io::Json::object();
  std::vector<fs::path> outputs_;
};

svg::Plot phase_circle(const Eigen::RowVectorXd& phases, const std::string& title) {
  svg::Plot p(260, 260, title, "cos", "sin");
  p.set_x_range(-1.25, 1.25);
  p.set_y_range(-1.25, 1.25);
  p.set_aspect_equal(true);
  std::vector<double> cx, cy;
  for (int i = 0; i <= 200; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 200.0;
    cx.push_back(std::cos(a));
    cy.push_back(std::sin(a));
  }
  p.line(cx, cy, "#999", 1.0);
  std::vector<double> x, y;
  for (Eigen::Index i = 0; i < phases.size(); ++i) {
    x.push_back(std::cos(phases(i)));
    y.push_back(std::sin(phases(i)));
  }
  p.points(x, y, "#1f4e99", 3.0, 0.6);
  const auto op = osc::order_parameter(std::span<const double>(phases.data(), static_cast<std::size_t>(phases.size())));
  const std::vector<double> rx{0.0, op.r * std::cos(op.psi)}, ry{0.0, op.r * std::sin(op.psi)};
  p.line(rx, ry, "#c0392b", 2.0);
  return p;
}

void cmd_simulate(const RunConfig& rc, const fs::path& out, Manifest& m) {
  const auto& cfg = rc.experiment;
  std::vector<svg::Plot> plots;
  m.stage("simulate", [&] {
    for (std::size_t i = 0; i < rc.simulate_thetas.size(); ++i) {
      const auto& theta = rc.simulate_thetas[i];
      const auto net = data::network_for(cfg, theta);
      const auto freq = data::frequencies_for(cfg);
      auto sim = cfg.sim;
      sim.seed = stream_seed(cfg.seed, 0x5100 + i);
      const auto traj = osc::integrate(net, freq, sim, theta);
      const auto stem = "trajectory_" + std::to_string(i + 1);
      osc::write_trajectory(out / (stem + ".csv"), traj, net, freq, sim);
      summary::write_features_csv(out / ("features_" + std::to_string(i + 1) + ".csv"),
                                  summary::summarize_trajectory(traj));
      m.output(out / (stem + ".csv"));
      m.output(out / (stem + ".json"));
      m.output(out / ("features_" + std::to_string(i + 1) + ".csv"));
      const auto label = theta_label(theta);
      plots.push_back(phase_circle(traj.observed_phases.row(0), label + ", t = 0"));
      const double t_end = traj.row_dt * static_cast<double>(traj.n_rows() - 1);
      char buf[32];
      std::snprintf(buf, sizeof(buf), ", t = %g", t_end);
      plots.push_back(phase_circle(traj.observed_phases.row(traj.observed_phases.rows() - 1), label + buf));
    }
    return 0;
  });
  io::write_text(out / "phase_circles.svg", svg::grid_document(plots, 2));
  m.output(out / "phase_circles.svg");
}

std::vector<fs::path> dataset_files(const fs::path& dir) {
  return {dir / "params.csv", dir / "features.csv", dir / "standardizer.json", dir / "config.json"};
}

void cmd_gen_data(const RunConfig& rc, const fs::path& out, Manifest& m) {
  const auto& cfg = rc.experiment;
  auto [train, val] = m.stage("simulate_train_val", [&] { return data::generate(cfg); });
  auto test = m.stage("simulate_test", [&] { return data::generate_test(cfg, train.standardizer); });
  m.stage("write", [&] {
    for (auto [name, ds] : {std::pair{"train", &train}, std::pair{"val", &val}, std::pair{"test", &test}}) {
      data::save_dataset(out / name, *ds, cfg);
      m.outputs(dataset_files(out / name));
    }
    return 0;
  });
}

data::Dataset load_split(const fs::path& data_dir, const std::string& split, const RunConfig& rc) {
  data::ExperimentConfig dcfg;
  auto ds = data::load_dataset(data_dir / split, &dcfg);
  if (dcfg.scenario != rc.experiment.scenario)
    throw ConfigError("dataset " + (data_dir / split).string() + " is for the " + data::to_string(dcfg.scenario) +
                      " scenario but the config says " + data::to_string(rc.experiment.scenario));
  if (ds.params.cols() != static_cast<Eigen::Index>(rc.experiment.param_dim()))
    throw ConfigError("dataset parameter dimension does not match the config");
  return ds;
}

void write_loss_curve(const fs::path& path, const std::vector<flow::EpochLog>& log) {
  std::vector<double> e, tr, va;
  for (const auto& l : log) {
    e.push_back(static_cast<double>(l.epoch));
    tr.push_back(l.train_loss);
    va.push_back(l.val_loss);
  }
  svg::Plot p(520, 340, "training loss", "epoch", "negative log posterior");
  p.line(e, tr, "#1f4e99");
  p.line(e, va, "#c0392b");
  p.legend("train", "#1f4e99");
  p.legend("validation", "#c0392b");
  io::write_text(path, svg::document(p));
}

void cmd_train(const RunConfig& rc, const fs::path& data_dir, const fs::path& out, Manifest& m) {
  m.input("data", data_dir);
  const auto train = m.stage("load", [&] { return load_split(data_dir, "train", rc); });
  const auto val = load_split(data_dir, "val", rc);
  if (train.standardizer.hash() != val.standardizer.hash())
    throw DependencyError("train and val splits carry different standardizers");
  const auto spec = flow::flow_spec_from_json(rc.flow, flow::default_flow_spec(rc.experiment, train.standardizer.context_dim()));
  auto result = m.stage("train", [&] { return flow::train(train, val, rc.experiment, spec); });
  spdlog::info("best epoch {} of {}", result.best_epoch, result.log.size());
  flow::save_checkpoint(out / "model.kflow", result.model, train.standardizer, result.log);
  flow::write_training_log(out / "training_log.csv", result.log);
  write_loss_curve(out / "loss_curve.svg", result.log);
  io::write_json(out / "training.json", io::Json{{"best_epoch", result.best_epoch},
                                                 {"nan_recoveries", result.nan_recoveries},
                                                 {"n_parameters", result.model.n_parameters()},
                                                 {"flow", flow::to_json(result.model.spec())}});
  m.outputs({out / "model.kflow", out / "training_log.csv", out / "loss_curve.svg", out / "training.json"});
}

// Raw context features from an n_obs x 6 table, dropping leading rows if the table
// still includes the rows the context skips.
std::vector<double> context_from_table(const Eigen::MatrixXd& table, const data::Standardizer& st,
                                       std::size_t first_row) {
  const auto n = static_cast<std::size_t>(table.rows());
  const std::size_t want = st.feature_dim() / summary::kStatsPerStep;
  std::size_t skip = 0;
  if (n == want + first_row)
    skip = first_row;
  else if (n != want)
    throw ConfigError("observation has " + std::to_string(n) + " rows; the model expects " + std::to_string(want));
  std::vector<double> flat;
  for (std::size_t t = skip; t < n; ++t)
    for (Eigen::Index k = 0; k < table.cols(); ++k) flat.push_back(table(static_cast<Eigen::Index>(t), k));
  return flat;
}

void cmd_infer(const RunConfig& rc, const fs::path& model_path, const fs::path& data_dir, const fs::path& observation,
               const fs::path& out, Manifest& m) {
  m.input("model", model_path);
  const auto ckpt = m.stage("load", [&] { return flow::load_checkpoint(model_path); });
  if (ckpt.model.spec().param_dim != rc.experiment.param_dim())
    throw ConfigError("checkpoint parameter dimension does not match the config scenario");
  std::vector<diag::PosteriorSamples> cases;
  if (!observation.empty()) {
    m.input("observation", observation);
    const auto table = io::read_csv(observation).values;
    const auto raw = context_from_table(table, ckpt.standardizer, rc.experiment.context_first_row);
    data::Dataset one;
    one.params = Eigen::Map<const Eigen::RowVectorXd>(rc.truth.data(), static_cast<Eigen::Index>(rc.truth.size()));
    one.features = Eigen::Map<const Eigen::RowVectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size()));
    cases = m.stage("sample", [&] {
      return pipeline::infer_test_set(ckpt.model, ckpt.standardizer, one, rc.experiment.posterior_draws, rc.experiment.seed);
    });
  } else {
    if (data_dir.empty()) throw ConfigError("infer needs --data or --observation");
    m.input("data", data_dir);
    const auto test = load_split(data_dir, "test", rc);
    if (test.standardizer.hash() != ckpt.standardizer.hash())
      throw DependencyError("checkpoint standardizer " + ckpt.standardizer.hash() + " does not match dataset standardizer " +
                            test.standardizer.hash());
    cases = m.stage("sample", [&] {
      return pipeline::infer_test_set(ckpt.model, ckpt.standardizer, test, rc.experiment.posterior_draws, rc.experiment.seed);
    });
  }
  diag::save_posterior_dir(out, cases);
  m.output(out / "index.json");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "case_%04zu.csv", i);
    m.output(out / name);
  }
}

void cmd_diagnose(const RunConfig& rc, const fs::path& posterior_dir, const fs::path& out, Manifest& m) {
  m.input("posterior", posterior_dir);
  const auto cases = m.stage("load", [&] { return diag::load_posterior_dir(posterior_dir); });
  for (const auto& c : cases) c.validate(&rc.experiment.prior);
  const auto report = m.stage("metrics", [&] {
    return diag::evaluate(cases, rc.experiment.prior, stream_seed(rc.experiment.seed, 0x917));
  });
  auto j = report.to_json();
  j["mean"] = {{"nrmse", pipeline::mean_of(report.nrmse)},
               {"posterior_contraction", pipeline::mean_of(report.contraction)},
               {"calibration_error", pipeline::mean_of(report.calibration_error)}};
  io::write_json(out / "metrics.json", j);
  m.output(out / "metrics.json");
  m.outputs(m.stage("plots", [&] { return diag::write_diagnostic_plots(out, cases, report, rc.experiment.prior); }));
}

void cmd_mcmc(const RunConfig& rc, const fs::path& observation, const fs::path& out, Manifest& m) {
  Eigen::MatrixXd observed;
  if (!observation.empty()) {
    m.input("observation", observation);
    observed = io::read_csv(observation).values;
  } else {
    observed = observed_features(rc);
  }
  io::write_csv(out / "observed_features.csv", {summary::kStatNames.begin(), summary::kStatNames.end()}, observed);
  const auto run = m.stage("chain", [&] {
    return mcmc::run_ecdf_mcmc(mcmc::kuramoto_simulator(rc.experiment), observed, rc.experiment.prior, rc.likelihood,
                               rc.chain, rc.reference);
  });
  mcmc::write_chain_csv(out / "chain.csv", run.chain);
  const std::size_t d = rc.experiment.param_dim();
  io::write_csv(out / "draws.csv", io::numbered("kappa", d), run.chain.draws);
  auto summary = run.summary();
  if (observation.empty()) summary["truth"] = rc.truth;
  summary["likelihood"] = mcmc::to_json(run.spec);
  summary["chain"] = mcmc::to_json(rc.chain);
  io::write_json(out / "summary.json", summary);

  std::vector<svg::Plot> traces, hists;
  for (std::size_t k = 0; k < d; ++k) {
    const auto name = "kappa_" + std::to_string(k + 1);
    std::vector<double> it, v;
    const auto col = run.chain.states.col(static_cast<Eigen::Index>(k));
    const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(col.size()) / 2000);
    for (Eigen::Index i = 0; i < col.size(); i += static_cast<Eigen::Index>(stride)) {
      it.push_back(static_cast<double>(i));
      v.push_back(col(i));
    }
    svg::Plot tr(520, 220, "trace " + name, "iteration", name);
    tr.line(it, v, "#1f4e99", 1.0);
    tr.vline(static_cast<double>(rc.chain.burn_in), "#888");
    traces.push_back(std::move(tr));

    const auto draws = run.chain.draws.col(static_cast<Eigen::Index>(k));
    const double lo = rc.experiment.prior.lower[k], hi = rc.experiment.prior.upper[k];
    std::vector<double> edges, counts(40, 0.0);
    for (int b = 0; b <= 40; ++b) edges.push_back(lo + (hi - lo) * b / 40.0);
    for (Eigen::Index i = 0; i < draws.size(); ++i)
      counts[std::min<std::size_t>(39, static_cast<std::size_t>((draws(i) - lo) / (hi - lo) * 40.0))] += 1.0;
    svg::Plot h(320, 260, name, name, "count");
    h.set_x_range(lo, hi);
    h.histogram(edges, counts, "#4a7fb5");
    if (observation.empty()) h.vline(rc.truth[k], "#c0392b");
    hists.push_back(std::move(h));
  }
  io::write_text(out / "trace.svg", svg::grid_document(traces, 1));
  io::write_text(out / "posterior.svg", svg::grid_document(hists, std::min<std::size_t>(d, 3)));
  m.outputs({out / "observed_features.csv", out / "chain.csv", out / "draws.csv", out / "summary.json",
             out / "trace.svg", out / "posterior.svg"});
}

void cmd_compare(const RunConfig& rc, const fs::path& npe_dir, const fs::path& mcmc_dir, const fs::path& out,
                 Manifest& m) {
  m.input("npe", npe_dir);
  m.input("mcmc", mcmc_dir);
  const auto cases = diag::load_posterior_dir(npe_dir);
  if (rc.compare_case >= cases.size())
    throw ConfigError("config key 'compare.case' is " + std::to_string(rc.compare_case) + " but the posterior has " +
                      std::to_string(cases.size()) + " cases");
  const auto& npe = cases[rc.compare_case];
  if (!fs::exists(mcmc_dir / "draws.csv")) throw DependencyError(mcmc_dir.string() + " has no draws.csv");
  const Eigen::MatrixXd mc = io::read_csv(mcmc_dir / "draws.csv").values;
  const std::size_t d = rc.experiment.param_dim();
  if (npe.dim() != d || static_cast<std::size_t>(mc.cols()) != d)
    throw ConfigError("posterior dimensions do not match the config scenario");

  constexpr std::size_t kBins = 40;
  Eigen::MatrixXd table(static_cast<Eigen::Index>(d * kBins), 5);
  std::vector<svg::Plot> plots;
  for (std::size_t k = 0; k < d; ++k) {
    const double lo = rc.experiment.prior.lower[k], hi = rc.experiment.prior.upper[k];
    const double w = (hi - lo) / kBins;
    std::vector<double> edges, dn(kBins, 0.0), dm(kBins, 0.0);
    for (std::size_t b = 0; b <= kBins; ++b) edges.push_back(lo + w * static_cast<double>(b));
    auto fill = [&](const Eigen::MatrixXd& draws, std::vector<double>& dens) {
      for (Eigen::Index i = 0; i < draws.rows(); ++i) {
        const double v = draws(i, static_cast<Eigen::Index>(k));
        if (v < lo || v > hi) continue;
        dens[std::min(kBins - 1, static_cast<std::size_t>((v - lo) / w))] += 1.0;
      }
      for (auto& x : dens) x /= static_cast<double>(draws.rows()) * w;
    };
    fill(npe.draws, dn);
    fill(mc, dm);
    for (std::size_t b = 0; b < kBins; ++b)
      table.row(static_cast<Eigen::Index>(k * kBins + b)) << static_cast<double>(k + 1), edges[b], edges[b + 1], dn[b], dm[b];
    const auto name = "kappa_" + std::to_string(k + 1);
    svg::Plot p(340, 270, name, name, "density");
    p.set_x_range(lo, hi);
    p.histogram(edges, dn, "#4a7fb5", 0.5);
    p.histogram(edges, dm, "#e67e22", 0.5);
    p.vline(npe.truth[k], "#c0392b");
    p.legend("NPE", "#4a7fb5");
    p.legend("MCMC", "#e67e22");
    plots.push_back(std::move(p));
  }
  io::write_csv(out / "compare.csv", {"param", "bin_lo", "bin_hi", "npe_density", "mcmc_density"}, table);
  io::write_text(out / "compare.svg", svg::grid_document(plots, std::min<std::size_t>(d, 3)));
  m.outputs({out / "compare.csv", out / "compare.svg"});
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return 2;
  if (dynamic_cast<const DependencyError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Amortized inference of Kuramoto coupling constants"};
  app.set_version_flag("--version", std::string(KABI_VERSION));
  app.require_subcommand(1);

  struct Common {
    std::string config, out;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    bool verbose = false;
    std::string data, model, posterior, observation, npe, mcmc;
  } opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--threads", opt.threads, "worker threads (default: KABI_THREADS or all cores)");
    sub->add_flag("--verbose,-v", opt.verbose, "progress logging");
  };

  auto* simulate = app.add_subcommand("simulate", "simulate trajectories and draw first/final phase states");
  auto* gen = app.add_subcommand("gen-data", "simulate train/val/test datasets");
  auto* train = app.add_subcommand("train", "train the conditional flow on a dataset");
  auto* infer = app.add_subcommand("infer", "draw posterior samples for the test split or one observation");
  auto* diagnose = app.add_subcommand("diagnose", "metrics and calibration plots for posterior samples");
  auto* mcmc_cmd = app.add_subcommand("mcmc", "ECDF synthetic-likelihood Metropolis baseline");
  auto* compare = app.add_subcommand("compare", "overlay NPE and MCMC posteriors for one observation");
  for (auto* s : {simulate, gen, train, infer, diagnose, mcmc_cmd, compare}) add_common(s);
  train->add_option("--data", opt.data, "dataset directory from gen-data")->required();
  infer->add_option("--model", opt.model, "checkpoint from train")->required();
  auto* infer_data = infer->add_option("--data", opt.data, "dataset directory; its test split is used");
  infer->add_option("--observation", opt.observation, "summary-feature CSV of one observed dataset")->excludes(infer_data);
  diagnose->add_option("--posterior", opt.posterior, "posterior directory from infer")->required();
  mcmc_cmd->add_option("--observation", opt.observation, "summary-feature CSV (default: simulate mcmc.truth)");
  compare->add_option("--npe", opt.npe, "posterior directory from infer")->required();
  compare->add_option("--mcmc", opt.mcmc, "output directory of mcmc")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  spdlog::set_level(opt.verbose ? spdlog::level::info : spdlog::level::warn);
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;
    const auto rc = load_run_config(opt.config, seed_given ? &opt.seed : nullptr);
    const std::size_t threads = resolve_threads(opt.threads);
    set_default_threads(threads);
    const fs::path out = opt.out;
    fs::create_directories(out);
    Manifest manifest(command, out);
    manifest.input("config", opt.config);

    if (command == "simulate")
      cmd_simulate(rc, out, manifest);
    else if (command == "gen-data")
      cmd_gen_data(rc, out, manifest);
    else if (command == "train")
      cmd_train(rc, opt.data, out, manifest);
    else if (command == "infer")
      cmd_infer(rc, opt.model, opt.data, opt.observation, out, manifest);
    else if (command == "diagnose")
      cmd_diagnose(rc, opt.posterior, out, manifest);
    else if (command == "mcmc")
      cmd_mcmc(rc, opt.observation, out, manifest);
    else if (command == "compare")
      cmd_compare(rc, opt.npe, opt.mcmc, out, manifest);

    if (!manifest.finish(rc, threads)) {
      std::cerr << "kabi " << command << ": some outputs failed validation (see manifest.json)\n";
      return 5;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "kabi " << command << ": error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace kabi::cli
