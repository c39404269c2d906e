#include "kabi/mcmc.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <spdlog/spdlog.h>

#include "kabi/diagnostics.hpp"
#include "kabi/error.hpp"
#include "kabi/features.hpp"
#include "kabi/json_fields.hpp"
#include "kabi/parallel.hpp"
#include "kabi/rng.hpp"

namespace kabi::mcmc {

std::size_t EcdfLikelihoodSpec::dim() const {
  std::size_t d = 0;
  for (const auto& e : bin_edges) d += e.size();
  return d;
}

void EcdfLikelihoodSpec::validate() const {
  if (features.empty()) throw ConfigError("ECDF likelihood needs at least one feature");
  for (auto f : features)
    if (f >= summary::kStatsPerStep) throw ConfigError("ECDF feature index out of range");
  if (n_edges < 2) throw ConfigError("ECDF likelihood needs at least two bin edges");
  if (n_replicates < 2 || n_replicates_proposal < 1) throw ConfigError("ECDF likelihood needs R >= 2 replicates");
  if (covariance == Covariance::PerTheta && n_replicates_proposal < 2)
    throw ConfigError("per-theta covariance needs n_replicates_proposal >= 2");
  if (!(lambda_reg >= 0.0)) throw ConfigError("lambda_reg must be nonnegative");
  if (!(edge_lower_quantile >= 0.0 && edge_lower_quantile < edge_upper_quantile && edge_upper_quantile <= 1.0))
    throw ConfigError("edge quantiles must satisfy 0 <= lower < upper <= 1");
  if (bin_edges.size() != features.size()) throw ConfigError("one bin-edge grid per selected feature is required");
  for (const auto& e : bin_edges) {
    if (e.size() < 2) throw ConfigError("ECDF likelihood needs at least two bin edges");
    for (std::size_t i = 1; i < e.size(); ++i)
      if (!(e[i] > e[i - 1])) throw ConfigError("bin edges must be strictly increasing");
  }
}

io::Json to_json(const EcdfLikelihoodSpec& s) {
  return io::Json{{"features", s.features},
                  {"n_edges", s.n_edges},
                  {"edge_lower_quantile", s.edge_lower_quantile},
                  {"edge_upper_quantile", s.edge_upper_quantile},
                  {"n_replicates", s.n_replicates},
                  {"n_replicates_proposal", s.n_replicates_proposal},
                  {"lambda_reg", s.lambda_reg},
                  {"covariance", s.covariance == EcdfLikelihoodSpec::Covariance::Pooled ? "pooled" : "per_theta"},
                  {"bin_edges", s.bin_edges}};
}

EcdfLikelihoodSpec ecdf_spec_from_json(const io::Json& j, const EcdfLikelihoodSpec& d) {
  EcdfLikelihoodSpec s = d;
  const std::string p = "likelihood";
  s.features = io::field_or(j, "features", p, d.features);
  s.n_edges = io::field_or(j, "n_edges", p, d.n_edges);
  s.edge_lower_quantile = io::field_or(j, "edge_lower_quantile", p, d.edge_lower_quantile);
  s.edge_upper_quantile = io::field_or(j, "edge_upper_quantile", p, d.edge_upper_quantile);
  s.n_replicates = io::field_or(j, "n_replicates", p, d.n_replicates);
  s.n_replicates_proposal = io::field_or(j, "n_replicates_proposal", p, d.n_replicates_proposal);
  s.lambda_reg = io::field_or(j, "lambda_reg", p, d.lambda_reg);
  s.bin_edges = io::field_or(j, "bin_edges", p, d.bin_edges);
  const auto cov = io::field_or<std::string>(j, "covariance", p,
                                             d.covariance == EcdfLikelihoodSpec::Covariance::Pooled ? "pooled" : "per_theta");
  if (cov == "pooled")
    s.covariance = EcdfLikelihoodSpec::Covariance::Pooled;
  else if (cov == "per_theta")
    s.covariance = EcdfLikelihoodSpec::Covariance::PerTheta;
  else
    throw ConfigError("config key 'likelihood.covariance' must be \"pooled\" or \"per_theta\"");
  return s;
}

Eigen::VectorXd ecdf_vector(const Eigen::MatrixXd& per_step, const EcdfLikelihoodSpec& spec) {
  if (spec.bin_edges.size() != spec.features.size()) throw ConfigError("ECDF spec has no bin edges for some features");
  const Eigen::Index n = per_step.rows();
  if (n == 0) throw ConfigError("ECDF of an empty feature matrix");
  Eigen::VectorXd out(static_cast<Eigen::Index>(spec.dim()));
  Eigen::Index pos = 0;
  std::vector<double> col(static_cast<std::size_t>(n));
  for (std::size_t f = 0; f < spec.features.size(); ++f) {
    for (Eigen::Index t = 0; t < n; ++t) col[static_cast<std::size_t>(t)] = per_step(t, static_cast<Eigen::Index>(spec.features[f]));
    std::sort(col.begin(), col.end());
    for (double edge : spec.bin_edges[f]) {
      const auto count = std::upper_bound(col.begin(), col.end(), edge) - col.begin();
      out(pos++) = static_cast<double>(count) / static_cast<double>(n);
    }
  }
  return out;
}

std::vector<std::vector<double>> quantile_bin_edges(const std::vector<Eigen::MatrixXd>& replicates,
                                                    const EcdfLikelihoodSpec& spec) {
  if (replicates.empty()) throw ConfigError("bin edges need at least one replicate");
  std::vector<std::vector<double>> edges;
  for (auto f : spec.features) {
    std::vector<double> pooled;
    for (const auto& r : replicates)
      for (Eigen::Index t = 0; t < r.rows(); ++t) pooled.push_back(r(t, static_cast<Eigen::Index>(f)));
    std::sort(pooled.begin(), pooled.end());
    auto q = [&](double p) {
      const double h = (static_cast<double>(pooled.size()) - 1.0) * p;
      const auto lo = static_cast<std::size_t>(h);
      const std::size_t hi = std::min(lo + 1, pooled.size() - 1);
      return pooled[lo] + (h - static_cast<double>(lo)) * (pooled[hi] - pooled[lo]);
    };
    double lo = q(spec.edge_lower_quantile), hi = q(spec.edge_upper_quantile);
    if (!(hi > lo)) {
      // Degenerate feature at the reference point: spread a small grid around the value.
      const double w = std::max(1e-6, 1e-3 * std::abs(lo));
      lo -= w;
      hi += w;
    }
    std::vector<double> e(spec.n_edges);
    for (std::size_t i = 0; i < spec.n_edges; ++i)
      e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(spec.n_edges - 1);
    edges.push_back(std::move(e));
  }
  return edges;
}

double GaussianSyntheticLikelihood::log_density_scaled(const Eigen::VectorXd& x, double factor) const {
  if (x.size() != mean.size()) throw ConfigError("synthetic likelihood dimension mismatch");
  const Eigen::VectorXd diff = x - mean;
  const Eigen::VectorXd w = chol.triangularView<Eigen::Lower>().solve(diff);
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * (log_det + d * std::log(factor)) -
         0.5 * w.squaredNorm() / factor;
}

double GaussianSyntheticLikelihood::log_density(const Eigen::VectorXd& x) const { return log_density_scaled(x, 1.0); }

GaussianSyntheticLikelihood fit_gaussian(const Eigen::MatrixXd& vectors, double lambda_reg) {
  const Eigen::Index r = vectors.rows(), d = vectors.cols();
  if (r < 2) throw ConfigError("synthetic likelihood needs at least two replicates");
  GaussianSyntheticLikelihood g;
  g.mean = vectors.colwise().mean().transpose();
  // Shifting by the first row first keeps identical replicates at exactly zero spread.
  const Eigen::MatrixXd shifted = vectors.rowwise() - vectors.row(0);
  const Eigen::MatrixXd centered = shifted.rowwise() - shifted.colwise().mean();
  const Eigen::MatrixXd sample_cov = centered.transpose() * centered / static_cast<double>(r - 1);
  double lambda = lambda_reg;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    g.cov = sample_cov;
    g.cov.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
    if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0.0).all()) {
      g.chol = llt.matrixL();
      g.lambda_reg = lambda;
      g.log_det = 2.0 * g.chol.diagonal().array().log().sum();
      if (attempt > 0) spdlog::warn("covariance regularization raised to {}", lambda);
      return g;
    }
    lambda = lambda > 0.0 ? lambda * 10.0 : 1e-12;
  }
  throw NumericError("synthetic-likelihood covariance is not positive definite after regularization (lambda " +
                     std::to_string(lambda / 10.0) + ", dim " + std::to_string(d) + ")");
}

FeatureSimulator kuramoto_simulator(const data::ExperimentConfig& config) {
  auto cfg = data::resolve(config);
  return [cfg](std::span<const double> theta, std::uint64_t seed) {
    return data::simulate_features(cfg, theta, seed).as_matrix();
  };
}

SyntheticLikelihood::SyntheticLikelihood(FeatureSimulator simulator, EcdfLikelihoodSpec spec)
    : simulator_(std::move(simulator)), spec_(std::move(spec)) {}

namespace {

std::vector<Eigen::MatrixXd> replicate(const FeatureSimulator& sim, std::span<const double> theta, std::size_t n,
                                       std::uint64_t seed) {
  std::vector<Eigen::MatrixXd> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = sim(theta, stream_seed(seed, i)); });
  return out;
}

}  // namespace

void SyntheticLikelihood::fit_reference(std::span<const double> theta_ref, std::uint64_t seed) {
  fit_reference(replicate(simulator_, theta_ref, spec_.n_replicates, seed));
}

void SyntheticLikelihood::fit_reference(const std::vector<Eigen::MatrixXd>& replicates) {
  if (spec_.bin_edges.empty()) spec_.bin_edges = quantile_bin_edges(replicates, spec_);
  spec_.validate();
  Eigen::MatrixXd vectors(static_cast<Eigen::Index>(replicates.size()), static_cast<Eigen::Index>(spec_.dim()));
  for (std::size_t i = 0; i < replicates.size(); ++i)
    vectors.row(static_cast<Eigen::Index>(i)) = ecdf_vector(replicates[i], spec_).transpose();
  reference_ = fit_gaussian(vectors, spec_.lambda_reg);
  fitted_ = true;
}

Eigen::VectorXd SyntheticLikelihood::mean_at(std::span<const double> theta, std::uint64_t seed) const {
  if (!fitted_) throw ConfigError("synthetic likelihood used before fit_reference");
  const auto reps = replicate(simulator_, theta, spec_.n_replicates_proposal, seed);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec_.dim()));
  for (const auto& r : reps) mean += ecdf_vector(r, spec_);
  return mean / static_cast<double>(reps.size());
}

double SyntheticLikelihood::log_likelihood(std::span<const double> theta, const Eigen::VectorXd& observed,
                                           std::uint64_t seed) const {
  if (spec_.covariance == EcdfLikelihoodSpec::Covariance::PerTheta) {
    if (!fitted_) throw ConfigError("synthetic likelihood used before fit_reference");
    const auto reps = replicate(simulator_, theta, spec_.n_replicates_proposal, seed);
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(reps.size()), static_cast<Eigen::Index>(spec_.dim()));
    for (std::size_t i = 0; i < reps.size(); ++i) vectors.row(static_cast<Eigen::Index>(i)) = ecdf_vector(reps[i], spec_).transpose();
    return fit_gaussian(vectors, spec_.lambda_reg).log_density(observed);
  }
  const Eigen::VectorXd mean = mean_at(theta, seed);
  // Same factor and constants as reference_, centered at the fresh mean.
  const Eigen::VectorXd diff = observed - mean;
  const Eigen::VectorXd w = reference_.chol.triangularView<Eigen::Lower>().solve(diff);
  const double d = static_cast<double>(diff.size());
  const double factor = 1.0 + 1.0 / static_cast<double>(spec_.n_replicates_proposal);
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * (reference_.log_det + d * std::log(factor)) -
         0.5 * w.squaredNorm() / factor;
}

void ChainConfig::validate(std::size_t dim) const {
  if (n_iterations == 0) throw ConfigError("chain needs at least one iteration");
  if (burn_in >= n_iterations) throw ConfigError("burn_in must be smaller than n_iterations");
  if (thinning == 0) throw ConfigError("thinning must be positive");
  if (!proposal_std.empty()) {
    if (proposal_std.size() != dim) throw ConfigError("proposal_std needs one entry per parameter");
    for (double s : proposal_std)
      if (!(s > 0.0)) throw ConfigError("proposal_std entries must be positive");
  }
}

std::vector<double> ChainConfig::resolved_proposal_std(const data::PriorSpec& prior) const {
  if (!proposal_std.empty()) return proposal_std;
  std::vector<double> s(prior.dim());
  for (std::size_t k = 0; k < prior.dim(); ++k) s[k] = 0.02 * prior.range(k);
  return s;
}

io::Json to_json(const ChainConfig& c) {
  return io::Json{{"n_iterations", c.n_iterations},
                  {"burn_in", c.burn_in},
                  {"thinning", c.thinning},
                  {"proposal_std", c.proposal_std},
                  {"seed", c.seed},
                  {"refresh_current", c.refresh_current}};
}

ChainConfig chain_config_from_json(const io::Json& j, const ChainConfig& d) {
  ChainConfig c = d;
  const std::string p = "chain";
  c.n_iterations = io::field_or(j, "n_iterations", p, d.n_iterations);
  c.burn_in = io::field_or(j, "burn_in", p, d.burn_in);
  c.thinning = io::field_or(j, "thinning", p, d.thinning);
  c.proposal_std = io::field_or(j, "proposal_std", p, d.proposal_std);
  c.seed = io::field_or(j, "seed", p, d.seed);
  c.refresh_current = io::field_or(j, "refresh_current", p, d.refresh_current);
  return c;
}

ChainResult metropolis(const LogDensity& log_like, const data::PriorSpec& prior, const ChainConfig& config,
                       std::span<const double> initial) {
  const std::size_t d = prior.dim();
  config.validate(d);
  if (initial.size() != d) throw ConfigError("initial state has the wrong dimension");
  if (!prior.contains(initial)) throw ConfigError("initial state lies outside the prior box");
  const auto step = config.resolved_proposal_std(prior);

  Rng rng(stream_seed(config.seed, 0x3c3c));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto eval_seed = [&](std::size_t i) { return stream_seed(config.seed, 0xe7a10000000ull + i); };

  std::vector<double> current(initial.begin(), initial.end()), proposal(d);
  double current_ll = log_like(current, eval_seed(0));
  if (!std::isfinite(current_ll)) throw NumericError("log-likelihood at the initial state is not finite");

  ChainResult res;
  res.states.resize(static_cast<Eigen::Index>(config.n_iterations), static_cast<Eigen::Index>(d));
  res.log_like.resize(static_cast<Eigen::Index>(config.n_iterations));
  res.accepted.assign(config.n_iterations, 0);
  std::size_t accepted_post = 0, accepted_early = 0;
  const std::size_t early_end = std::min(config.burn_in + 1000, config.n_iterations);

  for (std::size_t it = 0; it < config.n_iterations; ++it) {
    for (std::size_t k = 0; k < d; ++k) proposal[k] = current[k] + step[k] * normal(rng);
    const double u = unit(rng);
    if (config.refresh_current) {
      const double ll = log_like(current, stream_seed(config.seed, 0xc0e0000000ull + it));
      if (std::isfinite(ll)) current_ll = ll;
    }
    if (prior.contains(proposal)) {
      const double ll = log_like(proposal, eval_seed(it + 1));
      if (std::isfinite(ll) && std::log(u) < ll - current_ll) {
        current = proposal;
        current_ll = ll;
        res.accepted[it] = 1;
      }
    }
    for (std::size_t k = 0; k < d; ++k) res.states(static_cast<Eigen::Index>(it), static_cast<Eigen::Index>(k)) = current[k];
    res.log_like(static_cast<Eigen::Index>(it)) = current_ll;
    if (it >= config.burn_in) {
      accepted_post += res.accepted[it];
      if (it < early_end) accepted_early += res.accepted[it];
      if (it + 1 == early_end) {
        res.early_acceptance = static_cast<double>(accepted_early) / static_cast<double>(early_end - config.burn_in);
        if (res.early_acceptance < 0.01) {
          res.low_acceptance = true;
          spdlog::warn("acceptance rate {:.4f} over the first post-burn-in steps; reduce proposal_std",
                       res.early_acceptance);
        }
      }
    }
  }
  res.acceptance_rate = static_cast<double>(accepted_post) / static_cast<double>(config.n_iterations - config.burn_in);

  const std::size_t kept = (config.n_iterations - config.burn_in + config.thinning - 1) / config.thinning;
  res.draws.resize(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < kept; ++i)
    res.draws.row(static_cast<Eigen::Index>(i)) = res.states.row(static_cast<Eigen::Index>(config.burn_in + i * config.thinning));
  return res;
}

std::vector<double> effective_sample_size(const Eigen::MatrixXd& draws) {
  const auto n = static_cast<std::size_t>(draws.rows());
  std::vector<double> out;
  const auto batch = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  for (Eigen::Index k = 0; k < draws.cols(); ++k) {
    const auto col = draws.col(k);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(n) - 1.0);
    if (batch < 2 || var <= 0.0) {
      out.push_back(static_cast<double>(n));
      continue;
    }
    const std::size_t n_batches = n / batch;
    double bvar = 0.0;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const double m = col.segment(static_cast<Eigen::Index>(b * batch), static_cast<Eigen::Index>(batch)).mean();
      bvar += (m - mean) * (m - mean);
    }
    bvar = bvar / static_cast<double>(n_batches - 1) * static_cast<double>(batch);
    out.push_back(std::min(static_cast<double>(n), static_cast<double>(n) * var / bvar));
  }
  return out;
}

double kde_mode(std::span<const double> values, double lo, double hi, std::size_t grid) {
  if (values.empty()) throw ConfigError("KDE of an empty sample");
  if (!(hi > lo) || grid < 2) throw ConfigError("KDE grid needs lo < hi and at least two points");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / std::max(1.0, n - 1.0));
  const double h = sd > 0.0 ? 1.06 * sd * std::pow(n, -0.2) : (hi - lo) * 1e-3;
  double best_x = lo, best = -1.0;
  for (std::size_t g = 0; g < grid; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(grid - 1);
    double dens = 0.0;
    for (double v : values) {
      const double z = (x - v) / h;
      dens += std::exp(-0.5 * z * z);
    }
    if (dens > best) {
      best = dens;
      best_x = x;
    }
  }
  return best_x;
}

void write_chain_csv(const std::filesystem::path& path, const ChainResult& chain) {
  const Eigen::Index n = chain.states.rows(), d = chain.states.cols();
  Eigen::MatrixXd table(n, d + 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    table(i, 0) = static_cast<double>(i);
    table.row(i).segment(1, d) = chain.states.row(i);
    table(i, d + 1) = chain.log_like(i);
    table(i, d + 2) = chain.accepted[static_cast<std::size_t>(i)];
  }
  auto header = io::numbered("kappa", static_cast<std::size_t>(d));
  header.insert(header.begin(), "iteration");
  header.push_back("log_like");
  header.push_back("accepted");
  io::write_csv(path, header, table);
}

io::Json to_json(const ReferenceOptions& r) {
  return io::Json{{"theta", r.theta}, {"pilot_iterations", r.pilot_iterations}, {"variance_repeats", r.variance_repeats}};
}

ReferenceOptions reference_from_json(const io::Json& j, const ReferenceOptions& d) {
  ReferenceOptions r = d;
  const std::string p = "reference";
  r.theta = io::field_or(j, "theta", p, d.theta);
  r.pilot_iterations = io::field_or(j, "pilot_iterations", p, d.pilot_iterations);
  r.variance_repeats = io::field_or(j, "variance_repeats", p, d.variance_repeats);
  return r;
}

io::Json McmcRun::summary() const {
  io::Json params = io::Json::object();
  for (std::size_t k = 0; k < mode.size(); ++k)
  {
    const auto col = chain.draws.col(static_cast<Eigen::Index>(k));
    std::vector<double> sorted(col.data(), col.data() + col.size());
    std::sort(sorted.begin(), sorted.end());
    params["kappa_" + std::to_string(k + 1)] = {{"mode", mode[k]},
                                                {"mean", mean[k]},
                                                {"q05", diag::quantile_sorted(sorted, 0.05)},
                                                {"q50", diag::quantile_sorted(sorted, 0.5)},
                                                {"q95", diag::quantile_sorted(sorted, 0.95)},
                                                {"ess", ess[k]}};
  }
  return io::Json{{"acceptance_rate", chain.acceptance_rate},
                  {"early_acceptance_rate", chain.early_acceptance},
                  {"low_acceptance_warning", chain.low_acceptance},
                  {"n_draws", chain.draws.rows()},
                  {"theta_ref", theta_ref},
                  {"log_like_variance_at_ref", log_like_variance},
                  {"covariance_lambda", covariance_lambda},
                  {"parameters", params}};
}

McmcRun run_ecdf_mcmc(const FeatureSimulator& simulator, const Eigen::MatrixXd& observed,
                      const data::PriorSpec& prior, const EcdfLikelihoodSpec& spec, const ChainConfig& chain,
                      const ReferenceOptions& reference) {
  const std::size_t d = prior.dim();
  chain.validate(d);
  McmcRun run;
  auto make_target = [&](const SyntheticLikelihood& sl, const Eigen::VectorXd& obs) {
    return [&sl, obs](std::span<const double> theta, std::uint64_t seed) { return sl.log_likelihood(theta, obs, seed); };
  };

  run.theta_ref = reference.theta;
  if (run.theta_ref.empty()) {
    std::vector<double> center(d);
    for (std::size_t k = 0; k < d; ++k) center[k] = 0.5 * (prior.lower[k] + prior.upper[k]);
    SyntheticLikelihood pilot_sl(simulator, spec);
    pilot_sl.fit_reference(center, stream_seed(chain.seed, 0x9170));
    const Eigen::VectorXd obs = ecdf_vector(observed, pilot_sl.spec());
    ChainConfig pc = chain;
    pc.n_iterations = std::max<std::size_t>(reference.pilot_iterations, 2);
    pc.burn_in = pc.n_iterations / 2;
    pc.thinning = 1;
    pc.seed = stream_seed(chain.seed, 0x9171);
    // Sigma at the center can be far too narrow for the data; refreshing keeps the pilot from sticking.
    pc.refresh_current = true;
    spdlog::info("pilot chain of {} iterations from the prior center", pc.n_iterations);
    const auto pilot = metropolis(make_target(pilot_sl, obs), prior, pc, center);
    const Eigen::RowVectorXd m = pilot.draws.colwise().mean();
    run.theta_ref.assign(m.data(), m.data() + m.size());
  }
  if (run.theta_ref.size() != d || !prior.contains(run.theta_ref))
    throw ConfigError("reference theta must lie inside the prior box");

  SyntheticLikelihood sl(simulator, spec);
  sl.fit_reference(run.theta_ref, stream_seed(chain.seed, 0x9172));
  run.spec = sl.spec();
  run.covariance_lambda = sl.reference().lambda_reg;
  run.observed_ecdf = ecdf_vector(observed, run.spec);

  std::vector<double> evals;
  for (std::size_t r = 0; r < reference.variance_repeats; ++r)
    evals.push_back(sl.log_likelihood(run.theta_ref, run.observed_ecdf, stream_seed(chain.seed, 0x9173 + r)));
  if (evals.size() > 1) {
    double mu = 0.0;
    for (double v : evals) mu += v;
    mu /= static_cast<double>(evals.size());
    for (double v : evals) run.log_like_variance += (v - mu) * (v - mu);
    run.log_like_variance /= static_cast<double>(evals.size() - 1);
  }
  spdlog::info("reference theta fitted; log-likelihood variance there {:.3g}", run.log_like_variance);

  run.chain = metropolis(make_target(sl, run.observed_ecdf), prior, chain, run.theta_ref);
  run.ess = effective_sample_size(run.chain.draws);
  for (std::size_t k = 0; k < d; ++k) {
    const auto col = run.chain.draws.col(static_cast<Eigen::Index>(k));
    std::vector<double> v(col.data(), col.data() + col.size());
    run.mode.push_back(kde_mode(v, prior.lower[k], prior.upper[k]));
    run.mean.push_back(col.mean());
  }
  return run;
}

}  // namespace kabi::mcmc
