#pragma once

// Random-walk Metropolis with a Gaussian synthetic likelihood over ECDF vectors of the
// per-step summary features.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "kabi/dataset.hpp"
#include "kabi/io.hpp"

namespace kabi::mcmc {

struct EcdfLikelihoodSpec {
  std::vector<std::size_t> features{0, 1, 2, 3, 4, 5};  // columns of the n_obs x 6 summary matrix
  std::vector<std::vector<double>> bin_edges;           // one grid per selected feature
  std::size_t n_edges = 20;
  double edge_lower_quantile = 0.01;
  double edge_upper_quantile = 0.99;
  std::size_t n_replicates = 300;          // pooled covariance at the reference point
  std::size_t n_replicates_proposal = 10;  // mean re-estimate per evaluated theta
  double lambda_reg = 1e-3;
  // Pooled: covariance fixed at the reference point, only the mean re-estimated per theta.
  // PerTheta: mean and covariance both re-estimated from the n_replicates_proposal runs.
  enum class Covariance { Pooled, PerTheta } covariance = Covariance::Pooled;

  std::size_t dim() const;
  void validate() const;  // requires bin_edges
};

io::Json to_json(const EcdfLikelihoodSpec& spec);
EcdfLikelihoodSpec ecdf_spec_from_json(const io::Json& j, const EcdfLikelihoodSpec& defaults);

// Per selected feature, the fraction of rows <= each edge, concatenated.
Eigen::VectorXd ecdf_vector(const Eigen::MatrixXd& per_step, const EcdfLikelihoodSpec& spec);

// Equally spaced edges between the pooled lower and upper quantiles of each feature.
std::vector<std::vector<double>> quantile_bin_edges(const std::vector<Eigen::MatrixXd>& replicates,
                                                    const EcdfLikelihoodSpec& spec);

struct GaussianSyntheticLikelihood {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // regularized
  Eigen::MatrixXd chol;  // lower factor of cov
  double lambda_reg = 0.0;  // value that made cov positive definite
  double log_det = 0.0;

  double log_density(const Eigen::VectorXd& x) const;
  // Same mean, covariance scaled by `factor`.
  double log_density_scaled(const Eigen::VectorXd& x, double factor) const;
};

// Mean and (R - 1)-normalized covariance of the rows of `vectors`, plus lambda * I. A failed
// Cholesky retries with lambda multiplied by ten, at most three times.
GaussianSyntheticLikelihood fit_gaussian(const Eigen::MatrixXd& vectors, double lambda_reg);

// n_obs x 6 summary matrix of one simulation at theta.
using FeatureSimulator = std::function<Eigen::MatrixXd(std::span<const double> theta, std::uint64_t seed)>;

FeatureSimulator kuramoto_simulator(const data::ExperimentConfig& config);

class SyntheticLikelihood {
 public:
  SyntheticLikelihood(FeatureSimulator simulator, EcdfLikelihoodSpec spec);

  // Simulates n_replicates runs at theta_ref, fixes any missing bin edges from them and
  // fits the pooled covariance.
  void fit_reference(std::span<const double> theta_ref, std::uint64_t seed);
  // Fit from precomputed replicate summaries.
  void fit_reference(const std::vector<Eigen::MatrixXd>& replicates);

  const EcdfLikelihoodSpec& spec() const { return spec_; }
  const GaussianSyntheticLikelihood& reference() const { return reference_; }

  Eigen::VectorXd mean_at(std::span<const double> theta, std::uint64_t seed) const;
  // log N(observed; mean_at(theta), (1 + 1/R_prop) Sigma_ref); the factor accounts for the
  // Monte-Carlo error of the estimated mean.
  double log_likelihood(std::span<const double> theta, const Eigen::VectorXd& observed, std::uint64_t seed) const;

 private:
  FeatureSimulator simulator_;
  EcdfLikelihoodSpec spec_;
  GaussianSyntheticLikelihood reference_;
  bool fitted_ = false;
};

struct ChainConfig {
  std::size_t n_iterations = 50000;
  std::size_t burn_in = 10000;
  std::size_t thinning = 5;
  std::vector<double> proposal_std;  // empty: 2% of each prior range
  std::uint64_t seed = 41;
  // Re-estimate the current state's log target every iteration instead of reusing it
  // (Monte Carlo within Metropolis). Doubles the cost; keeps noisy targets from sticking.
  bool refresh_current = false;

  void validate(std::size_t dim) const;
  std::vector<double> resolved_proposal_std(const data::PriorSpec& prior) const;
};

io::Json to_json(const ChainConfig& c);
ChainConfig chain_config_from_json(const io::Json& j, const ChainConfig& defaults);

// Log target up to a constant; the second argument seeds any randomness in the evaluation.
using LogDensity = std::function<double(std::span<const double> theta, std::uint64_t eval_seed)>;

struct ChainResult {
  Eigen::MatrixXd states;         // every iteration, n_iterations x d
  Eigen::VectorXd log_like;       // current log target after each iteration
  std::vector<std::uint8_t> accepted;
  Eigen::MatrixXd draws;          // after burn-in and thinning
  double acceptance_rate = 0.0;   // over post-burn-in iterations
  double early_acceptance = 0.0;  // first 1000 post-burn-in iterations
  bool low_acceptance = false;
};

// Uniform prior: proposals outside the box are rejected without evaluating the likelihood.
ChainResult metropolis(const LogDensity& log_like, const data::PriorSpec& prior, const ChainConfig& config,
                       std::span<const double> initial);

// Effective sample size per column by batch means.
std::vector<double> effective_sample_size(const Eigen::MatrixXd& draws);
// Maximum of a Gaussian kernel density estimate (Silverman bandwidth) inside [lo, hi].
double kde_mode(std::span<const double> values, double lo, double hi, std::size_t grid = 512);

void write_chain_csv(const std::filesystem::path& path, const ChainResult& chain);

struct ReferenceOptions {
  std::vector<double> theta;          // empty: locate by a pilot chain started at the prior center
  std::size_t pilot_iterations = 600;  // second half averaged
  std::size_t variance_repeats = 20;   // log-likelihood evaluations at the reference point
};

io::Json to_json(const ReferenceOptions& r);
ReferenceOptions reference_from_json(const io::Json& j, const ReferenceOptions& defaults);

struct McmcRun {
  EcdfLikelihoodSpec spec;  // with the bin edges actually used
  std::vector<double> theta_ref;
  Eigen::VectorXd observed_ecdf;
  double log_like_variance = 0.0;  // spread of repeated evaluations at theta_ref
  double covariance_lambda = 0.0;
  ChainResult chain;
  std::vector<double> mode, mean, ess;
  io::Json summary() const;
};

// Full baseline for one observed n_obs x 6 summary matrix.
McmcRun run_ecdf_mcmc(const FeatureSimulator& simulator, const Eigen::MatrixXd& observed,
                      const data::PriorSpec& prior, const EcdfLikelihoodSpec& spec, const ChainConfig& chain,
                      const ReferenceOptions& reference = {});

}  // namespace kabi::mcmc
