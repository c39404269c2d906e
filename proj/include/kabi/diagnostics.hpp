#pragma once

// Evaluation of posterior draws against known truths over a test set.

#include <Eigen/Core>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kabi/dataset.hpp"
#include "kabi/io.hpp"
#include "kabi/rng.hpp"

namespace kabi::diag {

enum class Source { NPE, MCMC };
std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct PosteriorSamples {
  Eigen::MatrixXd draws;  // n_d x d
  std::vector<double> truth;
  Source source = Source::NPE;
  std::string context_hash;

  std::size_t dim() const { return static_cast<std::size_t>(draws.cols()); }
  std::size_t n_draws() const { return static_cast<std::size_t>(draws.rows()); }
  void validate(const data::PriorSpec* prior = nullptr) const;
};

// Linear-interpolation quantile (Hyndman-Fan type 7) of an ascending sample.
double quantile_sorted(std::span<const double> sorted, double q);

// Randomized rank of the truth among the draws, per parameter:
// (#draws < truth + U * (#ties + 1)) / (n_d + 1).
std::vector<double> pit(const PosteriorSamples& samples, Rng& rng);

struct EcdfBand {
  std::vector<double> sorted_pit;  // ECDF jump locations
  std::vector<double> grid;        // evaluation points
  std::vector<double> ecdf;        // ECDF at grid
  std::vector<double> lower;       // band at grid
  std::vector<double> upper;
  bool inside = true;
};

inline constexpr std::size_t kEcdfGridPoints = 100;

// Pointwise binomial envelope at per-point level 1 - (1 - alpha)^(1/100) (Sidak).
EcdfBand pit_ecdf_band(std::span<const double> pits, double alpha = 0.05);

// Smallest k with P(Binomial(n, p) <= k) >= q.
std::size_t binomial_quantile(std::size_t n, double p, double q);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
KsResult ks_uniform(std::span<const double> values);

// Posterior-mean RMSE divided by the prior range, per parameter.
std::vector<double> nrmse(std::span<const PosteriorSamples> cases, const data::PriorSpec& prior);
// Mean over cases of 1 - var(draws) / var(prior), per parameter.
std::vector<double> posterior_contraction(std::span<const PosteriorSamples> cases, const data::PriorSpec& prior);

inline constexpr std::size_t kCalibrationLevels = 19;  // 0.05, 0.10, ..., 0.95
// Median over the credible levels of |empirical coverage - level|, per parameter.
std::vector<double> calibration_error(std::span<const PosteriorSamples> cases);
// Coverage of central intervals at each level, per parameter: [param][level].
std::vector<std::vector<double>> interval_coverage(std::span<const PosteriorSamples> cases);

struct RecoveryRow {
  std::size_t case_index = 0;
  std::size_t param = 0;
  double truth = 0.0;
  double mean = 0.0;
  double lower = 0.0;  // 5% quantile
  double upper = 0.0;  // 95% quantile
};
std::vector<RecoveryRow> recovery_table(std::span<const PosteriorSamples> cases);

struct MetricsReport {
  std::size_t n_test = 0;
  std::vector<double> nrmse;
  std::vector<double> contraction;
  std::vector<double> calibration_error;
  Eigen::MatrixXd pit;  // n_test x d
  std::vector<KsResult> pit_ks;
  std::vector<bool> ecdf_inside;

  io::Json to_json() const;
};

MetricsReport evaluate(std::span<const PosteriorSamples> cases, const data::PriorSpec& prior, std::uint64_t seed);

// CSV `kappa_1..kappa_d` of draws; truth/source/hash live in the caller's index file.
void write_samples_csv(const std::filesystem::path& path, const PosteriorSamples& s);

// Directory of case_NNNN.csv files plus index.json with truth, source and context hash.
void save_posterior_dir(const std::filesystem::path& dir, std::span<const PosteriorSamples> cases);
std::vector<PosteriorSamples> load_posterior_dir(const std::filesystem::path& dir);

// SVG figures plus their CSV tables into `dir`; returns the written paths.
std::vector<std::filesystem::path> write_diagnostic_plots(const std::filesystem::path& dir,
                                                          std::span<const PosteriorSamples> cases,
                                                          const MetricsReport& report, const data::PriorSpec& prior,
                                                          std::size_t n_histograms = 10);

}  // namespace kabi::diag
