#pragma once

// Prior sampling, batch simulation, feature standardization and on-disk datasets.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kabi/features.hpp"
#include "kabi/io.hpp"
#include "kabi/oscillator.hpp"

namespace kabi::data {

enum class Scenario { Simple, Complex };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

// Independent uniform bounds per parameter.
struct PriorSpec {
  std::vector<double> lower;
  std::vector<double> upper;

  PriorSpec() = default;
  PriorSpec(std::vector<double> lo, std::vector<double> hi);  // validates

  std::size_t dim() const { return lower.size(); }
  double range(std::size_t k) const { return upper[k] - lower[k]; }
  double variance(std::size_t k) const { return range(k) * range(k) / 12.0; }
  bool contains(std::span<const double> theta) const;
  void validate() const;
};

Eigen::MatrixXd sample_prior(const PriorSpec& prior, std::size_t n, std::uint64_t seed);

// How parameters enter the flow: the prior box mapped affinely onto [-1, 1], optionally
// followed by atanh so the flow works on the whole real line.
enum class ParamMap { Affine, Atanh };

std::string to_string(ParamMap m);
ParamMap param_map_from_string(const std::string& s);

struct ExperimentConfig {
  Scenario scenario = Scenario::Simple;
  std::size_t n_train = 1u << 12;
  std::size_t n_val = 1u << 6;
  std::size_t n_test = 300;
  std::size_t posterior_draws = 1000;
  std::size_t epochs = 50;
  std::size_t batches_per_epoch = 64;
  double initial_lr = 5e-4;
  double dropout = 0.1;
  std::uint64_t seed = 41;

  // Simulation setup shared by every split.
  std::size_t n_oscillators = 100;
  osc::SimConfig sim;  // sim.seed is replaced by per-row seeds
  double omega_mean = 1.0;
  double omega_std = 0.5;
  std::vector<double> fixed_omega;  // complex scenario; drawn from the seed when empty
  PriorSpec prior{{0.0}, {5.0}};
  // Observation rows before this index are left out of the context vector.
  std::size_t context_first_row = 1;
  ParamMap param_map = ParamMap::Atanh;

  void validate() const;
  std::size_t param_dim() const { return prior.dim(); }
  std::size_t batch_size() const { return n_train / batches_per_epoch; }
};

ExperimentConfig preset(Scenario scenario);

// Fills fixed_omega for the complex scenario (drawn once from N(omega_mean, omega_std^2)).
ExperimentConfig resolve(ExperimentConfig config);

io::Json to_json(const ExperimentConfig& config);
// Missing keys take the scenario preset; wrong types raise ConfigError naming the key.
ExperimentConfig experiment_from_json(const io::Json& j);

// Network and frequency setup for one parameter vector under `config`.
osc::NetworkSpec network_for(const ExperimentConfig& config, std::span<const double> theta);
osc::FrequencySpec frequencies_for(const ExperimentConfig& config);

// Simulates one trajectory at theta and returns its context features.
summary::FeatureVector simulate_features(const ExperimentConfig& config, std::span<const double> theta,
                                         std::uint64_t seed);

// Feature z-scoring fit on the training split plus the parameter map into flow space.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  std::vector<bool> keep;  // false for zero-variance columns
  PriorSpec prior;
  ParamMap param_map = ParamMap::Atanh;

  // The unit value is scaled by this before atanh so box edges stay finite.
  static constexpr double kEdgeShrink = 1.0 - 1e-6;

  static Standardizer fit(const Eigen::MatrixXd& features, const PriorSpec& prior,
                          ParamMap param_map = ParamMap::Atanh);

  std::size_t feature_dim() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t context_dim() const;

  Eigen::MatrixXd transform_features(const Eigen::MatrixXd& features) const;
  // Masked columns come back as their training mean.
  Eigen::MatrixXd inverse_features(const Eigen::MatrixXd& z) const;
  Eigen::VectorXd transform_context(std::span<const double> features) const;

  Eigen::MatrixXd params_to_unit(const Eigen::MatrixXd& params) const;
  Eigen::MatrixXd params_from_unit(const Eigen::MatrixXd& unit) const;
  // Natural units <-> the space the flow models.
  Eigen::MatrixXd params_to_flow(const Eigen::MatrixXd& params) const;
  Eigen::MatrixXd params_from_flow(const Eigen::MatrixXd& y) const;

  io::Json to_json() const;
  static Standardizer from_json(const io::Json& j);
  std::string hash() const;
};

struct Dataset {
  Eigen::MatrixXd params;    // n x dim, natural units
  Eigen::MatrixXd features;  // n x (6 * n_obs), raw
  Standardizer standardizer;
  Scenario scenario = Scenario::Simple;

  std::size_t size() const { return static_cast<std::size_t>(params.rows()); }
};

enum class Split : std::uint64_t { Train = 1, Val = 2, Test = 3 };

// Draws params from the prior and simulates them in parallel (row seed = split base + row).
// A diverging row is resimulated with the next derived seed, at most 10 times in a row.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> simulate_split(const ExperimentConfig& config, Split split,
                                                            std::size_t n);

// Training and validation sets; the standardizer is fit on training features only.
std::pair<Dataset, Dataset> generate(const ExperimentConfig& config);
Dataset generate_test(const ExperimentConfig& config, const Standardizer& standardizer);

// Directory with params.csv, features.csv, standardizer.json, config.json.
void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const ExperimentConfig& config);
Dataset load_dataset(const std::filesystem::path& dir, ExperimentConfig* config = nullptr);

}  // namespace kabi::data
