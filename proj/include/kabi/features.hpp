#pragma once

// Six per-timestep synchrony statistics and their flattened context vector.

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kabi/oscillator.hpp"

namespace kabi::summary {

inline constexpr std::size_t kStatsPerStep = 6;
inline const std::array<std::string, kStatsPerStep> kStatNames{"r", "psi", "mean_sin", "std_sin", "mean_cos", "std_cos"};

struct StepSummary {
  double r = 0.0;
  double psi = 0.0;
  double mean_sin = 0.0;
  double std_sin = 0.0;  // population standard deviation
  double mean_cos = 0.0;
  double std_cos = 0.0;

  std::array<double, kStatsPerStep> as_array() const { return {r, psi, mean_sin, std_sin, mean_cos, std_cos}; }
};

// Time-major, statistic-minor: values[6 * row + stat].
struct FeatureVector {
  std::vector<double> values;
  std::size_t n_obs = 0;

  // n_obs x 6 view of the same numbers.
  Eigen::MatrixXd as_matrix() const;
};

StepSummary summarize_step(std::span<const double> phases);

// One summary per row of `phases` from `first_row` on.
FeatureVector summarize_rows(const Eigen::MatrixXd& phases, std::size_t first_row = 0);
FeatureVector summarize_trajectory(const osc::Trajectory& traj);

// CSV with one row per timestep, columns `r, psi, mean_sin, std_sin, mean_cos, std_cos`.
void write_features_csv(const std::filesystem::path& path, const FeatureVector& features);
FeatureVector read_features_csv(const std::filesystem::path& path);

}  // namespace kabi::summary
