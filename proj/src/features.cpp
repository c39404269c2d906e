#include "kabi/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kabi/error.hpp"
#include "kabi/io.hpp"

namespace kabi::summary {

Eigen::MatrixXd FeatureVector::as_matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n_obs), static_cast<Eigen::Index>(kStatsPerStep));
  for (std::size_t t = 0; t < n_obs; ++t)
    for (std::size_t k = 0; k < kStatsPerStep; ++k)
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = values[t * kStatsPerStep + k];
  return m;
}

namespace {

// Sum in ascending order so the result does not depend on oscillator order.
double ordered_sum(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

}  // namespace

StepSummary summarize_step(std::span<const double> phases) {
  if (phases.empty()) throw DomainError("summary of an empty phase vector");
  const double n = static_cast<double>(phases.size());
  std::vector<double> sn(phases.size()), cs(phases.size()), tmp(phases.size());
  for (std::size_t i = 0; i < phases.size(); ++i) {
    sn[i] = std::sin(phases[i]);
    cs[i] = std::cos(phases[i]);
  }
  tmp = sn;
  const double ms = ordered_sum(tmp) / n;
  tmp = cs;
  const double mc = ordered_sum(tmp) / n;
  for (std::size_t i = 0; i < sn.size(); ++i) tmp[i] = (sn[i] - ms) * (sn[i] - ms);
  const double vs = ordered_sum(tmp);
  for (std::size_t i = 0; i < cs.size(); ++i) tmp[i] = (cs[i] - mc) * (cs[i] - mc);
  const double vc = ordered_sum(tmp);
  StepSummary s;
  s.mean_sin = ms;
  s.mean_cos = mc;
  s.std_sin = std::sqrt(vs / n);
  s.std_cos = std::sqrt(vc / n);
  // Same arithmetic as osc::order_parameter, so the two never disagree.
  s.r = std::min(1.0, std::hypot(ms, mc));
  s.psi = s.r < osc::kZeroOrderTol ? 0.0 : std::atan2(ms, mc);
  if (s.psi == -std::numbers::pi) s.psi = std::numbers::pi;
  return s;
}

FeatureVector summarize_rows(const Eigen::MatrixXd& phases, std::size_t first_row) {
  const auto rows = static_cast<std::size_t>(phases.rows());
  if (first_row > rows) throw ConfigError("first_row beyond trajectory length");
  FeatureVector fv;
  fv.n_obs = rows - first_row;
  fv.values.resize(fv.n_obs * kStatsPerStep);
  std::vector<double> row(static_cast<std::size_t>(phases.cols()));
  for (std::size_t t = 0; t < fv.n_obs; ++t) {
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = phases(static_cast<Eigen::Index>(first_row + t), static_cast<Eigen::Index>(i));
    const auto stats = summarize_step(row).as_array();
    std::copy(stats.begin(), stats.end(), fv.values.begin() + static_cast<std::ptrdiff_t>(t * kStatsPerStep));
  }
  return fv;
}

FeatureVector summarize_trajectory(const osc::Trajectory& traj) { return summarize_rows(traj.observed_phases, 0); }

void write_features_csv(const std::filesystem::path& path, const FeatureVector& features) {
  io::write_csv(path, {kStatNames.begin(), kStatNames.end()}, features.as_matrix());
}

FeatureVector read_features_csv(const std::filesystem::path& path) {
  auto table = io::read_csv(path);
  if (static_cast<std::size_t>(table.values.cols()) != kStatsPerStep)
    throw ConfigError(path.string() + ": expected 6 feature columns");
  FeatureVector fv;
  fv.n_obs = static_cast<std::size_t>(table.values.rows());
  fv.values.resize(fv.n_obs * kStatsPerStep);
  for (std::size_t t = 0; t < fv.n_obs; ++t)
    for (std::size_t k = 0; k < kStatsPerStep; ++k)
      fv.values[t * kStatsPerStep + k] = table.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k));
  return fv;
}

}  // namespace kabi::summary
