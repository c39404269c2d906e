#include "kabi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "kabi/error.hpp"
#include "kabi/json_fields.hpp"
#include "kabi/svg.hpp"

namespace kabi::diag {

std::string to_string(Source s) { return s == Source::NPE ? "npe" : "mcmc"; }

Source source_from_string(const std::string& s) {
  if (s == "npe") return Source::NPE;
  if (s == "mcmc") return Source::MCMC;
  throw ConfigError("unknown posterior source '" + s + "'");
}

void PosteriorSamples::validate(const data::PriorSpec* prior) const {
  if (draws.rows() < 1) throw ConfigError("posterior samples need at least one draw");
  if (truth.size() != dim()) throw ConfigError("truth length does not match draw width");
  if (!draws.allFinite()) throw NumericError("posterior draws contain non-finite values");
  if (prior) {
    for (Eigen::Index i = 0; i < draws.rows(); ++i) {
      const Eigen::RowVectorXd row = draws.row(i);
      if (!prior->contains(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))))
        throw ConfigError("posterior draw " + std::to_string(i) + " lies outside the prior box");
    }
  }
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

std::vector<double> sorted_column(const Eigen::MatrixXd& m, Eigen::Index col) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) v[static_cast<std::size_t>(i)] = m(i, col);
  std::sort(v.begin(), v.end());
  return v;
}

std::size_t common_dim(std::span<const PosteriorSamples> cases) {
  if (cases.empty()) throw ConfigError("no test cases");
  const std::size_t d = cases.front().dim();
  for (const auto& c : cases) {
    if (c.dim() != d) throw ConfigError("test cases have different parameter dimensions");
    if (c.truth.size() != d) throw ConfigError("truth length does not match draw width");
  }
  return d;
}

double log_binomial_pmf(std::size_t n, std::size_t k, double p) {
  if (p <= 0.0) return k == 0 ? 0.0 : -INFINITY;
  if (p >= 1.0) return k == n ? 0.0 : -INFINITY;
  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  return std::lgamma(nn + 1) - std::lgamma(kk + 1) - std::lgamma(nn - kk + 1) + kk * std::log(p) + (nn - kk) * std::log1p(-p);
}

}  // namespace

std::vector<double> pit(const PosteriorSamples& samples, Rng& rng) {
  if (samples.n_draws() < 1) throw ConfigError("PIT needs at least one draw");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> out(samples.dim());
  const double denom = static_cast<double>(samples.n_draws()) + 1.0;
  for (std::size_t k = 0; k < samples.dim(); ++k) {
    const auto col = samples.draws.col(static_cast<Eigen::Index>(k));
    const double t = samples.truth[k];
    const auto below = static_cast<double>((col.array() < t).count());
    const auto ties = static_cast<double>((col.array() == t).count());
    out[k] = std::clamp((below + unit(rng) * (ties + 1.0)) / denom, 0.0, 1.0);
  }
  return out;
}

std::size_t binomial_quantile(std::size_t n, double p, double q) {
  double cdf = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    cdf += std::exp(log_binomial_pmf(n, k, p));
    if (cdf >= q * (1.0 - 1e-12)) return k;
  }
  return n;
}

EcdfBand pit_ecdf_band(std::span<const double> pits, double alpha) {
  if (pits.size() < 10) throw ConfigError("ECDF band needs at least 10 PIT values");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  EcdfBand band;
  band.sorted_pit.assign(pits.begin(), pits.end());
  std::sort(band.sorted_pit.begin(), band.sorted_pit.end());
  const std::size_t n = pits.size();
  const double point_alpha = 1.0 - std::pow(1.0 - alpha, 1.0 / static_cast<double>(kEcdfGridPoints));
  for (std::size_t k = 0; k < kEcdfGridPoints; ++k) {
    const double z = (static_cast<double>(k) + 0.5) / static_cast<double>(kEcdfGridPoints);
    const auto count = static_cast<double>(std::upper_bound(band.sorted_pit.begin(), band.sorted_pit.end(), z) -
                                           band.sorted_pit.begin());
    const double f = count / static_cast<double>(n);
    const double lo = static_cast<double>(binomial_quantile(n, z, point_alpha / 2)) / static_cast<double>(n);
    const double hi = static_cast<double>(binomial_quantile(n, z, 1.0 - point_alpha / 2)) / static_cast<double>(n);
    band.grid.push_back(z);
    band.ecdf.push_back(f);
    band.lower.push_back(lo);
    band.upper.push_back(hi);
    if (f < lo || f > hi) band.inside = false;
  }
  return band;
}

KsResult ks_uniform(std::span<const double> values) {
  if (values.empty()) throw ConfigError("KS test of an empty sample");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = std::clamp(v[i], 0.0, 1.0);
    d = std::max({d, static_cast<double>(i + 1) / n - x, x - static_cast<double>(i) / n});
  }
  // Kolmogorov limiting distribution with the Stephens small-sample correction.
  const double sqrt_n = std::sqrt(n);
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  double p = 1.0;
  if (lambda >= 0.2) {
    double sum = 0.0, sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      sum += term;
      if (std::abs(term) < 1e-16) break;
      sign = -sign;
    }
    p = std::clamp(2.0 * sum, 0.0, 1.0);
  }
  return {d, p};
}

std::vector<double> nrmse(std::span<const PosteriorSamples> cases, const data::PriorSpec& prior) {
  const std::size_t d = common_dim(cases);
  if (cases.size() < 2) throw ConfigError("NRMSE needs at least two test cases");
  if (prior.dim() != d) throw ConfigError("prior dimension does not match samples");
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    double sq = 0.0;
    for (const auto& c : cases) {
      const double err = c.draws.col(static_cast<Eigen::Index>(k)).mean() - c.truth[k];
      sq += err * err;
    }
    out[k] = std::sqrt(sq / static_cast<double>(cases.size())) / prior.range(k);
  }
  return out;
}

std::vector<double> posterior_contraction(std::span<const PosteriorSamples> cases, const data::PriorSpec& prior) {
  const std::size_t d = common_dim(cases);
  if (prior.dim() != d) throw ConfigError("prior dimension does not match samples");
  std::vector<double> out(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    for (const auto& c : cases) {
      if (c.n_draws() < 2) throw ConfigError("posterior contraction needs at least two draws per case");
      const auto col = c.draws.col(static_cast<Eigen::Index>(k));
      const double var = (col.array() - col.mean()).square().sum() / static_cast<double>(c.n_draws() - 1);
      out[k] += 1.0 - var / prior.variance(k);
    }
    out[k] /= static_cast<double>(cases.size());
  }
  return out;
}

std::vector<std::vector<double>> interval_coverage(std::span<const PosteriorSamples> cases) {
  const std::size_t d = common_dim(cases);
  std::vector<std::vector<double>> cov(d, std::vector<double>(kCalibrationLevels, 0.0));
  for (const auto& c : cases) {
    for (std::size_t k = 0; k < d; ++k) {
      const auto sorted = sorted_column(c.draws, static_cast<Eigen::Index>(k));
      for (std::size_t l = 0; l < kCalibrationLevels; ++l) {
        const double q = 0.05 * static_cast<double>(l + 1);
        const double lo = quantile_sorted(sorted, 0.5 - q / 2), hi = quantile_sorted(sorted, 0.5 + q / 2);
        if (c.truth[k] >= lo && c.truth[k] <= hi) cov[k][l] += 1.0;
      }
    }
  }
  for (auto& per_param : cov)
    for (auto& v : per_param) v /= static_cast<double>(cases.size());
  return cov;
}

std::vector<double> calibration_error(std::span<const PosteriorSamples> cases) {
  if (cases.size() < 20) throw ConfigError("calibration error needs at least 20 test cases");
  const auto cov = interval_coverage(cases);
  std::vector<double> out;
  for (const auto& per_param : cov) {
    std::vector<double> dev;
    for (std::size_t l = 0; l < kCalibrationLevels; ++l) dev.push_back(std::abs(per_param[l] - 0.05 * static_cast<double>(l + 1)));
    std::nth_element(dev.begin(), dev.begin() + kCalibrationLevels / 2, dev.end());
    out.push_back(dev[kCalibrationLevels / 2]);
  }
  return out;
}

std::vector<RecoveryRow> recovery_table(std::span<const PosteriorSamples> cases) {
  const std::size_t d = common_dim(cases);
  std::vector<RecoveryRow> rows;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      const auto sorted = sorted_column(cases[i].draws, static_cast<Eigen::Index>(k));
      rows.push_back({i, k, cases[i].truth[k], cases[i].draws.col(static_cast<Eigen::Index>(k)).mean(),
                      quantile_sorted(sorted, 0.05), quantile_sorted(sorted, 0.95)});
    }
  }
  return rows;
}

io::Json MetricsReport::to_json() const {
  io::Json params = io::Json::object();
  for (std::size_t k = 0; k < nrmse.size(); ++k) {
    params["kappa_" + std::to_string(k + 1)] = {{"nrmse", nrmse[k]},
                                                {"posterior_contraction", contraction[k]},
                                                {"calibration_error", calibration_error[k]},
                                                {"pit_ks_statistic", pit_ks[k].statistic},
                                                {"pit_ks_p_value", pit_ks[k].p_value},
                                                {"pit_ecdf_inside_95", static_cast<bool>(ecdf_inside[k])}};
  }
  io::Json pits = io::Json::array();
  for (Eigen::Index i = 0; i < pit.rows(); ++i) {
    io::Json row = io::Json::array();
    for (Eigen::Index k = 0; k < pit.cols(); ++k) row.push_back(pit(i, k));
    pits.push_back(std::move(row));
  }
  return io::Json{{"n_test", n_test}, {"parameters", params}, {"pit", pits}};
}

MetricsReport evaluate(std::span<const PosteriorSamples> cases, const data::PriorSpec& prior, std::uint64_t seed) {
  const std::size_t d = common_dim(cases);
  MetricsReport r;
  r.n_test = cases.size();
  r.nrmse = nrmse(cases, prior);
  r.contraction = posterior_contraction(cases, prior);
  r.calibration_error = calibration_error(cases);
  r.pit.resize(static_cast<Eigen::Index>(cases.size()), static_cast<Eigen::Index>(d));
  Rng rng(seed);
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto p = pit(cases[i], rng);
    for (std::size_t k = 0; k < d; ++k) r.pit(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = p[k];
  }
  for (std::size_t k = 0; k < d; ++k) {
    const auto col = r.pit.col(static_cast<Eigen::Index>(k));
    std::vector<double> values(col.data(), col.data() + col.size());
    r.pit_ks.push_back(ks_uniform(values));
    r.ecdf_inside.push_back(values.size() >= 10 ? pit_ecdf_band(values, 0.05).inside : true);
  }
  return r;
}

void write_samples_csv(const std::filesystem::path& path, const PosteriorSamples& s) {
  io::write_csv(path, io::numbered("kappa", s.dim()), s.draws);
}

void save_posterior_dir(const std::filesystem::path& dir, std::span<const PosteriorSamples> cases) {
  std::filesystem::create_directories(dir);
  io::Json index = io::Json::array();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "case_%04zu.csv", i);
    write_samples_csv(dir / name, cases[i]);
    index.push_back({{"file", name},
                     {"truth", cases[i].truth},
                     {"source", to_string(cases[i].source)},
                     {"context_hash", cases[i].context_hash}});
  }
  io::write_json(dir / "index.json", io::Json{{"cases", index}});
}

std::vector<PosteriorSamples> load_posterior_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "index.json"))
    throw DependencyError("posterior directory " + dir.string() + " has no index.json");
  const auto index = io::read_json(dir / "index.json");
  std::vector<PosteriorSamples> out;
  for (const auto& entry : index.at("cases")) {
    PosteriorSamples s;
    s.draws = io::read_csv(dir / entry.at("file").get<std::string>()).values;
    s.truth = entry.at("truth").get<std::vector<double>>();
    s.source = source_from_string(entry.at("source").get<std::string>());
    s.context_hash = entry.value("context_hash", "");
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct Histogram {
  std::vector<double> edges;
  std::vector<double> counts;
};

Histogram histogram_of(std::span<const double> values, double lo, double hi, std::size_t bins, bool density) {
  Histogram h;
  for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
  h.counts.assign(bins, 0.0);
  for (double v : values) {
    if (v < lo || v > hi) continue;
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    h.counts[std::min(b, bins - 1)] += 1.0;
  }
  if (density && !values.empty()) {
    const double w = (hi - lo) / static_cast<double>(bins);
    for (auto& c : h.counts) c /= static_cast<double>(values.size()) * w;
  }
  return h;
}

}  // namespace

std::vector<std::filesystem::path> write_diagnostic_plots(const std::filesystem::path& dir,
                                                          std::span<const PosteriorSamples> cases,
                                                          const MetricsReport& report, const data::PriorSpec& prior,
                                                          std::size_t n_histograms) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const std::size_t d = common_dim(cases);
  const auto rows = recovery_table(cases);

  // Recovery scatter with 90% intervals.
  {
    Eigen::MatrixXd table(static_cast<Eigen::Index>(rows.size()), 6);
    for (std::size_t i = 0; i < rows.size(); ++i)
      table.row(static_cast<Eigen::Index>(i)) << static_cast<double>(rows[i].case_index), static_cast<double>(rows[i].param + 1),
          rows[i].truth, rows[i].mean, rows[i].lower, rows[i].upper;
    io::write_csv(dir / "recovery.csv", {"case", "param", "truth", "mean", "q05", "q95"}, table);
    written.push_back(dir / "recovery.csv");
    std::vector<svg::Plot> plots;
    for (std::size_t k = 0; k < d; ++k) {
      std::vector<double> t, m, lo, hi;
      for (const auto& r : rows)
        if (r.param == k) {
          t.push_back(r.truth);
          m.push_back(r.mean);
          lo.push_back(r.lower);
          hi.push_back(r.upper);
        }
      svg::Plot p(360, 340, "kappa_" + std::to_string(k + 1), "true", "estimated");
      p.set_x_range(prior.lower[k], prior.upper[k]);
      p.set_y_range(prior.lower[k], prior.upper[k]);
      p.segments(t, lo, t, hi, "#7aa6d6", 1.0, 0.4);
      p.points(t, m, "#1f4e99", 2.2);
      const std::vector<double> diag{prior.lower[k], prior.upper[k]};
      p.line(diag, diag, "#c0392b", 1.2, true);
      plots.push_back(std::move(p));
    }
    io::write_text(dir / "recovery.svg", svg::grid_document(plots, std::min<std::size_t>(d, 3)));
    written.push_back(dir / "recovery.svg");
  }

  // PIT histogram and ECDF with band.
  {
    io::write_csv(dir / "pit.csv", io::numbered("kappa", d), report.pit);
    written.push_back(dir / "pit.csv");
    std::vector<svg::Plot> hists, ecdfs;
    Eigen::MatrixXd band_table(static_cast<Eigen::Index>(kEcdfGridPoints), static_cast<Eigen::Index>(1 + 3 * d));
    std::vector<std::string> band_header{"z"};
    for (std::size_t k = 0; k < d; ++k) {
      const auto col = report.pit.col(static_cast<Eigen::Index>(k));
      std::vector<double> values(col.data(), col.data() + col.size());
      const std::size_t bins = std::clamp<std::size_t>(values.size() / 15, 5, 20);
      auto h = histogram_of(values, 0.0, 1.0, bins, false);
      svg::Plot ph(360, 300, "PIT kappa_" + std::to_string(k + 1), "PIT", "count");
      ph.set_x_range(0, 1);
      ph.histogram(h.edges, h.counts, "#4a7fb5");
      const double expected = static_cast<double>(values.size()) / static_cast<double>(bins);
      const std::vector<double> xs{0.0, 1.0}, ys{expected, expected};
      ph.line(xs, ys, "#c0392b", 1.2, true);
      hists.push_back(std::move(ph));

      svg::Plot pe(360, 300, "PIT ECDF kappa_" + std::to_string(k + 1), "PIT", "ECDF");
      pe.set_x_range(0, 1);
      pe.set_y_range(0, 1);
      if (values.size() >= 10) {
        const auto band = pit_ecdf_band(values, 0.05);
        pe.band(band.grid, band.lower, band.upper, "#9bbbe0", 0.5);
        std::vector<double> sx{0.0}, sy{0.0};
        for (std::size_t i = 0; i < band.sorted_pit.size(); ++i) {
          sx.push_back(band.sorted_pit[i]);
          sy.push_back(static_cast<double>(i + 1) / static_cast<double>(values.size()));
        }
        sx.push_back(1.0);
        sy.push_back(1.0);
        pe.steps(sx, sy, "#1f4e99");
        for (std::size_t g = 0; g < kEcdfGridPoints; ++g) {
          band_table(static_cast<Eigen::Index>(g), 0) = band.grid[g];
          band_table(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(1 + 3 * k)) = band.ecdf[g];
          band_table(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(2 + 3 * k)) = band.lower[g];
          band_table(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(3 + 3 * k)) = band.upper[g];
        }
      } else {
        band_table.setZero();
      }
      band_header.push_back("ecdf_" + std::to_string(k + 1));
      band_header.push_back("lower_" + std::to_string(k + 1));
      band_header.push_back("upper_" + std::to_string(k + 1));
      const std::vector<double> diag{0.0, 1.0};
      pe.line(diag, diag, "#888", 1.0, true);
      ecdfs.push_back(std::move(pe));
    }
    io::write_csv(dir / "pit_ecdf.csv", band_header, band_table);
    io::write_text(dir / "pit_histogram.svg", svg::grid_document(hists, std::min<std::size_t>(d, 3)));
    io::write_text(dir / "pit_ecdf.svg", svg::grid_document(ecdfs, std::min<std::size_t>(d, 3)));
    written.push_back(dir / "pit_ecdf.csv");
    written.push_back(dir / "pit_histogram.svg");
    written.push_back(dir / "pit_ecdf.svg");
  }

  // Posterior histograms for cases spread over the range of the first parameter's truth.
  {
    std::vector<std::size_t> order(cases.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cases[a].truth[0] < cases[b].truth[0]; });
    const std::size_t shown = std::min(n_histograms, cases.size());
    std::vector<svg::Plot> plots;
    const std::size_t bins = 30;
    Eigen::MatrixXd table(static_cast<Eigen::Index>(shown * d * bins), 5);
    Eigen::Index row = 0;
    for (std::size_t s = 0; s < shown; ++s) {
      const std::size_t i = order[shown > 1 ? s * (cases.size() - 1) / (shown - 1) : 0];
      for (std::size_t k = 0; k < d; ++k) {
        const auto col = cases[i].draws.col(static_cast<Eigen::Index>(k));
        std::vector<double> values(col.data(), col.data() + col.size());
        auto h = histogram_of(values, prior.lower[k], prior.upper[k], bins, true);
        for (std::size_t b = 0; b < bins; ++b)
          table.row(row++) << static_cast<double>(i), static_cast<double>(k + 1), h.edges[b], h.edges[b + 1], h.counts[b];
        svg::Plot p(300, 240, "case " + std::to_string(i) + " kappa_" + std::to_string(k + 1), "kappa", "density");
        p.set_x_range(prior.lower[k], prior.upper[k]);
        p.histogram(h.edges, h.counts, "#4a7fb5");
        p.vline(cases[i].truth[k], "#c0392b");
        plots.push_back(std::move(p));
      }
    }
    io::write_csv(dir / "posterior_histograms.csv", {"case", "param", "bin_lo", "bin_hi", "density"}, table);
    io::write_text(dir / "posterior_histograms.svg", svg::grid_document(plots, d == 1 ? 5 : d));
    written.push_back(dir / "posterior_histograms.csv");
    written.push_back(dir / "posterior_histograms.svg");
  }
  return written;
}

}  // namespace kabi::diag
