#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

#include "kabi/error.hpp"
#include "kabi/mcmc.hpp"
#include "kabi/rng.hpp"

using namespace kabi;
using namespace kabi::mcmc;

namespace {

EcdfLikelihoodSpec one_feature(std::vector<double> edges) {
  EcdfLikelihoodSpec s;
  s.features = {0};
  s.bin_edges = {std::move(edges)};
  s.n_edges = s.bin_edges[0].size();
  return s;
}

Eigen::MatrixXd random_spd(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(d + 5, d);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = nd(rng);
  return a;
}

}  // namespace

TEST_CASE("ECDF vectors") {
  Eigen::MatrixXd steps = Eigen::MatrixXd::Constant(50, 6, 0.3);
  auto spec = one_feature({0.3 - 1.0, 0.3 + 1.0});
  const auto v = ecdf_vector(steps, spec);
  CHECK(v.size() == 2);
  CHECK(v(0) == 0.0);
  CHECK(v(1) == 1.0);

  Eigen::MatrixXd lin(100, 6);
  for (Eigen::Index i = 0; i < 100; ++i) lin.row(i).setConstant((i + 0.5) / 100.0);
  spec = one_feature({0.1, 0.25, 0.5, 0.9});
  const auto w = ecdf_vector(lin, spec);
  CHECK(w(0) == doctest::Approx(0.1));
  CHECK(w(1) == doctest::Approx(0.25));
  CHECK(w(2) == doctest::Approx(0.5));
  CHECK(w(3) == doctest::Approx(0.9));

  Rng rng(2);
  std::normal_distribution<double> nd;
  EcdfLikelihoodSpec all;
  std::vector<Eigen::MatrixXd> reps;
  for (int r = 0; r < 5; ++r) {
    Eigen::MatrixXd m(100, 6);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    reps.push_back(m);
  }
  all.bin_edges = quantile_bin_edges(reps, all);
  CHECK(all.bin_edges.size() == 6);
  CHECK(all.dim() == 120);
  all.validate();
  for (const auto& m : reps) {
    const auto e = ecdf_vector(m, all);
    CHECK(e.minCoeff() >= 0.0);
    CHECK(e.maxCoeff() <= 1.0);
    for (Eigen::Index b = 0; b < 6; ++b)
      for (Eigen::Index k = 1; k < 20; ++k) CHECK(e(b * 20 + k) >= e(b * 20 + k - 1));
  }

  auto bad = one_feature({1.0, 1.0});
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("Gaussian synthetic likelihood") {
  SUBCASE("identical replicates") {
    const Eigen::MatrixXd same = Eigen::RowVectorXd::LinSpaced(8, 0.0, 1.0).replicate(10, 1);
    const auto g = fit_gaussian(same, 1e-6);
    CHECK(g.cov == 1e-6 * Eigen::MatrixXd::Identity(8, 8));
    CHECK(g.lambda_reg == 1e-6);
    CHECK(fit_gaussian(same, 0.0).lambda_reg > 0.0);
    Eigen::MatrixXd nan = same;
    nan(0, 0) = std::nan("");
    CHECK_THROWS_AS(fit_gaussian(nan, 1e-6), NumericError);
    CHECK_THROWS_AS(fit_gaussian(same.topRows(1), 1e-6), ConfigError);
  }
  SUBCASE("density values") {
    Rng rng(3);
    const Eigen::MatrixXd x = random_spd(6, rng);
    const auto g = fit_gaussian(x, 1e-6);
    const double d = 6.0;
    const double logdet = std::log(g.cov.determinant());
    CHECK(g.log_det == doctest::Approx(logdet).epsilon(1e-10));
    CHECK(g.log_density(g.mean) == doctest::Approx(-0.5 * d * std::log(2 * std::numbers::pi) - 0.5 * logdet).epsilon(1e-12));

    Eigen::VectorXd pt = g.mean;
    pt(2) += 0.7;
    pt(4) -= 0.3;
    const Eigen::VectorXd diff = pt - g.mean;
    const double maha = diff.dot(g.cov.partialPivLu().solve(diff));
    CHECK(g.log_density(pt) == doctest::Approx(g.log_density(g.mean) - 0.5 * maha).epsilon(1e-12));
    // Inflating the covariance by 4 changes the log density by -(d/2) ln 4 + (3/8) maha.
    CHECK(g.log_density_scaled(pt, 4.0) - g.log_density(pt) ==
          doctest::Approx(-0.5 * d * std::log(4.0) + 0.375 * maha).epsilon(1e-10));
    CHECK(g.log_density(pt) < g.log_density(g.mean));
  }
}

TEST_CASE("synthetic likelihood on the simple scenario") {
  auto cfg = data::resolve(data::preset(data::Scenario::Simple));
  const auto sim = kuramoto_simulator(cfg);
  EcdfLikelihoodSpec spec;
  spec.n_replicates = 100;
  spec.lambda_reg = 1e-3;
  SyntheticLikelihood like(sim, spec);
  const std::vector<double> truth{2.0}, far{4.5};
  like.fit_reference(truth, 1);
  CHECK(like.spec().bin_edges.size() == 6);
  CHECK(like.reference().mean.minCoeff() >= 0.0);
  CHECK(like.reference().mean.maxCoeff() <= 1.0);
  const auto observed = ecdf_vector(sim(truth, 999), like.spec());
  std::vector<double> at_truth, at_far;
  for (std::uint64_t r = 0; r < 20; ++r) {
    at_truth.push_back(like.log_likelihood(truth, observed, 100 + r));
    at_far.push_back(like.log_likelihood(far, observed, 200 + r));
  }
  std::nth_element(at_truth.begin(), at_truth.begin() + 10, at_truth.end());
  std::nth_element(at_far.begin(), at_far.begin() + 10, at_far.end());
  CHECK(at_truth[10] > at_far[10]);
  CHECK(like.log_likelihood(truth, observed, 5) == like.log_likelihood(truth, observed, 5));
}

TEST_CASE("Metropolis with a flat likelihood recovers the prior") {
  const data::PriorSpec box{{0.0}, {5.0}};
  ChainConfig cc;
  cc.n_iterations = 60000;
  cc.burn_in = 10000;
  cc.thinning = 5;
  cc.proposal_std = {1.0};
  const auto flat = [](std::span<const double>, std::uint64_t) { return -3.0; };
  const std::vector<double> start{2.5};
  const auto res = metropolis(flat, box, cc, start);
  CHECK(res.draws.rows() == 10000);
  CHECK(std::abs(res.draws.mean() - 2.5) <= 0.05 * 2.5);
  CHECK(res.draws.minCoeff() >= 0.0);
  CHECK(res.draws.maxCoeff() <= 5.0);
  const double var = (res.draws.array() - res.draws.mean()).square().mean();
  CHECK(var == doctest::Approx(25.0 / 12.0).epsilon(0.1));
}

TEST_CASE("Metropolis matches an analytic Gaussian posterior") {
  const data::PriorSpec box{{-20.0, -20.0}, {20.0, 20.0}};
  const double m0 = 1.0, m1 = -2.0, s0 = 0.5, s1 = 2.0;
  const auto gauss = [&](std::span<const double> t, std::uint64_t) {
    return -0.5 * std::pow((t[0] - m0) / s0, 2) - 0.5 * std::pow((t[1] - m1) / s1, 2);
  };
  ChainConfig cc;
  cc.n_iterations = 100000;
  cc.burn_in = 5000;
  cc.thinning = 1;
  cc.proposal_std = {1.2, 4.8};
  cc.refresh_current = false;
  const std::vector<double> start{0.0, 0.0};
  const auto res = metropolis(gauss, box, cc, start);
  const auto ess = effective_sample_size(res.draws);
  const double mean0 = res.draws.col(0).mean(), mean1 = res.draws.col(1).mean();
  CHECK(std::abs(mean0 - m0) <= 3.0 * s0 / std::sqrt(ess[0]));
  CHECK(std::abs(mean1 - m1) <= 3.0 * s1 / std::sqrt(ess[1]));
  const double v0 = (res.draws.col(0).array() - mean0).square().mean();
  const double v1 = (res.draws.col(1).array() - mean1).square().mean();
  // The variance estimator of a Gaussian has relative standard error sqrt(2 / ess).
  CHECK(std::abs(v0 / (s0 * s0) - 1.0) <= 3.0 * std::sqrt(2.0 / ess[0]));
  CHECK(std::abs(v1 / (s1 * s1) - 1.0) <= 3.0 * std::sqrt(2.0 / ess[1]));
  CHECK(res.acceptance_rate > 0.1);
  CHECK(res.acceptance_rate < 0.6);
  CHECK(kde_mode(std::span<const double>(res.draws.col(0).data(), res.draws.rows()), -20.0, 20.0) ==
        doctest::Approx(m0).epsilon(0.1));
}

TEST_CASE("acceptance depends on likelihood differences only") {
  const data::PriorSpec box{{0.0}, {5.0}};
  const auto noisy = [](std::span<const double> t, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 0.5);
    return -std::pow(t[0] - 2.0, 2) / 0.1 + nd(rng);
  };
  const auto shifted = [&](std::span<const double> t, std::uint64_t seed) { return noisy(t, seed) + 1234.5; };
  for (bool refresh : {false, true}) {
    ChainConfig cc;
    cc.n_iterations = 3000;
    cc.burn_in = 500;
    cc.refresh_current = refresh;
    const std::vector<double> start{2.5};
    const auto a = metropolis(noisy, box, cc, start);
    const auto b = metropolis(shifted, box, cc, start);
    CHECK(a.accepted == b.accepted);
    CHECK(a.states == b.states);
    const auto c = metropolis(noisy, box, cc, start);
    CHECK(c.states == a.states);
    CHECK(c.log_like == a.log_like);
    cc.seed = 42;
    CHECK(metropolis(noisy, box, cc, start).states != a.states);
  }
}

TEST_CASE("chain bookkeeping") {
  const data::PriorSpec box{{0.0}, {1.0}};
  ChainConfig cc;
  cc.n_iterations = 10;
  cc.burn_in = 10;
  CHECK_THROWS_AS(cc.validate(1), ConfigError);
  cc.burn_in = 2;
  cc.proposal_std = {0.0};
  CHECK_THROWS_AS(cc.validate(1), ConfigError);
  cc.proposal_std = {};
  CHECK(cc.resolved_proposal_std(box)[0] == doctest::Approx(0.02));

  // A likelihood that rejects everything trips the low-acceptance warning.
  cc.n_iterations = 3000;
  cc.burn_in = 100;
  const auto spike = [](std::span<const double> t, std::uint64_t) { return t[0] == 0.5 ? 0.0 : -1e9; };
  const std::vector<double> start{0.5};
  const auto r = metropolis(spike, box, cc, start);
  CHECK(r.low_acceptance);
  CHECK(r.acceptance_rate == 0.0);

  Rng rng(1);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd iid(20000, 1);
  for (Eigen::Index i = 0; i < iid.rows(); ++i) iid(i, 0) = nd(rng);
  CHECK(effective_sample_size(iid)[0] == doctest::Approx(20000.0).epsilon(0.25));
  Eigen::MatrixXd sticky(20000, 1);
  for (Eigen::Index i = 0; i < sticky.rows(); ++i) sticky(i, 0) = iid(i / 50, 0);
  CHECK(effective_sample_size(sticky)[0] < 1000.0);
}

TEST_CASE("config json") {
  EcdfLikelihoodSpec s;
  s.covariance = EcdfLikelihoodSpec::Covariance::PerTheta;
  s.n_replicates_proposal = 40;
  s.lambda_reg = 1e-3;
  const auto back = ecdf_spec_from_json(to_json(s), EcdfLikelihoodSpec{});
  CHECK(back.covariance == s.covariance);
  CHECK(back.n_replicates_proposal == 40);
  CHECK(back.lambda_reg == 1e-3);
  CHECK(to_json(back) == to_json(s));

  ChainConfig c;
  c.n_iterations = 1234;
  c.proposal_std = {0.1};
  c.refresh_current = false;
  CHECK(to_json(chain_config_from_json(to_json(c), ChainConfig{})) == to_json(c));
}
