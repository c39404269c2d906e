#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kabi/error.hpp"
#include "kabi/oscillator.hpp"
#include "kabi/rng.hpp"

using namespace kabi;
using namespace kabi::osc;
constexpr double kPi = std::numbers::pi;

namespace {

std::vector<double> random_phases(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("pairwise drift, hand-evaluated cases") {
  const std::vector<double> omega{0.3, -0.7};
  const std::vector<double> same{1.2, 1.2};
  CHECK(drift_pairwise(same, omega, 3.0) == omega);
  const std::vector<double> psi{0.0, kPi / 2};
  const auto d = drift_pairwise(psi, std::vector<double>{0.0, 0.0}, 2.0);
  CHECK(d[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d[1] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(drift_pairwise(psi, omega, 0.0) == omega);
  CHECK_THROWS_AS(drift_pairwise(psi, std::vector<double>{1.0}, 1.0), ConfigError);
}

TEST_CASE("order parameter") {
  const std::vector<double> eq(7, 2.5);
  auto op = order_parameter(eq);
  CHECK(op.r == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(op.psi == doctest::Approx(2.5));
  const std::vector<double> wrapped(3, 2.5 + 2 * kPi);
  CHECK(order_parameter(wrapped).psi == doctest::Approx(2.5).epsilon(1e-12));
  const std::vector<double> balanced{0.0, kPi / 2, kPi, 3 * kPi / 2};
  CHECK(order_parameter(balanced).r < 1e-15);
  const std::vector<double> two{0.0, kPi / 2};
  op = order_parameter(two);
  CHECK(op.r == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(op.psi == doctest::Approx(kPi / 4).epsilon(1e-14));
  const std::vector<double> opposite{0.0, kPi};
  CHECK(order_parameter(opposite).r < 1e-15);
  // angle of (0, -1) lands at -pi only through rounding; (-pi) is reported as pi
  const std::vector<double> back{kPi};
  CHECK(order_parameter(back).psi > 0.0);
  CHECK_THROWS_AS(order_parameter(std::vector<double>{}), DomainError);
}

TEST_CASE("mean-field drift equals pairwise drift") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  double worst = 0.0;
  for (std::size_t n : {2u, 5u, 20u}) {
    for (int rep = 0; rep < 1000; ++rep) {
      const auto psi = random_phases(n, rng);
      const auto omega = random_phases(n, rng);
      const double kappa = u(rng);
      worst = std::max(worst, max_abs_diff(drift_pairwise(psi, omega, kappa), drift_meanfield(psi, omega, kappa)));
    }
  }
  CHECK(worst <= 1e-10);
  const std::vector<double> sync(4, 0.4), omega{1, 2, 3, 4};
  CHECK(max_abs_diff(drift_meanfield(sync, omega, 2.0), omega) <= 1e-15);
  CHECK(drift_meanfield(random_phases(4, rng), omega, 0.0) == omega);
}

TEST_CASE("complex drift") {
  const std::vector<double> kappas{0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  const auto net = three_node_network(kappas);
  const auto& c = std::get<ComplexNetwork>(net.coupling);
  const std::vector<double> psi{0.0, 1.0, 2.0}, zero(3, 0.0);
  const auto d = drift_complex(psi, zero, c);
  // 0.6 sin 1 + 0.1 sin 2, -0.5 sin 1 + 0.4 sin 1, -0.2 sin 2 - 0.3 sin 1
  CHECK(d[0] == doctest::Approx(0.595812333567306).epsilon(1e-14));
  CHECK(d[1] == doctest::Approx(-0.08414709848078966).epsilon(1e-14));
  CHECK(d[2] == doctest::Approx(-0.4343007808075053).epsilon(1e-14));

  const std::vector<double> same(3, 0.8), omega{0.1, 0.2, 0.3};
  CHECK(max_abs_diff(drift_complex(same, omega, c), omega) <= 1e-15);

  ComplexNetwork empty{Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Constant(3, 3, 0.0)};
  CHECK(drift_complex(psi, omega, empty) == omega);

  // all-to-all network with kappa/N couplings reproduces the pairwise drift
  Rng rng(11);
  for (std::size_t n : {3u, 8u}) {
    const double kappa = 1.7;
    Eigen::MatrixXd adj = Eigen::MatrixXd::Ones(n, n) - Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd k = adj * (kappa / static_cast<double>(n));
    ComplexNetwork full{adj, k};
    const auto p = random_phases(n, rng), w = random_phases(n, rng);
    CHECK(max_abs_diff(drift_complex(p, w, full), drift_pairwise(p, w, kappa)) <= 1e-10);
  }
}

TEST_CASE("network validation") {
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(3, 3);
  adj(0, 1) = 1;  // not symmetric
  NetworkSpec bad{3, ComplexNetwork{adj, Eigen::MatrixXd::Zero(3, 3)}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  NetworkSpec negative{5, MeanField{-1.0}};
  CHECK_THROWS_AS(negative.validate(), ConfigError);
}

TEST_CASE("global phase shift") {
  Rng rng(3);
  const auto psi = random_phases(9, rng), omega = random_phases(9, rng);
  std::vector<double> shifted = psi;
  const double c = 0.731;
  for (auto& p : shifted) p += c;
  const auto a = order_parameter(psi), b = order_parameter(shifted);
  CHECK(b.r == doctest::Approx(a.r).epsilon(1e-12));
  CHECK(std::remainder(b.psi - a.psi - c, 2 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(max_abs_diff(drift_pairwise(psi, omega, 2.0), drift_pairwise(shifted, omega, 2.0)) <= 1e-12);
  CHECK(max_abs_diff(drift_meanfield(psi, omega, 2.0), drift_meanfield(shifted, omega, 2.0)) <= 1e-12);
}

TEST_CASE("r bounds and synchrony") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto op = order_parameter(random_phases(1 + i % 17, rng));
    CHECK(op.r >= 0.0);
    CHECK(op.r <= 1.0);
  }
}

TEST_CASE("critical coupling") {
  CHECK(critical_coupling(0.5) == doctest::Approx(0.7978845608028654).epsilon(1e-14));
  CHECK(critical_coupling(1.0) == doctest::Approx(1.5957691216057308).epsilon(1e-14));
  const double g0 = 1.0 / (std::sqrt(2 * kPi) * 0.8);
  CHECK(critical_coupling(0.8) == doctest::Approx(2.0 / (kPi * g0)).epsilon(1e-14));
  CHECK_THROWS_AS(critical_coupling(0.0), DomainError);
  CHECK_THROWS_AS(critical_coupling(-1.0), DomainError);
}

TEST_CASE("integration") {
  SimConfig cfg;
  cfg.seed = 99;
  SUBCASE("shape and determinism") {
    const NetworkSpec net{20, MeanField{1.0}};
    const FrequencySpec freq{GaussianFrequencies{1.0, 0.5}};
    const auto a = integrate(net, freq, cfg), b = integrate(net, freq, cfg);
    CHECK(a.n_rows() == 101);
    CHECK(a.n_oscillators() == 20);
    CHECK(a.observed_phases == b.observed_phases);
    CHECK(a.config_hash == b.config_hash);
    CHECK(a.true_params == std::vector<double>{1.0});
    cfg.seed = 100;
    CHECK(integrate(net, freq, cfg).observed_phases != a.observed_phases);
  }
  SUBCASE("strong coupling synchronizes") {
    cfg.obs_noise_std = 0.0;
    cfg.n_steps = 4000;
    const auto t = integrate(NetworkSpec{100, MeanField{5.0}}, FrequencySpec{GaussianFrequencies{1.0, 0.5}}, cfg);
    const Eigen::RowVectorXd last = t.observed_phases.row(t.observed_phases.rows() - 1);
    CHECK(order_parameter(std::span<const double>(last.data(), 100)).r >= 0.9);
  }
  SUBCASE("decoupled oscillators drift linearly") {
    cfg.obs_noise_std = 0.0;
    cfg.n_steps = 200;
    cfg.subsample = 20;
    const std::vector<double> omega{0.5, -1.0, 2.0};
    const auto t = integrate(NetworkSpec{3, PairwiseUniform{0.0}}, FrequencySpec{FixedFrequencies{omega}}, cfg);
    for (Eigen::Index r = 1; r < t.observed_phases.rows(); ++r)
      for (Eigen::Index i = 0; i < 3; ++i)
        CHECK(t.observed_phases(r, i) ==
              doctest::Approx(t.observed_phases(0, i) + omega[static_cast<std::size_t>(i)] * 1.0 * static_cast<double>(r))
                  .epsilon(1e-12));
  }
  SUBCASE("invalid configs") {
    cfg.subsample = 7;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.subsample = 10;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("divergence names the step") {
    cfg.dt = 1e300;
    cfg.obs_noise_std = 0.0;
    try {
      integrate(NetworkSpec{3, PairwiseUniform{1.0}}, FrequencySpec{FixedFrequencies{{1e10, 2e10, 3e10}}}, cfg);
      FAIL("expected divergence");
    } catch (const IntegrationDiverged& e) {
      CHECK(e.step() <= 2);
    }
  }
}

TEST_CASE("trajectory round trip") {
  SimConfig cfg;
  cfg.n_steps = 100;
  const NetworkSpec net = three_node_network(std::vector<double>{0.6, 0.5, 0.4, 0.3, 0.2, 0.1});
  const FrequencySpec freq{FixedFrequencies{{1.0, 1.2, 0.9}}};
  const auto t = integrate(net, freq, cfg);
  const auto dir = std::filesystem::temp_directory_path() / "kabi_test_traj";
  std::filesystem::remove_all(dir);
  write_trajectory(dir / "t.csv", t, net, freq, cfg);
  const auto back = read_trajectory(dir / "t.csv");
  CHECK(back.observed_phases == t.observed_phases);
  CHECK(back.config_hash == t.config_hash);
  CHECK(back.true_params == t.true_params);
  CHECK(t.true_params.size() == 6);
  std::filesystem::remove_all(dir);
}
