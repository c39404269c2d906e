#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kabi/error.hpp"
#include "kabi/features.hpp"
#include "kabi/oscillator.hpp"
#include "kabi/rng.hpp"

using namespace kabi;
using namespace kabi::summary;
constexpr double kPi = std::numbers::pi;

TEST_CASE("step summary examples") {
  auto s = summarize_step(std::vector<double>(5, 0.0));
  CHECK(s.r == 1.0);
  CHECK(s.psi == 0.0);
  CHECK(s.mean_sin == 0.0);
  CHECK(s.std_sin == 0.0);
  CHECK(s.mean_cos == 1.0);
  CHECK(s.std_cos == 0.0);

  s = summarize_step(std::vector<double>{0.0, kPi / 2, kPi, 3 * kPi / 2});
  CHECK(s.r < 1e-15);
  CHECK(s.psi == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(s.mean_sin) < 1e-15);
  CHECK(std::abs(s.mean_cos) < 1e-15);
  CHECK(s.std_sin == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(s.std_cos == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));

  const double c = 2.2;
  s = summarize_step(std::vector<double>{c});
  CHECK(s.r == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.psi == doctest::Approx(c).epsilon(1e-14));
  CHECK(s.mean_sin == std::sin(c));
  CHECK(s.std_sin == 0.0);
  CHECK(s.mean_cos == std::cos(c));
  CHECK(s.std_cos == 0.0);

  CHECK_THROWS_AS(summarize_step(std::vector<double>{}), DomainError);
}

TEST_CASE("Pythagorean identity, bounds, permutation and rotation") {
  Rng rng(17);
  std::uniform_real_distribution<double> u(-7.0, 7.0);
  double worst = 0.0;
  for (int rep = 0; rep < 10000; ++rep) {
    std::vector<double> psi(1 + rep % 40);
    for (auto& p : psi) p = u(rng);
    const auto s = summarize_step(psi);
    worst = std::max(worst, std::abs(s.r * s.r - (s.mean_sin * s.mean_sin + s.mean_cos * s.mean_cos)));
    CHECK(s.std_sin >= 0.0);
    CHECK(s.std_cos >= 0.0);
    CHECK(std::abs(s.mean_sin) <= 1.0);
    CHECK(std::abs(s.mean_cos) <= 1.0);
    if (rep % 100 == 0) {
      auto shuffled = psi;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const auto t = summarize_step(shuffled);
      CHECK(t.as_array() == s.as_array());

      const double c = 0.9;
      auto rotated = psi;
      for (auto& p : rotated) p += c;
      const auto q = summarize_step(rotated);
      CHECK(q.r == doctest::Approx(s.r).epsilon(1e-12));
      CHECK(q.mean_cos == doctest::Approx(std::cos(c) * s.mean_cos - std::sin(c) * s.mean_sin).epsilon(1e-12));
      CHECK(q.mean_sin == doctest::Approx(std::sin(c) * s.mean_cos + std::cos(c) * s.mean_sin).epsilon(1e-12));
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("trajectory features") {
  osc::SimConfig cfg;
  cfg.seed = 5;
  SUBCASE("shape and row layout") {
    const auto t = osc::integrate(osc::NetworkSpec{10, osc::MeanField{1.0}},
                                  osc::FrequencySpec{osc::GaussianFrequencies{1.0, 0.5}}, cfg);
    const auto all = summarize_trajectory(t);
    CHECK(all.n_obs == 101);
    const auto fv = summarize_rows(t.observed_phases, 1);
    CHECK(fv.n_obs == 100);
    CHECK(fv.values.size() == 600);
    const Eigen::RowVectorXd row5 = t.observed_phases.row(6);
    const auto s = summarize_step(std::span<const double>(row5.data(), 10)).as_array();
    for (std::size_t k = 0; k < kStatsPerStep; ++k) CHECK(fv.values[5 * kStatsPerStep + k] == s[k]);
    CHECK(fv.as_matrix()(5, 3) == s[3]);
  }
  SUBCASE("identical decoupled oscillators stay synchronized") {
    cfg.obs_noise_std = 0.0;
    cfg.init_phase_std = 0.0;
    const auto t = osc::integrate(osc::NetworkSpec{6, osc::PairwiseUniform{0.0}},
                                  osc::FrequencySpec{osc::FixedFrequencies{std::vector<double>(6, 1.3)}}, cfg);
    const auto m = summarize_trajectory(t).as_matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      CHECK(m(r, 0) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(m(r, 3) == doctest::Approx(0.0));
      CHECK(m(r, 5) == doctest::Approx(0.0));
    }
  }
  SUBCASE("strong coupling raises r") {
    const auto t = osc::integrate(osc::NetworkSpec{100, osc::MeanField{5.0}},
                                  osc::FrequencySpec{osc::GaussianFrequencies{1.0, 0.5}}, cfg);
    const auto m = summarize_trajectory(t).as_matrix();
    CHECK(m(m.rows() - 1, 0) >= m(0, 0));
  }
}

TEST_CASE("features csv round trip") {
  FeatureVector fv;
  fv.n_obs = 3;
  fv.values = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1, 2, 3, 4, 5, 6, -1, -2, -3, -4, -5, 1.0 / 3.0};
  const auto path = std::filesystem::temp_directory_path() / "kabi_test_features.csv";
  write_features_csv(path, fv);
  const auto back = read_features_csv(path);
  CHECK(back.n_obs == 3);
  CHECK(back.values == fv.values);
  std::filesystem::remove(path);
}
