#include "kabi/oscillator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kabi/error.hpp"
#include "kabi/rng.hpp"

namespace kabi::osc {

namespace {

void check_sizes(std::span<const double> phases, std::span<const double> omega) {
  if (phases.empty()) throw ConfigError("phase state is empty");
  if (omega.size() != phases.size())
    throw ConfigError("frequency vector has length " + std::to_string(omega.size()) + ", expected " +
                      std::to_string(phases.size()));
}

void check_network_matrices(const ComplexNetwork& net, std::size_t n) {
  const auto N = static_cast<Eigen::Index>(n);
  if (net.adjacency.rows() != N || net.adjacency.cols() != N)
    throw ConfigError("adjacency must be " + std::to_string(n) + "x" + std::to_string(n));
  if (net.couplings.rows() != N || net.couplings.cols() != N)
    throw ConfigError("coupling matrix must be " + std::to_string(n) + "x" + std::to_string(n));
}

void drift_meanfield_into(std::span<const double> phases, std::span<const double> omega, double kappa,
                          std::span<double> out) {
  // kappa r sin(Psi - psi_i) == kappa (S cos psi_i - C sin psi_i), S and C the mean sin and cos.
  const std::size_t n = phases.size();
  double s = 0.0, c = 0.0;
  for (double p : phases) {
    s += std::sin(p);
    c += std::cos(p);
  }
  s /= static_cast<double>(n);
  c /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = omega[i] + kappa * (s * std::cos(phases[i]) - c * std::sin(phases[i]));
}

void drift_pairwise_into(std::span<const double> phases, std::span<const double> omega, double kappa,
                         std::span<double> out) {
  const std::size_t n = phases.size();
  const double scale = kappa / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::sin(phases[j] - phases[i]);
    out[i] = omega[i] + scale * sum;
  }
}

void drift_complex_into(std::span<const double> phases, std::span<const double> omega, const ComplexNetwork& net,
                        std::span<double> out) {
  const std::size_t n = phases.size();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      if (net.adjacency(ii, jj) != 0.0) sum += net.couplings(ii, jj) * net.adjacency(ii, jj) * std::sin(phases[j] - phases[i]);
    }
    out[i] = omega[i] + sum;
  }
}

}  // namespace

void NetworkSpec::validate() const {
  if (n_oscillators == 0) throw ConfigError("network needs at least one oscillator");
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, ComplexNetwork>) {
          check_network_matrices(c, n_oscillators);
          const auto N = static_cast<Eigen::Index>(n_oscillators);
          for (Eigen::Index i = 0; i < N; ++i) {
            if (c.adjacency(i, i) != 0.0) throw ConfigError("adjacency diagonal must be zero");
            if (c.couplings(i, i) != 0.0) throw ConfigError("coupling diagonal must be zero");
            for (Eigen::Index j = 0; j < N; ++j) {
              const double a = c.adjacency(i, j);
              if (a != 0.0 && a != 1.0) throw ConfigError("adjacency entries must be 0 or 1");
              if (a != c.adjacency(j, i)) throw ConfigError("adjacency must be symmetric");
              if (!(c.couplings(i, j) >= 0.0) || !std::isfinite(c.couplings(i, j)))
                throw ConfigError("couplings must be finite and nonnegative");
            }
          }
        } else {
          if (!(c.kappa >= 0.0) || !std::isfinite(c.kappa)) throw ConfigError("kappa must be finite and >= 0");
        }
      },
      coupling);
}

void FrequencySpec::validate(std::size_t n_oscillators) const {
  if (const auto* f = std::get_if<FixedFrequencies>(&mode)) {
    if (f->omega.size() != n_oscillators)
      throw ConfigError("fixed frequency vector has length " + std::to_string(f->omega.size()) + ", expected " +
                        std::to_string(n_oscillators));
  } else {
    const auto& g = std::get<GaussianFrequencies>(mode);
    if (!(g.sigma > 0.0)) throw ConfigError("gaussian frequency sigma must be > 0");
  }
}

void SimConfig::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be > 0");
  if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
  if (subsample < 1) throw ConfigError("subsample must be >= 1");
  if (n_steps % subsample != 0)
    throw ConfigError("subsample " + std::to_string(subsample) + " does not divide n_steps " + std::to_string(n_steps));
  if (!(obs_noise_std >= 0.0)) throw ConfigError("obs_noise_std must be >= 0");
  if (!(init_phase_std >= 0.0)) throw ConfigError("init_phase_std must be >= 0");
}

OrderParameter order_parameter(std::span<const double> phases) {
  if (phases.empty()) throw DomainError("order parameter of an empty state");
  // Sorted summation keeps (r, Psi) independent of oscillator order.
  std::vector<double> sn, cs;
  sn.reserve(phases.size());
  cs.reserve(phases.size());
  for (double p : phases) {
    sn.push_back(std::sin(p));
    cs.push_back(std::cos(p));
  }
  std::sort(sn.begin(), sn.end());
  std::sort(cs.begin(), cs.end());
  double s = 0.0, c = 0.0;
  for (double v : sn) s += v;
  for (double v : cs) c += v;
  s /= static_cast<double>(phases.size());
  c /= static_cast<double>(phases.size());
  OrderParameter op;
  op.r = std::min(1.0, std::hypot(s, c));
  op.psi = op.r < kZeroOrderTol ? 0.0 : std::atan2(s, c);
  if (op.psi == -std::numbers::pi) op.psi = std::numbers::pi;
  return op;
}

std::vector<double> drift_pairwise(std::span<const double> phases, std::span<const double> omega, double kappa) {
  check_sizes(phases, omega);
  std::vector<double> out(phases.size());
  drift_pairwise_into(phases, omega, kappa, out);
  return out;
}

std::vector<double> drift_meanfield(std::span<const double> phases, std::span<const double> omega, double kappa) {
  check_sizes(phases, omega);
  std::vector<double> out(phases.size());
  drift_meanfield_into(phases, omega, kappa, out);
  return out;
}

std::vector<double> drift_complex(std::span<const double> phases, std::span<const double> omega,
                                  const ComplexNetwork& network) {
  check_sizes(phases, omega);
  check_network_matrices(network, phases.size());
  std::vector<double> out(phases.size());
  drift_complex_into(phases, omega, network, out);
  return out;
}

void drift_into(const NetworkSpec& network, std::span<const double> phases, std::span<const double> omega,
                std::span<double> out) {
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, PairwiseUniform>)
          drift_pairwise_into(phases, omega, c.kappa, out);
        else if constexpr (std::is_same_v<T, MeanField>)
          drift_meanfield_into(phases, omega, c.kappa, out);
        else
          drift_complex_into(phases, omega, c, out);
      },
      network.coupling);
}

Trajectory integrate(const NetworkSpec& network, const FrequencySpec& freq, const SimConfig& config,
                     std::vector<double> true_params) {
  network.validate();
  freq.validate(network.n_oscillators);
  config.validate();
  const std::size_t n = network.n_oscillators;

  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> phases(n);
  for (auto& p : phases) p = config.init_phase_std * normal(rng);

  std::vector<double> omega;
  if (const auto* f = std::get_if<FixedFrequencies>(&freq.mode)) {
    omega = f->omega;
  } else {
    const auto& g = std::get<GaussianFrequencies>(freq.mode);
    omega.resize(n);
    for (auto& w : omega) w = g.mu + g.sigma * normal(rng);
  }

  Trajectory traj;
  traj.observed_phases.resize(static_cast<Eigen::Index>(config.n_rows()), static_cast<Eigen::Index>(n));
  traj.row_dt = config.dt * static_cast<double>(config.subsample);
  traj.true_params = true_params.empty() ? coupling_params(network) : std::move(true_params);
  traj.config_hash = config_hash(network, freq, config);

  auto record = [&](std::size_t row) {
    for (std::size_t i = 0; i < n; ++i) {
      double noise = config.obs_noise_std > 0.0 ? config.obs_noise_std * normal(rng) : 0.0;
      traj.observed_phases(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(i)) = phases[i] + noise;
    }
  };

  record(0);
  std::vector<double> velocity(n);
  for (std::size_t step = 1; step <= config.n_steps; ++step) {
    drift_into(network, phases, omega, velocity);
    double check = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      phases[i] += config.dt * velocity[i];
      check += phases[i];
    }
    if (!std::isfinite(check)) throw IntegrationDiverged(step, "non-finite phase");
    if (step % config.subsample == 0) record(step / config.subsample);
  }
  return traj;
}

double critical_coupling(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("critical coupling needs sigma > 0");
  return 2.0 * std::sqrt(2.0 / std::numbers::pi) * sigma;
}

std::vector<double> coupling_params(const NetworkSpec& network) {
  return std::visit(
      [&](const auto& c) -> std::vector<double> {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, ComplexNetwork>) {
          std::vector<double> out;
          for (Eigen::Index i = 0; i < c.adjacency.rows(); ++i)
            for (Eigen::Index j = 0; j < c.adjacency.cols(); ++j)
              if (c.adjacency(i, j) != 0.0) out.push_back(c.couplings(i, j));
          return out;
        } else {
          return {c.kappa};
        }
      },
      network.coupling);
}

NetworkSpec three_node_network(std::span<const double> kappas) {
  if (kappas.size() != 6) throw ConfigError("three-node network needs 6 couplings, got " + std::to_string(kappas.size()));
  ComplexNetwork net;
  net.adjacency = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
  net.couplings = Eigen::MatrixXd::Zero(3, 3);
  net.couplings(0, 1) = kappas[0];
  net.couplings(1, 0) = kappas[1];
  net.couplings(1, 2) = kappas[2];
  net.couplings(2, 1) = kappas[3];
  net.couplings(2, 0) = kappas[4];
  net.couplings(0, 2) = kappas[5];
  return NetworkSpec{3, std::move(net)};
}

namespace {

io::Json matrix_json(const Eigen::MatrixXd& m) {
  io::Json rows = io::Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    io::Json row = io::Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const io::Json& j, const char* name) {
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(name) + ": expected a non-empty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(std::string(name) + ": ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

}  // namespace

io::Json to_json(const NetworkSpec& network) {
  io::Json j;
  j["n_oscillators"] = network.n_oscillators;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, PairwiseUniform>) {
          j["coupling"] = "pairwise";
          j["kappa"] = c.kappa;
        } else if constexpr (std::is_same_v<T, MeanField>) {
          j["coupling"] = "mean_field";
          j["kappa"] = c.kappa;
        } else {
          j["coupling"] = "complex";
          j["adjacency"] = matrix_json(c.adjacency);
          j["couplings"] = matrix_json(c.couplings);
        }
      },
      network.coupling);
  return j;
}

io::Json to_json(const FrequencySpec& freq) {
  io::Json j;
  if (const auto* f = std::get_if<FixedFrequencies>(&freq.mode)) {
    j["mode"] = "fixed";
    j["omega"] = f->omega;
  } else {
    const auto& g = std::get<GaussianFrequencies>(freq.mode);
    j["mode"] = "gaussian";
    j["mu"] = g.mu;
    j["sigma"] = g.sigma;
  }
  return j;
}

io::Json to_json(const SimConfig& c) {
  return io::Json{{"dt", c.dt},
                  {"n_steps", c.n_steps},
                  {"subsample", c.subsample},
                  {"obs_noise_std", c.obs_noise_std},
                  {"init_phase_std", c.init_phase_std},
                  {"seed", c.seed}};
}

NetworkSpec network_from_json(const io::Json& j) {
  try {
    NetworkSpec net;
    net.n_oscillators = j.at("n_oscillators").get<std::size_t>();
    const auto kind = j.at("coupling").get<std::string>();
    if (kind == "pairwise")
      net.coupling = PairwiseUniform{j.at("kappa").get<double>()};
    else if (kind == "mean_field")
      net.coupling = MeanField{j.at("kappa").get<double>()};
    else if (kind == "complex")
      net.coupling = ComplexNetwork{matrix_from_json(j.at("adjacency"), "adjacency"),
                                    matrix_from_json(j.at("couplings"), "couplings")};
    else
      throw ConfigError("unknown coupling kind '" + kind + "'");
    net.validate();
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network spec: ") + e.what());
  }
}

FrequencySpec frequency_from_json(const io::Json& j) {
  try {
    const auto mode = j.at("mode").get<std::string>();
    if (mode == "fixed") return FrequencySpec{FixedFrequencies{j.at("omega").get<std::vector<double>>()}};
    if (mode == "gaussian") return FrequencySpec{GaussianFrequencies{j.at("mu").get<double>(), j.at("sigma").get<double>()}};
    throw ConfigError("unknown frequency mode '" + mode + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("frequency spec: ") + e.what());
  }
}

SimConfig sim_config_from_json(const io::Json& j) {
  try {
    SimConfig c;
    c.dt = j.at("dt").get<double>();
    c.n_steps = j.at("n_steps").get<std::size_t>();
    c.subsample = j.at("subsample").get<std::size_t>();
    c.obs_noise_std = j.at("obs_noise_std").get<double>();
    c.init_phase_std = j.at("init_phase_std").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sim config: ") + e.what());
  }
}

std::string config_hash(const NetworkSpec& network, const FrequencySpec& freq, const SimConfig& config) {
  io::Json j{{"network", to_json(network)}, {"frequencies", to_json(freq)}, {"sim", to_json(config)}};
  return io::hex_digest(j.dump());
}

void write_trajectory(const std::filesystem::path& csv_path, const Trajectory& traj, const NetworkSpec& network,
                      const FrequencySpec& freq, const SimConfig& config) {
  const auto rows = traj.observed_phases.rows();
  Eigen::MatrixXd table(rows, traj.observed_phases.cols() + 1);
  for (Eigen::Index i = 0; i < rows; ++i) table(i, 0) = static_cast<double>(i) * traj.row_dt;
  table.rightCols(traj.observed_phases.cols()) = traj.observed_phases;
  std::vector<std::string> header{"t"};
  for (std::size_t i = 0; i < traj.n_oscillators(); ++i) header.push_back("psi_" + std::to_string(i));
  io::write_csv(csv_path, header, table);

  io::Json meta{{"config_hash", traj.config_hash},
                {"true_params", traj.true_params},
                {"row_dt", traj.row_dt},
                {"network", to_json(network)},
                {"frequencies", to_json(freq)},
                {"sim", to_json(config)}};
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  io::write_json(sidecar, meta);
}

Trajectory read_trajectory(const std::filesystem::path& csv_path) {
  auto table = io::read_csv(csv_path);
  if (table.header.empty() || table.header.front() != "t" || table.values.cols() < 2)
    throw ConfigError(csv_path.string() + ": expected header 't, psi_0, ...'");
  Trajectory traj;
  traj.observed_phases = table.values.rightCols(table.values.cols() - 1);
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    auto meta = io::read_json(sidecar);
    traj.config_hash = meta.value("config_hash", "");
    traj.true_params = meta.value("true_params", std::vector<double>{});
    traj.row_dt = meta.value("row_dt", 0.0);
  } else if (table.values.rows() > 1) {
    traj.row_dt = table.values(1, 0) - table.values(0, 0);
  }
  if (!traj.observed_phases.allFinite()) throw ConfigError(csv_path.string() + ": non-finite phase values");
  return traj;
}

}  // namespace kabi::osc
