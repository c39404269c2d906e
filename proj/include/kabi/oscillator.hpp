#pragma once

// Noisy first-order Kuramoto dynamics in pairwise, mean-field and
// complex-network form, plus the synchronization order parameter.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "kabi/io.hpp"

namespace kabi::osc {

struct PhaseState {
  std::vector<double> phases;  // radians, unwrapped
  double time = 0.0;
};

// All-to-all coupling evaluated as the explicit O(N^2) pair sum.
struct PairwiseUniform {
  double kappa = 0.0;
};

// All-to-all coupling evaluated through the order parameter, O(N).
struct MeanField {
  double kappa = 0.0;
};

// Per-edge coupling strengths restricted to an adjacency pattern.
struct ComplexNetwork {
  Eigen::MatrixXd adjacency;  // symmetric 0/1, zero diagonal
  Eigen::MatrixXd couplings;  // nonnegative, zero diagonal; ignored where adjacency is 0
};

using Coupling = std::variant<PairwiseUniform, MeanField, ComplexNetwork>;

struct NetworkSpec {
  std::size_t n_oscillators = 0;
  Coupling coupling;

  // Throws ConfigError on any broken invariant.
  void validate() const;
};

struct FixedFrequencies {
  std::vector<double> omega;
};

struct GaussianFrequencies {
  double mu = 0.0;
  double sigma = 1.0;
};

struct FrequencySpec {
  std::variant<FixedFrequencies, GaussianFrequencies> mode;
  void validate(std::size_t n_oscillators) const;
};

struct SimConfig {
  double dt = 0.05;
  std::size_t n_steps = 1000;
  std::size_t subsample = 10;
  double obs_noise_std = 0.1;
  double init_phase_std = 1.0;
  std::uint64_t seed = 41;

  void validate() const;
  std::size_t n_rows() const { return n_steps / subsample + 1; }
};

struct Trajectory {
  Eigen::MatrixXd observed_phases;  // rows: observation times, cols: oscillators
  std::string config_hash;
  std::vector<double> true_params;
  double row_dt = 0.0;  // time between consecutive observation rows

  std::size_t n_rows() const { return static_cast<std::size_t>(observed_phases.rows()); }
  std::size_t n_oscillators() const { return static_cast<std::size_t>(observed_phases.cols()); }
};

// Below this r the mean phase is rounding noise and is reported as 0.
inline constexpr double kZeroOrderTol = 1e-12;

struct OrderParameter {
  double r = 0.0;
  double psi = 0.0;  // in (-pi, pi]; 0 when r == 0
};

OrderParameter order_parameter(std::span<const double> phases);

std::vector<double> drift_pairwise(std::span<const double> phases, std::span<const double> omega, double kappa);
std::vector<double> drift_meanfield(std::span<const double> phases, std::span<const double> omega, double kappa);
std::vector<double> drift_complex(std::span<const double> phases, std::span<const double> omega,
                                  const ComplexNetwork& network);

// Drift of whichever coupling form `network` selects.
void drift_into(const NetworkSpec& network, std::span<const double> phases, std::span<const double> omega,
                std::span<double> out);

// Explicit Euler integration. Initial phases ~ N(0, init_phase_std^2), frequencies resolved
// once, every subsample-th state recorded with additive N(0, obs_noise_std^2) noise.
// An empty `true_params` is filled from the network (see coupling_params).
Trajectory integrate(const NetworkSpec& network, const FrequencySpec& freq, const SimConfig& config,
                     std::vector<double> true_params = {});

// 2 / (pi g(0)) for a centered Gaussian frequency density of standard deviation sigma.
double critical_coupling(double sigma);

// Scalar kappa, or the active couplings of a complex network in row-major order.
std::vector<double> coupling_params(const NetworkSpec& network);

// Fully connected three-node network; kappas[0..5] placed as
//   [ 0   k1  k6 ]
//   [ k2  0   k3 ]
//   [ k5  k4  0  ]
NetworkSpec three_node_network(std::span<const double> kappas);

io::Json to_json(const NetworkSpec& network);
io::Json to_json(const FrequencySpec& freq);
io::Json to_json(const SimConfig& config);
NetworkSpec network_from_json(const io::Json& j);
FrequencySpec frequency_from_json(const io::Json& j);
SimConfig sim_config_from_json(const io::Json& j);

std::string config_hash(const NetworkSpec& network, const FrequencySpec& freq, const SimConfig& config);

// CSV `t, psi_0, ..., psi_{N-1}` plus a JSON sidecar with the full simulation setup.
void write_trajectory(const std::filesystem::path& csv_path, const Trajectory& traj, const NetworkSpec& network,
                      const FrequencySpec& freq, const SimConfig& config);
Trajectory read_trajectory(const std::filesystem::path& csv_path);

}  // namespace kabi::osc
