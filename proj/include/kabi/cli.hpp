#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kabi/dataset.hpp"
#include "kabi/flow.hpp"
#include "kabi/io.hpp"
#include "kabi/mcmc.hpp"

namespace kabi::cli {

// Everything one config file can hold. Only "scenario" is required; every other key
// falls back to the scenario preset.
struct RunConfig {
  data::ExperimentConfig experiment;  // resolved
  io::Json flow = io::Json::object();
  std::vector<std::vector<double>> simulate_thetas;
  std::vector<double> truth;  // observed dataset for mcmc / single-observation inference
  std::uint64_t observation_seed = 0;
  mcmc::EcdfLikelihoodSpec likelihood;
  mcmc::ChainConfig chain;
  mcmc::ReferenceOptions reference;
  std::size_t compare_case = 0;

  io::Json to_json() const;
};

// Rejects unknown keys with their full path.
RunConfig parse_run_config(const io::Json& j, const std::uint64_t* seed_override = nullptr);
RunConfig load_run_config(const std::filesystem::path& path, const std::uint64_t* seed_override = nullptr);

// Summary features of the observed dataset for the mcmc and compare commands.
Eigen::MatrixXd observed_features(const RunConfig& config);

int main(int argc, char** argv);

}  // namespace kabi::cli
