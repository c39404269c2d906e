#pragma once

// End-to-end helpers shared by the CLI, the acceptance suite and the Python module.

#include <cstdint>
#include <vector>

#include "kabi/dataset.hpp"
#include "kabi/diagnostics.hpp"
#include "kabi/flow.hpp"

namespace kabi::pipeline {

// Posterior draws for every row of `test`, one independent seed per case.
std::vector<diag::PosteriorSamples> infer_test_set(const flow::FlowModel& model,
                                                   const data::Standardizer& standardizer, const data::Dataset& test,
                                                   std::size_t n_draws, std::uint64_t seed);

struct NpeRun {
  data::ExperimentConfig config;
  flow::TrainResult training;
  data::Standardizer standardizer;
  data::Dataset test;
  std::vector<diag::PosteriorSamples> posteriors;
  diag::MetricsReport report;
};

// Simulate, train, infer on the test split and evaluate.
NpeRun run_npe(const data::ExperimentConfig& config);

double mean_of(const std::vector<double>& v);

}  // namespace kabi::pipeline
