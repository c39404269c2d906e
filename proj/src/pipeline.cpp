#include "kabi/pipeline.hpp"

#include <numeric>

#include <spdlog/spdlog.h>

#include "kabi/parallel.hpp"

namespace kabi::pipeline {

std::vector<diag::PosteriorSamples> infer_test_set(const flow::FlowModel& model,
                                                   const data::Standardizer& standardizer, const data::Dataset& test,
                                                   std::size_t n_draws, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(test.params.rows());
  std::vector<diag::PosteriorSamples> out(n);
  parallel_for(n, [&](std::size_t i) {
    const Eigen::RowVectorXd raw = test.features.row(static_cast<Eigen::Index>(i));
    auto draws = flow::sample_posterior(model, standardizer, std::span<const double>(raw.data(), raw.size()), n_draws,
                                        stream_seed(seed, 0x1f00000000ull + i));
    auto& s = out[i];
    s.draws = std::move(draws.draws);
    const Eigen::RowVectorXd truth = test.params.row(static_cast<Eigen::Index>(i));
    s.truth.assign(truth.data(), truth.data() + truth.size());
    s.source = diag::Source::NPE;
    s.context_hash = io::hex_digest(std::string_view(reinterpret_cast<const char*>(raw.data()), static_cast<std::size_t>(raw.size()) * sizeof(double)));
  });
  return out;
}

NpeRun run_npe(const data::ExperimentConfig& input) {
  NpeRun run;
  run.config = data::resolve(input);
  const auto& cfg = run.config;
  spdlog::info("simulating {} training and {} validation rows", cfg.n_train, cfg.n_val);
  auto [train_set, val_set] = data::generate(cfg);
  run.standardizer = train_set.standardizer;
  const auto spec = flow::default_flow_spec(cfg, run.standardizer.context_dim());
  run.training = flow::train(train_set, val_set, cfg, spec);
  spdlog::info("simulating {} test rows", cfg.n_test);
  run.test = data::generate_test(cfg, run.standardizer);
  run.posteriors = infer_test_set(run.training.model, run.standardizer, run.test, cfg.posterior_draws, cfg.seed);
  run.report = diag::evaluate(run.posteriors, cfg.prior, stream_seed(cfg.seed, 0x917));
  return run;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace kabi::pipeline
