#pragma once

// Conditional affine coupling flow q(theta | context) with a standard-normal base.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kabi/dataset.hpp"
#include "kabi/io.hpp"
#include "kabi/nn.hpp"

namespace kabi::flow {

using nn::Matrix;
using nn::Mode;

struct FlowSpec {
  std::size_t param_dim = 1;
  std::size_t context_dim = 1;
  std::size_t n_layers = 6;
  std::vector<std::size_t> hidden_widths{128, 128};
  double dropout = 0.1;
  double scale_clamp = 3.0;
  bool zero_init_output = true;  // identity map at initialization

  void validate() const;
};

io::Json to_json(const FlowSpec& spec);
FlowSpec flow_spec_from_json(const io::Json& j, const FlowSpec& defaults);

// Transforms the dims where mask == 0 by x * exp(s) + t; s and t see the dims
// where mask == 1 plus the context. With a single parameter every dim is
// transformed and s, t depend on the context alone.
struct CouplingLayer {
  std::vector<Eigen::Index> conditioner;  // mask == 1
  std::vector<Eigen::Index> transformed;  // mask == 0
  nn::Mlp scale_net;
  nn::Mlp shift_net;
};

struct FlowPass {
  Matrix z;
  Eigen::VectorXd log_det;
};

class FlowModel {
 public:
  FlowModel() = default;
  FlowModel(FlowSpec spec, std::uint64_t init_seed);

  const FlowSpec& spec() const { return spec_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  std::vector<int> mask(std::size_t layer) const;

  // theta -> z. Context has one row per theta row, or a single shared row.
  // Dropout is only applied in train mode with a dropout rng.
  FlowPass forward(const Matrix& theta, const Matrix& context, Rng* dropout_rng = nullptr) const;
  // z -> theta; log_det is that of the inverse map.
  FlowPass inverse(const Matrix& z, const Matrix& context) const;

  Eigen::VectorXd log_prob(const Matrix& theta, const Matrix& context, Rng* dropout_rng = nullptr) const;

  // Draws in flow space; the model must be in eval mode.
  Matrix sample(std::size_t n, const Eigen::RowVectorXd& context, Rng& rng) const;

  // Mean negative log_prob over the batch; with accumulate set, its gradient is added
  // into every parameter's grad. Dropout masks come from `dropout_seed`.
  double loss_and_grad(const Matrix& theta, const Matrix& context, std::uint64_t dropout_seed, bool accumulate);

  void zero_grad();
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;
  std::size_t n_parameters() const;

 private:
  FlowSpec spec_;
  std::vector<CouplingLayer> layers_;
  Mode mode_ = Mode::Eval;
};

double standard_normal_log_density(const Eigen::RowVectorXd& z);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 50;
  std::size_t batches_per_epoch = 64;
  double initial_lr = 5e-4;
  std::uint64_t seed = 41;
  nn::AdamOptions adam;
  std::size_t max_nan_recoveries = 3;
};

struct TrainResult {
  FlowModel model;  // weights of the best validation epoch, eval mode
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::size_t nan_recoveries = 0;
};

// Cosine decay from the initial rate to 0 over total_steps.
double cosine_lr(double initial_lr, std::size_t step, std::size_t total_steps);

// Inputs are in flow space: params mapped to [-1, 1], standardized contexts.
TrainResult train(FlowModel model, const Matrix& theta_train, const Matrix& ctx_train, const Matrix& theta_val,
                  const Matrix& ctx_val, const TrainOptions& options);

// Standardizes both datasets with the training standardizer and trains a fresh model.
TrainResult train(const data::Dataset& train_set, const data::Dataset& val_set, const data::ExperimentConfig& config,
                  FlowSpec arch);

FlowSpec default_flow_spec(const data::ExperimentConfig& config, std::size_t context_dim);

// Posterior draws in natural units for one raw feature vector. Draws outside the prior
// box are rejected and redrawn; more than 10 n attempts raises NumericError.
struct PosteriorDraws {
  Matrix draws;
  std::size_t attempts = 0;
  double acceptance_rate() const { return attempts ? static_cast<double>(draws.rows()) / static_cast<double>(attempts) : 0.0; }
};
PosteriorDraws sample_posterior(const FlowModel& model, const data::Standardizer& standardizer,
                                std::span<const double> raw_features, std::size_t n, std::uint64_t seed);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  FlowModel model;
  data::Standardizer standardizer;
  std::vector<EpochLog> log_tail;
  std::uint32_t version = kCheckpointVersion;
};

// Binary file: magic, version, JSON header (architecture, tensor shapes, standardizer and
// its hash, training-log tail), then all parameter tensors as little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, const data::Standardizer& standardizer,
                     const std::vector<EpochLog>& log);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

}  // namespace kabi::flow
