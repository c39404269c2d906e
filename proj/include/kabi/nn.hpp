#pragma once

// Minimal reverse-mode machinery for the coupling networks: dense layers with
// rectified-linear activations and inverted dropout, batched along rows, each
// with a hand-derived backward pass, plus an adaptive-moment optimizer.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "kabi/rng.hpp"

namespace kabi::nn {

using Matrix = Eigen::MatrixXd;

enum class Mode { Train, Eval };

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

struct MlpSpec {
  std::size_t input_dim = 0;    // non-context inputs (may be 0)
  std::size_t context_dim = 0;  // context inputs, fed to the first layer only
  std::vector<std::size_t> hidden_widths{128, 128};
  std::size_t output_dim = 1;
  double dropout_rate = 0.0;

  void validate() const;
};

// Activations kept from a forward pass for the matching backward pass.
struct MlpCache {
  std::vector<Matrix> pre;   // pre-activation of each hidden layer
  std::vector<Matrix> post;  // activation after dropout
  std::vector<Matrix> keep;  // dropout multipliers (empty in eval mode)
};

// y = relu(...relu([x, c] W0 + b0)...) Wout + bout. The context block `c` may
// have one row, in which case it is broadcast over the batch.
class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, const std::string& name, Rng& init_rng, bool zero_output);

  const MlpSpec& spec() const { return spec_; }

  Matrix forward(const Matrix& x, const Matrix& context, Mode mode, Rng* dropout_rng, MlpCache* cache) const;

  // Accumulates parameter gradients for d(loss)/d(output) = grad_out; returns d(loss)/dx.
  // The context is treated as a constant.
  Matrix backward(const Matrix& x, const Matrix& context, const MlpCache& cache, const Matrix& grad_out);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;

 private:
  MlpSpec spec_;
  std::vector<Param> weights_;  // hidden layers then output layer
  std::vector<Param> biases_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators are shaped like the parameters they track.
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<Param*>& params, AdamOptions options = {});

  void step(const std::vector<Param*>& params, double lr);
  std::uint64_t steps() const { return t_; }

 private:
  AdamOptions opt_;
  std::vector<Matrix> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace kabi::nn
