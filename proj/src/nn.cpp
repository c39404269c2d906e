#include "kabi/nn.hpp"

#include <cmath>
#include <random>

#include "kabi/error.hpp"

namespace kabi::nn {

void MlpSpec::validate() const {
  if (input_dim + context_dim == 0) throw ConfigError("mlp needs at least one input");
  if (output_dim == 0) throw ConfigError("mlp needs at least one output");
  if (hidden_widths.empty()) throw ConfigError("mlp needs at least one hidden layer");
  for (auto w : hidden_widths)
    if (w == 0) throw ConfigError("mlp hidden widths must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

Mlp::Mlp(MlpSpec spec, const std::string& name, Rng& init_rng, bool zero_output) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t fan_in = spec_.input_dim + spec_.context_dim;
  std::vector<std::size_t> widths = spec_.hidden_widths;
  widths.push_back(spec_.output_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const bool is_output = l + 1 == widths.size();
    Param w{name + ".w" + std::to_string(l), Matrix::Zero(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(widths[l])), {}};
    Param b{name + ".b" + std::to_string(l), Matrix::Zero(1, static_cast<Eigen::Index>(widths[l])), {}};
    if (!(is_output && zero_output)) {
      // He-style uniform bound for rectified-linear layers.
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in)) * (is_output ? 0.1 : 1.0);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = u(init_rng);
    }
    w.grad = Matrix::Zero(w.value.rows(), w.value.cols());
    b.grad = Matrix::Zero(1, b.value.cols());
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
    fan_in = widths[l];
  }
}

Matrix Mlp::forward(const Matrix& x, const Matrix& context, Mode mode, Rng* dropout_rng, MlpCache* cache) const {
  const auto in = static_cast<Eigen::Index>(spec_.input_dim);
  const auto ctx = static_cast<Eigen::Index>(spec_.context_dim);
  const Eigen::Index batch = x.rows();
  const bool drop = mode == Mode::Train && spec_.dropout_rate > 0.0;
  if (cache) {
    cache->pre.clear();
    cache->post.clear();
    cache->keep.clear();
  }

  const Matrix& w0 = weights_[0].value;
  Matrix h(batch, w0.cols());
  if (in > 0) {
    h.noalias() = x * w0.topRows(in);
  } else {
    h.setZero();
  }
  if (ctx > 0) {
    if (context.rows() == batch) {
      h.noalias() += context * w0.bottomRows(ctx);
    } else {
      const Eigen::RowVectorXd shared = context.row(0) * w0.bottomRows(ctx);
      h.rowwise() += shared;
    }
  }
  h.rowwise() += biases_[0].value.row(0);

  std::bernoulli_distribution keep_dist(1.0 - spec_.dropout_rate);
  const double keep_scale = 1.0 / (1.0 - spec_.dropout_rate);
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    if (l > 0) {
      Matrix next(batch, weights_[l].value.cols());
      next.noalias() = h * weights_[l].value;
      next.rowwise() += biases_[l].value.row(0);
      h = std::move(next);
    }
    if (cache) cache->pre.push_back(h);
    h = h.cwiseMax(0.0);
    if (drop) {
      Matrix keep(h.rows(), h.cols());
      for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = keep_dist(*dropout_rng) ? keep_scale : 0.0;
      h.array() *= keep.array();
      if (cache) cache->keep.push_back(std::move(keep));
    }
    if (cache) cache->post.push_back(h);
  }
  Matrix out(batch, weights_.back().value.cols());
  out.noalias() = h * weights_.back().value;
  out.rowwise() += biases_.back().value.row(0);
  return out;
}

Matrix Mlp::backward(const Matrix& x, const Matrix& context, const MlpCache& cache, const Matrix& grad_out) {
  const std::size_t n_hidden = weights_.size() - 1;
  const auto in = static_cast<Eigen::Index>(spec_.input_dim);
  const auto ctx = static_cast<Eigen::Index>(spec_.context_dim);

  weights_.back().grad.noalias() += cache.post.back().transpose() * grad_out;
  biases_.back().grad += grad_out.colwise().sum();
  Matrix g = grad_out * weights_.back().value.transpose();

  for (std::size_t l = n_hidden; l-- > 0;) {
    if (!cache.keep.empty()) g.array() *= cache.keep[l].array();
    g.array() *= (cache.pre[l].array() > 0.0).cast<double>();
    biases_[l].grad += g.colwise().sum();
    if (l > 0) {
      weights_[l].grad.noalias() += cache.post[l - 1].transpose() * g;
      g = g * weights_[l].value.transpose();
    }
  }
  // g now holds d(loss)/d(first pre-activation).
  Matrix& w0grad = weights_[0].grad;
  if (in > 0) w0grad.topRows(in).noalias() += x.transpose() * g;
  if (ctx > 0) {
    if (context.rows() == g.rows())
      w0grad.bottomRows(ctx).noalias() += context.transpose() * g;
    else
      w0grad.bottomRows(ctx).noalias() += context.row(0).transpose() * g.colwise().sum();
  }
  if (in == 0) return Matrix(g.rows(), 0);
  return g * weights_[0].value.topRows(in).transpose();
}

std::vector<Param*> Mlp::params() {
  std::vector<Param*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Param*> Mlp::params() const {
  std::vector<const Param*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

Adam::Adam(const std::vector<Param*>& params, AdamOptions options) : opt_(options) {
  for (const Param* p : params) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(const std::vector<Param*>& params, double lr) {
  if (params.size() != m_.size()) throw ConfigError("optimizer state does not match parameter list");
  ++t_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * p.grad;
    v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + opt_.eps);
  }
}

}  // namespace kabi::nn
