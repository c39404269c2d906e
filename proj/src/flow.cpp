#include "kabi/flow.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "kabi/error.hpp"
#include "kabi/json_fields.hpp"

namespace kabi::flow {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

Matrix take_cols(const Matrix& m, const std::vector<Eigen::Index>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = m.col(cols[k]);
  return out;
}

void put_cols(Matrix& m, const std::vector<Eigen::Index>& cols, const Matrix& src) {
  for (std::size_t k = 0; k < cols.size(); ++k) m.col(cols[k]) = src.col(static_cast<Eigen::Index>(k));
}

void check_finite(const Matrix& m, std::size_t layer, const char* what) {
  if (!m.allFinite()) throw NumericError("non-finite " + std::string(what) + " in coupling layer " + std::to_string(layer));
}

struct LayerCache {
  Matrix input;
  Matrix cond;
  Matrix raw_scale;
  Matrix scale;
  nn::MlpCache scale_cache;
  nn::MlpCache shift_cache;
};

}  // namespace

void FlowSpec::validate() const {
  if (param_dim < 1) throw ConfigError("flow needs param_dim >= 1");
  if (context_dim < 1) throw ConfigError("flow needs context_dim >= 1");
  if (n_layers < 1) throw ConfigError("flow needs at least one coupling layer");
  if (hidden_widths.empty()) throw ConfigError("flow networks need at least one hidden layer");
  for (auto w : hidden_widths)
    if (w < 1) throw ConfigError("flow hidden widths must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("flow dropout must lie in [0, 1)");
  if (!(scale_clamp > 0.0)) throw ConfigError("scale_clamp must be > 0");
}

io::Json to_json(const FlowSpec& s) {
  return io::Json{{"param_dim", s.param_dim},     {"context_dim", s.context_dim},
                  {"n_layers", s.n_layers},       {"hidden_widths", s.hidden_widths},
                  {"dropout", s.dropout},         {"scale_clamp", s.scale_clamp},
                  {"zero_init_output", s.zero_init_output}};
}

FlowSpec flow_spec_from_json(const io::Json& j, const FlowSpec& defaults) {
  FlowSpec s = defaults;
  s.param_dim = io::field_or<std::size_t>(j, "param_dim", "flow", s.param_dim);
  s.context_dim = io::field_or<std::size_t>(j, "context_dim", "flow", s.context_dim);
  s.n_layers = io::field_or<std::size_t>(j, "n_layers", "flow", s.n_layers);
  s.hidden_widths = io::field_or<std::vector<std::size_t>>(j, "hidden_widths", "flow", s.hidden_widths);
  s.dropout = io::field_or<double>(j, "dropout", "flow", s.dropout);
  s.scale_clamp = io::field_or<double>(j, "scale_clamp", "flow", s.scale_clamp);
  s.zero_init_output = io::field_or<bool>(j, "zero_init_output", "flow", s.zero_init_output);
  s.validate();
  return s;
}

FlowModel::FlowModel(FlowSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(init_seed);
  for (std::size_t l = 0; l < spec_.n_layers; ++l) {
    CouplingLayer layer;
    const auto m = mask(l);
    for (std::size_t k = 0; k < m.size(); ++k)
      (m[k] ? layer.conditioner : layer.transformed).push_back(static_cast<Eigen::Index>(k));
    nn::MlpSpec net{layer.conditioner.size(), spec_.context_dim, spec_.hidden_widths, layer.transformed.size(),
                    spec_.dropout};
    const std::string prefix = "layer" + std::to_string(l);
    layer.scale_net = nn::Mlp(net, prefix + ".scale", rng, spec_.zero_init_output);
    layer.shift_net = nn::Mlp(net, prefix + ".shift", rng, spec_.zero_init_output);
    layers_.push_back(std::move(layer));
  }
}

std::vector<int> FlowModel::mask(std::size_t layer) const {
  std::vector<int> m(spec_.param_dim, 0);
  if (spec_.param_dim < 2) return m;
  for (std::size_t k = 0; k < spec_.param_dim; ++k) m[k] = static_cast<int>((k + layer) % 2);
  return m;
}

FlowPass FlowModel::forward(const Matrix& theta, const Matrix& context, Rng* dropout_rng) const {
  if (static_cast<std::size_t>(theta.cols()) != spec_.param_dim) throw ConfigError("theta width does not match flow");
  if (static_cast<std::size_t>(context.cols()) != spec_.context_dim)
    throw ConfigError("context width " + std::to_string(context.cols()) + " does not match flow context_dim " +
                      std::to_string(spec_.context_dim));
  const Mode net_mode = dropout_rng ? mode_ : Mode::Eval;
  FlowPass pass{theta, Eigen::VectorXd::Zero(theta.rows())};
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const Matrix cond = take_cols(pass.z, layer.conditioner);
    const Matrix raw = layer.scale_net.forward(cond, context, net_mode, dropout_rng, nullptr);
    const Matrix s = spec_.scale_clamp * (raw.array() / spec_.scale_clamp).tanh();
    const Matrix t = layer.shift_net.forward(cond, context, net_mode, dropout_rng, nullptr);
    const Matrix y = take_cols(pass.z, layer.transformed).array() * s.array().exp() + t.array();
    put_cols(pass.z, layer.transformed, y);
    pass.log_det += s.rowwise().sum();
    check_finite(pass.z, l, "output");
  }
  return pass;
}

FlowPass FlowModel::inverse(const Matrix& z, const Matrix& context) const {
  if (static_cast<std::size_t>(z.cols()) != spec_.param_dim) throw ConfigError("z width does not match flow");
  if (static_cast<std::size_t>(context.cols()) != spec_.context_dim) throw ConfigError("context width does not match flow");
  FlowPass pass{z, Eigen::VectorXd::Zero(z.rows())};
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Matrix cond = take_cols(pass.z, layer.conditioner);
    const Matrix raw = layer.scale_net.forward(cond, context, Mode::Eval, nullptr, nullptr);
    const Matrix s = spec_.scale_clamp * (raw.array() / spec_.scale_clamp).tanh();
    const Matrix t = layer.shift_net.forward(cond, context, Mode::Eval, nullptr, nullptr);
    const Matrix x = (take_cols(pass.z, layer.transformed).array() - t.array()) * (-s.array()).exp();
    put_cols(pass.z, layer.transformed, x);
    pass.log_det -= s.rowwise().sum();
    check_finite(pass.z, l, "inverse output");
  }
  return pass;
}

double standard_normal_log_density(const Eigen::RowVectorXd& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * kLogTwoPi;
}

Eigen::VectorXd FlowModel::log_prob(const Matrix& theta, const Matrix& context, Rng* dropout_rng) const {
  auto pass = forward(theta, context, dropout_rng);
  const double d = static_cast<double>(spec_.param_dim);
  return (-0.5 * pass.z.rowwise().squaredNorm().array() - 0.5 * d * kLogTwoPi).matrix() + pass.log_det;
}

Matrix FlowModel::sample(std::size_t n, const Eigen::RowVectorXd& context, Rng& rng) const {
  if (mode_ != Mode::Eval) throw ConfigError("sampling requires eval mode");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec_.param_dim));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index k = 0; k < z.cols(); ++k) z(i, k) = normal(rng);
  return inverse(z, context).z;
}

double FlowModel::loss_and_grad(const Matrix& theta, const Matrix& context, std::uint64_t dropout_seed,
                                bool accumulate) {
  if (static_cast<std::size_t>(theta.cols()) != spec_.param_dim) throw ConfigError("theta width does not match flow");
  if (static_cast<std::size_t>(context.cols()) != spec_.context_dim) throw ConfigError("context width does not match flow");
  Rng rng(dropout_seed);
  const Eigen::Index batch = theta.rows();
  std::vector<LayerCache> caches(layers_.size());
  Matrix cur = theta;
  Eigen::VectorXd log_det = Eigen::VectorXd::Zero(batch);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    auto& c = caches[l];
    c.input = cur;
    c.cond = take_cols(cur, layer.conditioner);
    c.raw_scale = layer.scale_net.forward(c.cond, context, mode_, &rng, &c.scale_cache);
    c.scale = spec_.scale_clamp * (c.raw_scale.array() / spec_.scale_clamp).tanh();
    const Matrix t = layer.shift_net.forward(c.cond, context, mode_, &rng, &c.shift_cache);
    const Matrix y = take_cols(cur, layer.transformed).array() * c.scale.array().exp() + t.array();
    put_cols(cur, layer.transformed, y);
    log_det += c.scale.rowwise().sum();
    check_finite(cur, l, "output");
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  const double d = static_cast<double>(spec_.param_dim);
  const double loss =
      inv_b * (0.5 * cur.rowwise().squaredNorm().sum() - log_det.sum()) + 0.5 * d * kLogTwoPi;
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
  if (!accumulate) return loss;

  Matrix grad = cur * inv_b;  // d(loss)/dz
  const double grad_log_det = -inv_b;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    auto& layer = layers_[l];
    auto& c = caches[l];
    const Matrix g_out = take_cols(grad, layer.transformed);
    const Matrix x_trans = take_cols(c.input, layer.transformed);
    const Eigen::ArrayXXd exp_s = c.scale.array().exp();
    const Matrix g_scale = (g_out.array() * x_trans.array() * exp_s + grad_log_det).matrix();
    const Matrix g_raw = (g_scale.array() * (1.0 - (c.scale.array() / spec_.scale_clamp).square())).matrix();
    const Matrix g_x_trans = (g_out.array() * exp_s).matrix();

    Matrix g_cond = take_cols(grad, layer.conditioner);
    g_cond += layer.scale_net.backward(c.cond, context, c.scale_cache, g_raw);
    g_cond += layer.shift_net.backward(c.cond, context, c.shift_cache, g_out);

    Matrix g_in(batch, static_cast<Eigen::Index>(spec_.param_dim));
    put_cols(g_in, layer.transformed, g_x_trans);
    put_cols(g_in, layer.conditioner, g_cond);
    grad = std::move(g_in);
  }
  for (const auto* p : params())
    if (!p->grad.allFinite()) throw NumericError("non-finite gradient in " + p->name);
  return loss;
}

void FlowModel::zero_grad() {
  for (auto* p : params()) p->grad.setZero();
}

std::vector<nn::Param*> FlowModel::params() {
  std::vector<nn::Param*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer.scale_net.params()) out.push_back(p);
    for (auto* p : layer.shift_net.params()) out.push_back(p);
  }
  return out;
}

std::vector<const nn::Param*> FlowModel::params() const {
  std::vector<const nn::Param*> out;
  for (const auto& layer : layers_) {
    for (const auto* p : layer.scale_net.params()) out.push_back(p);
    for (const auto* p : layer.shift_net.params()) out.push_back(p);
  }
  return out;
}

std::size_t FlowModel::n_parameters() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

}  // namespace kabi::flow
