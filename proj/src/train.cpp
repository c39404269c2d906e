#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "kabi/error.hpp"
#include "kabi/flow.hpp"

namespace kabi::flow {

double cosine_lr(double initial_lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return initial_lr;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return initial_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

double evaluate_loss(FlowModel& model, const Matrix& theta, const Matrix& ctx) {
  const Mode previous = model.mode();
  model.set_mode(Mode::Eval);
  const double loss = model.loss_and_grad(theta, ctx, 0, false);
  model.set_mode(previous);
  return loss;
}

}  // namespace

TrainResult train(FlowModel model, const Matrix& theta_train, const Matrix& ctx_train, const Matrix& theta_val,
                  const Matrix& ctx_val, const TrainOptions& options) {
  const auto n = static_cast<std::size_t>(theta_train.rows());
  if (ctx_train.rows() != theta_train.rows() || ctx_val.rows() != theta_val.rows())
    throw ConfigError("parameter and context row counts differ");
  if (options.epochs < 1 || options.batches_per_epoch < 1 || options.batches_per_epoch > n)
    throw ConfigError("invalid epoch/batch settings");
  const std::size_t batch_size = n / options.batches_per_epoch;
  const std::size_t total_steps = options.epochs * options.batches_per_epoch;

  TrainResult result;
  model.set_mode(Mode::Train);
  auto params = model.params();
  nn::Adam adam(params, options.adam);

  FlowModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  double lr_scale = 1.0;
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < options.epochs;) {
    const FlowModel epoch_start_model = model;
    const nn::Adam epoch_start_adam = adam;
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(stream_seed(options.seed, 0x5eed0000ULL + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    const std::size_t first_step = epoch * options.batches_per_epoch;
    const double epoch_lr = lr_scale * cosine_lr(options.initial_lr, first_step, total_steps);
    double loss_sum = 0.0;
    try {
      for (std::size_t b = 0; b < options.batches_per_epoch; ++b) {
        const std::size_t step = first_step + b;
        std::span<const std::size_t> idx(order.data() + b * batch_size, batch_size);
        const Matrix theta = gather_rows(theta_train, idx);
        const Matrix ctx = gather_rows(ctx_train, idx);
        model.zero_grad();
        loss_sum += model.loss_and_grad(theta, ctx, stream_seed(options.seed, 0xd00d0000ULL + step), true);
        adam.step(params, lr_scale * cosine_lr(options.initial_lr, step, total_steps));
      }
    } catch (const NumericError& e) {
      if (result.nan_recoveries >= options.max_nan_recoveries)
        throw NumericError("training aborted after " + std::to_string(result.nan_recoveries) +
                           " learning-rate halvings: " + e.what());
      ++result.nan_recoveries;
      lr_scale *= 0.5;
      spdlog::warn("epoch {}: {}; halving learning rate and restoring the epoch checkpoint", epoch + 1, e.what());
      model = epoch_start_model;
      adam = epoch_start_adam;
      params = model.params();
      continue;
    }

    EpochLog entry;
    entry.epoch = epoch + 1;
    entry.train_loss = loss_sum / static_cast<double>(options.batches_per_epoch);
    entry.val_loss = evaluate_loss(model, theta_val, ctx_val);
    entry.lr = epoch_lr;
    result.log.push_back(entry);
    spdlog::debug("epoch {:3d}  train {:.5f}  val {:.5f}  lr {:.2e}", entry.epoch, entry.train_loss, entry.val_loss,
                  entry.lr);
    if (entry.val_loss < best_val) {
      best_val = entry.val_loss;
      best = model;
      result.best_epoch = entry.epoch;
    }
    ++epoch;
  }
  best.set_mode(Mode::Eval);
  result.model = std::move(best);
  return result;
}

FlowSpec default_flow_spec(const data::ExperimentConfig& config, std::size_t context_dim) {
  FlowSpec spec;
  spec.param_dim = config.param_dim();
  spec.context_dim = context_dim;
  spec.dropout = config.dropout;
  return spec;
}

TrainResult train(const data::Dataset& train_set, const data::Dataset& val_set, const data::ExperimentConfig& config,
                  FlowSpec arch) {
  const auto& st = train_set.standardizer;
  arch.param_dim = config.param_dim();
  arch.context_dim = st.context_dim();
  FlowModel model(arch, stream_seed(config.seed, 0x1417));
  TrainOptions opts;
  opts.epochs = config.epochs;
  opts.batches_per_epoch = config.batches_per_epoch;
  opts.initial_lr = config.initial_lr;
  opts.seed = config.seed;
  return train(std::move(model), st.params_to_flow(train_set.params), st.transform_features(train_set.features),
               st.params_to_flow(val_set.params), st.transform_features(val_set.features), opts);
}

PosteriorDraws sample_posterior(const FlowModel& model, const data::Standardizer& standardizer,
                                std::span<const double> raw_features, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("posterior draw count must be >= 1");
  const Eigen::RowVectorXd ctx = standardizer.transform_context(raw_features).transpose();
  Rng rng(seed);
  PosteriorDraws out;
  out.draws.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.spec().param_dim));
  std::size_t accepted = 0;
  const std::size_t cap = 10 * n;
  while (accepted < n) {
    if (out.attempts >= cap)
      throw NumericError("posterior rejection cap reached: " + std::to_string(accepted) + " of " +
                         std::to_string(out.attempts) + " draws inside the prior box (acceptance " +
                         std::to_string(static_cast<double>(accepted) / static_cast<double>(out.attempts)) + ")");
    const std::size_t batch = std::min(n - accepted, cap - out.attempts);
    const Matrix natural = standardizer.params_from_flow(model.sample(batch, ctx, rng));
    out.attempts += batch;
    for (Eigen::Index i = 0; i < natural.rows() && accepted < n; ++i) {
      const Eigen::RowVectorXd row = natural.row(i);
      if (standardizer.prior.contains(std::span<const double>(row.data(), static_cast<std::size_t>(row.size()))))
        out.draws.row(static_cast<Eigen::Index>(accepted++)) = row;
    }
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'K', 'A', 'B', 'I', 'F', 'L', 'O', 'W'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos, std::size_t width = 8) {
  if (pos + width > in.size()) throw DependencyError("checkpoint file is truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += width;
  return v;
}

io::Json log_json(const std::vector<EpochLog>& log) {
  io::Json arr = io::Json::array();
  for (const auto& e : log)
    arr.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.lr}});
  return arr;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model, const data::Standardizer& standardizer,
                     const std::vector<EpochLog>& log) {
  io::Json tensors = io::Json::array();
  for (const auto* p : model.params()) tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  const std::size_t tail = std::min<std::size_t>(log.size(), 10);
  io::Json header{{"format", "kabi-flow"},
                  {"version", kCheckpointVersion},
                  {"flow", to_json(model.spec())},
                  {"tensors", tensors},
                  {"standardizer", standardizer.to_json()},
                  {"standardizer_hash", standardizer.hash()},
                  {"log_tail", log_json(std::vector<EpochLog>(log.end() - static_cast<std::ptrdiff_t>(tail), log.end()))}};
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, kCheckpointVersion);  // stored as u32 + 4 reserved bytes
  put_u64(out, header_text.size());
  out += header_text;
  for (const auto* p : model.params())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(p->value.data()[i]));
  io::write_text(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string in = io::read_text(path);
  if (in.size() < sizeof(kMagic) || in.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0)
    throw DependencyError(path.string() + " is not a flow checkpoint");
  std::size_t pos = sizeof(kMagic);
  const auto version = static_cast<std::uint32_t>(get_u64(in, pos));
  if (version != kCheckpointVersion)
    throw DependencyError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                          "; this build reads version " + std::to_string(kCheckpointVersion));
  const auto header_len = get_u64(in, pos);
  if (pos + header_len > in.size()) throw DependencyError("checkpoint header is truncated");
  const auto header = io::Json::parse(in.substr(pos, header_len));
  pos += header_len;

  Checkpoint ck;
  ck.version = version;
  FlowSpec spec = flow_spec_from_json(header.at("flow"), FlowSpec{});
  ck.model = FlowModel(spec, 0);
  ck.standardizer = data::Standardizer::from_json(header.at("standardizer"));
  if (ck.standardizer.hash() != header.at("standardizer_hash").get<std::string>())
    throw DependencyError("checkpoint standardizer hash mismatch");
  const auto& tensors = header.at("tensors");
  auto params = ck.model.params();
  if (tensors.size() != params.size()) throw DependencyError("checkpoint tensor count does not match architecture");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    if (tensors[k].at("name").get<std::string>() != p.name || tensors[k].at("rows").get<Eigen::Index>() != p.value.rows() ||
        tensors[k].at("cols").get<Eigen::Index>() != p.value.cols())
      throw DependencyError("checkpoint tensor " + std::to_string(k) + " does not match architecture");
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = std::bit_cast<double>(get_u64(in, pos));
  }
  if (pos != in.size()) throw DependencyError("checkpoint has trailing bytes");
  for (const auto& e : header.at("log_tail"))
    ck.log_tail.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                           e.at("val_loss").get<double>(), e.at("lr").get<double>()});
  ck.model.set_mode(Mode::Eval);
  return ck;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  Eigen::MatrixXd table(static_cast<Eigen::Index>(log.size()), 4);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    table(r, 0) = static_cast<double>(log[i].epoch);
    table(r, 1) = log[i].train_loss;
    table(r, 2) = log[i].val_loss;
    table(r, 3) = log[i].lr;
  }
  io::write_csv(path, {"epoch", "train_loss", "val_loss", "lr"}, table);
}

}  // namespace kabi::flow
