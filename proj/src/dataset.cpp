#include "kabi/dataset.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <random>

#include "kabi/error.hpp"
#include "kabi/json_fields.hpp"
#include "kabi/parallel.hpp"
#include "kabi/rng.hpp"

namespace kabi::data {

std::string to_string(Scenario s) { return s == Scenario::Simple ? "simple" : "complex"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "simple") return Scenario::Simple;
  if (s == "complex") return Scenario::Complex;
  throw ConfigError("unknown scenario '" + s + "' (expected 'simple' or 'complex')");
}

std::string to_string(ParamMap m) { return m == ParamMap::Affine ? "affine" : "atanh"; }

ParamMap param_map_from_string(const std::string& s) {
  if (s == "affine") return ParamMap::Affine;
  if (s == "atanh") return ParamMap::Atanh;
  throw ConfigError("unknown param_map '" + s + "' (expected 'affine' or 'atanh')");
}

PriorSpec::PriorSpec(std::vector<double> lo, std::vector<double> hi) : lower(std::move(lo)), upper(std::move(hi)) {
  validate();
}

void PriorSpec::validate() const {
  if (lower.empty()) throw ConfigError("prior needs at least one parameter");
  if (lower.size() != upper.size()) throw ConfigError("prior bounds have different lengths");
  for (std::size_t k = 0; k < lower.size(); ++k)
    if (!(lower[k] < upper[k]) || !std::isfinite(lower[k]) || !std::isfinite(upper[k]))
      throw ConfigError("prior bounds for parameter " + std::to_string(k + 1) + " must satisfy lower < upper");
}

bool PriorSpec::contains(std::span<const double> theta) const {
  if (theta.size() != dim()) return false;
  for (std::size_t k = 0; k < dim(); ++k)
    if (!(theta[k] >= lower[k] && theta[k] <= upper[k])) return false;
  return true;
}

Eigen::MatrixXd sample_prior(const PriorSpec& prior, std::size_t n, std::uint64_t seed) {
  prior.validate();
  if (n == 0) throw ConfigError("sample_prior needs n >= 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(prior.dim()));
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (std::size_t k = 0; k < prior.dim(); ++k)
      out(i, static_cast<Eigen::Index>(k)) = prior.lower[k] + prior.range(k) * unit(rng);
  return out;
}

void ExperimentConfig::validate() const {
  if (n_train < 1 || n_val < 1 || n_test < 1 || posterior_draws < 1 || epochs < 1 || batches_per_epoch < 1)
    throw ConfigError("experiment counts must all be >= 1");
  if (batches_per_epoch > n_train) throw ConfigError("batches_per_epoch exceeds n_train");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be > 0");
  if (n_oscillators < 1) throw ConfigError("n_oscillators must be >= 1");
  if (!(omega_std > 0.0)) throw ConfigError("omega_std must be > 0");
  sim.validate();
  prior.validate();
  if (context_first_row >= sim.n_rows()) throw ConfigError("context_first_row leaves no observation rows");
  if (scenario == Scenario::Complex) {
    if (n_oscillators != 3) throw ConfigError("complex scenario uses the three-node network (n_oscillators = 3)");
    if (prior.dim() != 6) throw ConfigError("complex scenario estimates 6 couplings");
    if (!fixed_omega.empty() && fixed_omega.size() != 3) throw ConfigError("fixed_omega must have 3 entries");
  } else if (prior.dim() != 1) {
    throw ConfigError("simple scenario estimates a single coupling");
  }
}

ExperimentConfig preset(Scenario scenario) {
  ExperimentConfig c;
  c.scenario = scenario;
  if (scenario == Scenario::Complex) {
    c.n_train = 1u << 17;
    c.n_val = 1u << 7;
    c.epochs = 150;
    c.batches_per_epoch = 128;
    c.initial_lr = 5e-3;
    c.n_oscillators = 3;
    c.prior = PriorSpec(std::vector<double>(6, 0.0), std::vector<double>(6, 1.0));
  }
  return c;
}

ExperimentConfig resolve(ExperimentConfig config) {
  if (config.scenario == Scenario::Complex && config.fixed_omega.empty()) {
    Rng rng(stream_seed(config.seed, 0xfe11));
    std::normal_distribution<double> normal(config.omega_mean, config.omega_std);
    config.fixed_omega.resize(config.n_oscillators);
    for (auto& w : config.fixed_omega) w = normal(rng);
  }
  config.validate();
  return config;
}

io::Json to_json(const ExperimentConfig& c) {
  io::Json sim{{"n_oscillators", c.n_oscillators},
               {"dt", c.sim.dt},
               {"n_steps", c.sim.n_steps},
               {"subsample", c.sim.subsample},
               {"obs_noise_std", c.sim.obs_noise_std},
               {"init_phase_std", c.sim.init_phase_std},
               {"omega_mean", c.omega_mean},
               {"omega_std", c.omega_std},
               {"fixed_omega", c.fixed_omega},
               {"context_first_row", c.context_first_row}};
  return io::Json{{"scenario", to_string(c.scenario)},
                  {"seed", c.seed},
                  {"n_train", c.n_train},
                  {"n_val", c.n_val},
                  {"n_test", c.n_test},
                  {"posterior_draws", c.posterior_draws},
                  {"epochs", c.epochs},
                  {"batches_per_epoch", c.batches_per_epoch},
                  {"initial_lr", c.initial_lr},
                  {"dropout", c.dropout},
                  {"param_map", to_string(c.param_map)},
                  {"simulation", sim},
                  {"prior", {{"lower", c.prior.lower}, {"upper", c.prior.upper}}}};
}

ExperimentConfig experiment_from_json(const io::Json& j) {
  using io::field_or;
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  auto c = preset(scenario_from_string(io::required_field<std::string>(j, "scenario", "")));
  c.seed = field_or<std::uint64_t>(j, "seed", "", c.seed);
  c.n_train = field_or<std::size_t>(j, "n_train", "", c.n_train);
  c.n_val = field_or<std::size_t>(j, "n_val", "", c.n_val);
  c.n_test = field_or<std::size_t>(j, "n_test", "", c.n_test);
  c.posterior_draws = field_or<std::size_t>(j, "posterior_draws", "", c.posterior_draws);
  c.epochs = field_or<std::size_t>(j, "epochs", "", c.epochs);
  c.batches_per_epoch = field_or<std::size_t>(j, "batches_per_epoch", "", c.batches_per_epoch);
  c.initial_lr = field_or<double>(j, "initial_lr", "", c.initial_lr);
  c.dropout = field_or<double>(j, "dropout", "", c.dropout);
  c.param_map = param_map_from_string(field_or<std::string>(j, "param_map", "", to_string(c.param_map)));

  const auto& sim = io::section(j, "simulation");
  c.n_oscillators = field_or<std::size_t>(sim, "n_oscillators", "simulation", c.n_oscillators);
  c.sim.dt = field_or<double>(sim, "dt", "simulation", c.sim.dt);
  c.sim.n_steps = field_or<std::size_t>(sim, "n_steps", "simulation", c.sim.n_steps);
  c.sim.subsample = field_or<std::size_t>(sim, "subsample", "simulation", c.sim.subsample);
  c.sim.obs_noise_std = field_or<double>(sim, "obs_noise_std", "simulation", c.sim.obs_noise_std);
  c.sim.init_phase_std = field_or<double>(sim, "init_phase_std", "simulation", c.sim.init_phase_std);
  c.omega_mean = field_or<double>(sim, "omega_mean", "simulation", c.omega_mean);
  c.omega_std = field_or<double>(sim, "omega_std", "simulation", c.omega_std);
  c.fixed_omega = field_or<std::vector<double>>(sim, "fixed_omega", "simulation", c.fixed_omega);
  c.context_first_row = field_or<std::size_t>(sim, "context_first_row", "simulation", c.context_first_row);

  const auto& prior = io::section(j, "prior");
  auto lower = field_or<std::vector<double>>(prior, "lower", "prior", c.prior.lower);
  auto upper = field_or<std::vector<double>>(prior, "upper", "prior", c.prior.upper);
  c.prior = PriorSpec(std::move(lower), std::move(upper));
  c.validate();
  return c;
}

osc::NetworkSpec network_for(const ExperimentConfig& config, std::span<const double> theta) {
  if (config.scenario == Scenario::Complex) return osc::three_node_network(theta);
  return osc::NetworkSpec{config.n_oscillators, osc::MeanField{theta[0]}};
}

osc::FrequencySpec frequencies_for(const ExperimentConfig& config) {
  if (config.scenario == Scenario::Complex) {
    if (config.fixed_omega.empty()) throw ConfigError("complex scenario config is not resolved (fixed_omega empty)");
    return osc::FrequencySpec{osc::FixedFrequencies{config.fixed_omega}};
  }
  return osc::FrequencySpec{osc::GaussianFrequencies{config.omega_mean, config.omega_std}};
}

summary::FeatureVector simulate_features(const ExperimentConfig& config, std::span<const double> theta,
                                         std::uint64_t seed) {
  auto sim = config.sim;
  sim.seed = seed;
  auto traj = osc::integrate(network_for(config, theta), frequencies_for(config), sim,
                             std::vector<double>(theta.begin(), theta.end()));
  return summary::summarize_rows(traj.observed_phases, config.context_first_row);
}

std::size_t Standardizer::context_dim() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& features, const PriorSpec& prior, ParamMap param_map) {
  if (features.rows() < 2) throw ConfigError("standardizer needs at least two rows");
  Standardizer s;
  s.prior = prior;
  s.param_map = param_map;
  const auto n = static_cast<double>(features.rows());
  s.mean = features.colwise().mean().transpose();
  s.stddev.resize(features.cols());
  s.keep.resize(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double var = (features.col(j).array() - s.mean(j)).square().sum() / n;
    s.stddev(j) = std::sqrt(var);
    s.keep[static_cast<std::size_t>(j)] = s.stddev(j) > 1e-12 * std::max(1.0, std::abs(s.mean(j)));
    if (!s.keep[static_cast<std::size_t>(j)]) s.stddev(j) = 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::transform_features(const Eigen::MatrixXd& features) const {
  if (static_cast<std::size_t>(features.cols()) != feature_dim())
    throw ConfigError("feature width " + std::to_string(features.cols()) + " does not match standardizer width " +
                      std::to_string(feature_dim()));
  Eigen::MatrixXd out(features.rows(), static_cast<Eigen::Index>(context_dim()));
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    if (!keep[static_cast<std::size_t>(j)]) continue;
    out.col(c++) = (features.col(j).array() - mean(j)) / stddev(j);
  }
  return out;
}

Eigen::MatrixXd Standardizer::inverse_features(const Eigen::MatrixXd& z) const {
  if (static_cast<std::size_t>(z.cols()) != context_dim()) throw ConfigError("standardized width mismatch");
  Eigen::MatrixXd out(z.rows(), static_cast<Eigen::Index>(feature_dim()));
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    if (keep[static_cast<std::size_t>(j)])
      out.col(j) = z.col(c++).array() * stddev(j) + mean(j);
    else
      out.col(j).setConstant(mean(j));
  }
  return out;
}

Eigen::VectorXd Standardizer::transform_context(std::span<const double> features) const {
  Eigen::Map<const Eigen::RowVectorXd> row(features.data(), static_cast<Eigen::Index>(features.size()));
  return transform_features(row).transpose();
}

Eigen::MatrixXd Standardizer::params_to_unit(const Eigen::MatrixXd& params) const {
  Eigen::MatrixXd out(params.rows(), params.cols());
  for (Eigen::Index k = 0; k < params.cols(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    out.col(k) = (2.0 * (params.col(k).array() - prior.lower[kk]) / prior.range(kk)) - 1.0;
  }
  return out;
}

Eigen::MatrixXd Standardizer::params_from_unit(const Eigen::MatrixXd& unit) const {
  Eigen::MatrixXd out(unit.rows(), unit.cols());
  for (Eigen::Index k = 0; k < unit.cols(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    out.col(k) = (unit.col(k).array() + 1.0) * 0.5 * prior.range(kk) + prior.lower[kk];
  }
  return out;
}

Eigen::MatrixXd Standardizer::params_to_flow(const Eigen::MatrixXd& params) const {
  Eigen::MatrixXd u = params_to_unit(params);
  if (param_map == ParamMap::Atanh) u = (u.array() * kEdgeShrink).atanh().matrix();
  return u;
}

Eigen::MatrixXd Standardizer::params_from_flow(const Eigen::MatrixXd& y) const {
  if (param_map == ParamMap::Affine) return params_from_unit(y);
  return params_from_unit((y.array().tanh() / kEdgeShrink).matrix());
}

io::Json Standardizer::to_json() const {
  return io::Json{{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
                  {"std", std::vector<double>(stddev.data(), stddev.data() + stddev.size())},
                  {"mask", keep},
                  {"param_map", to_string(param_map)},
                  {"prior", {{"lower", prior.lower}, {"upper", prior.upper}}}};
}

Standardizer Standardizer::from_json(const io::Json& j) {
  Standardizer s;
  auto m = io::required_field<std::vector<double>>(j, "mean", "standardizer");
  auto sd = io::required_field<std::vector<double>>(j, "std", "standardizer");
  s.keep = io::required_field<std::vector<bool>>(j, "mask", "standardizer");
  s.param_map = param_map_from_string(io::required_field<std::string>(j, "param_map", "standardizer"));
  if (m.size() != sd.size() || m.size() != s.keep.size()) throw ConfigError("standardizer arrays differ in length");
  s.mean = Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.stddev = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  const auto& p = io::section(j, "prior");
  s.prior = PriorSpec(io::required_field<std::vector<double>>(p, "lower", "standardizer.prior"),
                      io::required_field<std::vector<double>>(p, "upper", "standardizer.prior"));
  return s;
}

std::string Standardizer::hash() const { return io::hex_digest(to_json().dump()); }

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> simulate_split(const ExperimentConfig& config, Split split,
                                                            std::size_t n) {
  const auto tag = static_cast<std::uint64_t>(split);
  Eigen::MatrixXd params = sample_prior(config.prior, n, stream_seed(config.seed, 100 + tag));
  const std::uint64_t base = stream_seed(config.seed, tag);
  const std::size_t width = summary::kStatsPerStep * (config.sim.n_rows() - config.context_first_row);
  Eigen::MatrixXd features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));

  parallel_for(n, [&](std::size_t row) {
    const auto r = static_cast<Eigen::Index>(row);
    std::vector<double> theta(params.cols());
    for (Eigen::Index k = 0; k < params.cols(); ++k) theta[static_cast<std::size_t>(k)] = params(r, k);
    std::uint64_t seed = base + row;
    for (int attempt = 0;; ++attempt) {
      try {
        auto fv = simulate_features(config, theta, seed);
        features.row(r) = Eigen::Map<const Eigen::RowVectorXd>(fv.values.data(), static_cast<Eigen::Index>(width));
        break;
      } catch (const IntegrationDiverged& e) {
        if (attempt + 1 >= 10)
          throw NumericError("row " + std::to_string(row) + ": 10 consecutive diverged simulations; last: " + e.what());
        spdlog::warn("row {}: {}; resimulating", row, e.what());
        seed = mix_seed(seed);
      }
    }
  });
  return {std::move(params), std::move(features)};
}

std::pair<Dataset, Dataset> generate(const ExperimentConfig& config_in) {
  const auto config = resolve(config_in);
  auto [train_params, train_features] = simulate_split(config, Split::Train, config.n_train);
  auto [val_params, val_features] = simulate_split(config, Split::Val, config.n_val);
  auto standardizer = Standardizer::fit(train_features, config.prior, config.param_map);
  Dataset train{std::move(train_params), std::move(train_features), standardizer, config.scenario};
  Dataset val{std::move(val_params), std::move(val_features), standardizer, config.scenario};
  return {std::move(train), std::move(val)};
}

Dataset generate_test(const ExperimentConfig& config_in, const Standardizer& standardizer) {
  const auto config = resolve(config_in);
  auto [params, features] = simulate_split(config, Split::Test, config.n_test);
  return Dataset{std::move(params), std::move(features), standardizer, config.scenario};
}

namespace {

std::vector<std::string> feature_header(std::size_t width) {
  std::vector<std::string> header;
  header.reserve(width);
  for (std::size_t c = 0; c < width; ++c)
    header.push_back(summary::kStatNames[c % summary::kStatsPerStep] + "_" +
                     std::to_string(c / summary::kStatsPerStep));
  return header;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const Dataset& ds, const ExperimentConfig& config) {
  std::filesystem::create_directories(dir);
  io::write_csv(dir / "params.csv", io::numbered("kappa", static_cast<std::size_t>(ds.params.cols())), ds.params);
  io::write_csv(dir / "features.csv", feature_header(static_cast<std::size_t>(ds.features.cols())), ds.features);
  io::write_json(dir / "standardizer.json", ds.standardizer.to_json());
  io::write_json(dir / "config.json", to_json(config));
}

Dataset load_dataset(const std::filesystem::path& dir, ExperimentConfig* config) {
  for (const char* name : {"params.csv", "features.csv", "standardizer.json", "config.json"})
    if (!std::filesystem::exists(dir / name))
      throw DependencyError("dataset directory " + dir.string() + " is missing " + name);
  auto cfg = experiment_from_json(io::read_json(dir / "config.json"));
  Dataset ds;
  ds.params = io::read_csv(dir / "params.csv").values;
  ds.features = io::read_csv(dir / "features.csv").values;
  ds.standardizer = Standardizer::from_json(io::read_json(dir / "standardizer.json"));
  ds.scenario = cfg.scenario;
  if (ds.params.rows() != ds.features.rows()) throw ConfigError(dir.string() + ": params/features row counts differ");
  if (config) *config = cfg;
  return ds;
}

}  // namespace kabi::data
