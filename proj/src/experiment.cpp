// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "penabc/abc.hpp"
#include "penabc/dataset_io.hpp"

namespace penabc::experiment {

namespace fs = std::filesystem;
using models::ModelId;
using summary::Method;
using summary::MethodSpec;

namespace {

// Stream identifiers for derive_seed().
constexpr std::uint64_t kStreamTable = 1;
constexpr std::uint64_t kStreamTrain = 2;
constexpr std::uint64_t kStreamEval = 3;
constexpr std::uint64_t kStreamObserved = 4;
constexpr std::uint64_t kStreamInit = 5;
constexpr std::uint64_t kStreamShuffle = 6;
constexpr std::uint64_t kStreamReference = 7;
constexpr std::uint64_t kStreamWasserstein = 8;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string_view item = trim(s.substr(pos, comma == std::string_view::npos ? s.npos : comma - pos));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

double to_real(std::string_view key, std::string_view v) {
  try {
    const double x = io::parse_double(trim(v));
    if (!std::isfinite(x)) throw std::invalid_argument("not finite");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
}

/// Accepts plain integers and exact scientific forms such as 1e4.
std::size_t to_count(std::string_view key, std::string_view v) {
  const double x = to_real(key, v);
  if (x < 0.0 || x != std::floor(x) || x > 9.0e15) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return static_cast<std::size_t>(x);
}

std::uint64_t to_seed(std::string_view key, std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  if (v.empty()) throw ConfigError("'" + std::string(key) + "' is empty");
  for (char c : v) {
    if (c < '0' || c > '9') throw ConfigError("'" + std::string(key) + "' expects an unsigned integer");
    out = out * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return out;
}

std::vector<MethodSpec> default_methods(ModelId model) {
  std::vector<MethodSpec> m = {{Method::Handpicked, 0}, {Method::MlpSmall, 0}, {Method::MlpLarge, 0}};
  if (models::is_static(model)) {
    m.push_back({Method::MlpPre, 0});
    m.push_back({Method::Pen, 0});
  } else {
    m.push_back({Method::Pen, 0});
    m.push_back({Method::Pen, summary::default_pen_order(model)});
  }
  return m;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string sign_name(models::RobustScaleSign s) {
  return s == models::RobustScaleSign::AsPrinted ? "as-printed" : "conventional";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// ------------------------------------------------------------ file layout

struct Layout {
  fs::path root;

  fs::path data() const { return root / "data"; }
  fs::path table() const { return data() / "table"; }
  fs::path train_pool() const { return data() / "train"; }
  fs::path eval_set() const { return data() / "eval"; }
  fs::path observed() const { return data() / "observed.csv"; }
  fs::path observed_raw() const { return data() / "observed_raw.csv"; }
  fs::path net(const std::string& cell) const { return root / "nets" / (cell + ".bin"); }
  fs::path train_log(const std::string& cell) const { return root / "logs" / (cell + ".csv"); }
  fs::path posterior_dir(const std::string& cell) const { return root / "posteriors" / cell; }
  fs::path posterior(const std::string& cell, std::size_t rep) const {
    return posterior_dir(cell) / ("rep" + std::to_string(rep) + ".csv");
  }
  fs::path reference(std::size_t rep) const { return root / "reference" / ("rep" + std::to_string(rep) + ".csv"); }
  fs::path stamp(const fs::path& artifact) const { return fs::path(artifact.string() + ".stamp"); }
};

bool up_to_date(const fs::path& stamp, const std::string& key) {
  std::error_code ec;
  if (!fs::exists(stamp, ec)) return false;
  try {
    return io::read_file(stamp) == hex(fnv1a(key)) + "\n";
  } catch (const std::exception&) {
    return false;
  }
}

void mark_done(const fs::path& stamp, const std::string& key) { io::write_file(stamp, hex(fnv1a(key)) + "\n"); }

struct Cell {
  MethodSpec method;
  std::size_t n_train = 0;
  std::string name;
};

std::vector<Cell> cells(const ExperimentConfig& cfg) {
  std::vector<Cell> out;
  for (const MethodSpec& m : cfg.methods) {
    if (!m.uses_network()) {
      out.push_back({m, 0, m.label()});
      continue;
    }
    for (std::size_t n : cfg.n_train) out.push_back({m, n, m.label() + "_n" + std::to_string(n)});
  }
  return out;
}

std::size_t max_train(const ExperimentConfig& cfg) {
  std::size_t n = 0;
  for (std::size_t v : cfg.n_train) n = std::max(n, v);
  return n;
}

bool any_network(const ExperimentConfig& cfg) {
  return std::any_of(cfg.methods.begin(), cfg.methods.end(), [](const MethodSpec& m) { return m.uses_network(); });
}

std::string simulate_key(const ExperimentConfig& cfg) {
  std::ostringstream k;
  k << "simulate|" << models::model_name(cfg.model) << '|' << cfg.series_len << '|' << max_train(cfg) << '|'
    << cfg.n_eval << '|' << cfg.n_tilde << '|' << cfg.repetitions << '|' << cfg.seed;
  return k.str();
}

std::string net_key(const ExperimentConfig& cfg, const Cell& c) {
  std::ostringstream k;
  k << simulate_key(cfg) << "|net|" << c.name << '|' << cfg.epochs << '|' << cfg.batch_size << '|'
    << io::format_double(cfg.learning_rate) << '|' << sign_name(cfg.scale_sign);
  return k.str();
}

std::string abc_key(const ExperimentConfig& cfg, const Cell& c) {
  const std::string base = c.method.uses_network() ? net_key(cfg, c) : simulate_key(cfg) + "|" + c.name;
  return base + "|abc|" + io::format_double(cfg.percentile_x);
}

std::string reference_key(const ExperimentConfig& cfg) {
  std::ostringstream k;
  k << simulate_key(cfg) << "|reference|" << cfg.grid_resolution << '|' << cfg.reference_draws << '|'
    << cfg.mcmc.tuning_batches << '|' << cfg.mcmc.batch_steps << '|' << cfg.mcmc.burn_in << '|' << cfg.mcmc.thin;
  return k.str();
}

nn::RegressionData regression_data(const ExperimentConfig& cfg, Method method, const abc::ReferenceTable& t,
                                   std::size_t n) {
  nn::RegressionData d;
  const RowMatrix series = t.series.topRows(static_cast<Eigen::Index>(n));
  d.inputs = summary::network_inputs(cfg.model, method, series, cfg.scale_sign);
  d.targets = t.thetas.topRows(static_cast<Eigen::Index>(n));
  return d;
}

bool has_reference(ModelId model) { return model != ModelId::AlphaStable; }

std::vector<double> row_vector(const RowMatrix& m, Eigen::Index r) {
  return {m.row(r).data(), m.row(r).data() + m.cols()};
}

}  // namespace

// ------------------------------------------------------------- config

std::string_view scale_name(Scale s) noexcept {
  switch (s) {
    case Scale::Smoke: return "smoke";
    case Scale::Desk: return "desk";
    case Scale::Paper: return "paper";
  }
  return "?";
}

Scale parse_scale(std::string_view name) {
  if (name == "smoke") return Scale::Smoke;
  if (name == "desk") return Scale::Desk;
  if (name == "paper") return Scale::Paper;
  throw ConfigError("unknown scale '" + std::string(name) + "' (expected smoke, desk or paper)");
}

ExperimentConfig defaults(ModelId model, Scale scale) {
  ExperimentConfig c;
  c.model = model;
  c.methods = default_methods(model);
  c.series_len = models::default_series_length(model);
  const bool iid = models::is_static(model);
  switch (scale) {
    case Scale::Paper:
      c.n_train = iid ? std::vector<std::size_t>{1000, 10000, 100000, 500000}
                      : std::vector<std::size_t>{1000, 10000, 100000, 1000000};
      c.n_eval = model == ModelId::Ar2 ? 10000 : model == ModelId::Ma2 ? 500000 : 5000;
      c.n_tilde = iid ? 100000 : 500000;
      c.percentile_x = iid ? 0.1 : 0.02;
      c.repetitions = model == ModelId::AlphaStable ? 25 : 100;
      c.epochs = 100;
      c.grid_resolution = 400;
      c.reference_draws = 1000;
      break;
    case Scale::Desk:
      c.n_train = {1000, 10000};
      c.n_eval = iid ? 1000 : 2000;
      c.n_tilde = 100000;
      c.percentile_x = 0.1;
      c.repetitions = 10;
      c.epochs = iid ? 30 : 100;
      c.grid_resolution = 400;
      c.reference_draws = 1000;
      break;
    case Scale::Smoke:
      c.n_train = {300};
      c.n_eval = 100;
      c.n_tilde = 2000;
      c.percentile_x = 5.0;
      c.repetitions = 2;
      c.epochs = 3;
      c.grid_resolution = 60;
      c.reference_draws = 100;
      c.mcmc.tuning_batches = 5;
      c.mcmc.batch_steps = 50;
      c.mcmc.burn_in = 100;
      c.mcmc.thin = 2;
      break;
  }
  return c;
}

void apply_setting(ExperimentConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "model") {
    c.model = models::parse_model(value);
  } else if (key == "methods" || key == "method") {
    c.methods.clear();
    for (std::string_view m : split_list(value)) c.methods.push_back(summary::parse_method_spec(m, c.model));
  } else if (key == "n_train") {
    c.n_train.clear();
    for (std::string_view v : split_list(value)) c.n_train.push_back(to_count(key, v));
  } else if (key == "n_eval") {
    c.n_eval = to_count(key, value);
  } else if (key == "n_tilde") {
    c.n_tilde = to_count(key, value);
  } else if (key == "percentile_x") {
    c.percentile_x = to_real(key, value);
  } else if (key == "repetitions") {
    c.repetitions = to_count(key, value);
  } else if (key == "seed") {
    c.seed = to_seed(key, value);
  } else if (key == "output_dir") {
    c.output_dir = std::string(value);
  } else if (key == "series_len") {
    c.series_len = to_count(key, value);
  } else if (key == "epochs") {
    c.epochs = to_count(key, value);
  } else if (key == "batch_size") {
    c.batch_size = to_count(key, value);
  } else if (key == "learning_rate") {
    c.learning_rate = to_real(key, value);
  } else if (key == "threads") {
    c.threads = to_count(key, value);
  } else if (key == "grid_resolution") {
    c.grid_resolution = to_count(key, value);
  } else if (key == "reference_draws") {
    c.reference_draws = to_count(key, value);
  } else if (key == "mcmc_tuning_batches") {
    c.mcmc.tuning_batches = to_count(key, value);
  } else if (key == "mcmc_batch_steps") {
    c.mcmc.batch_steps = to_count(key, value);
  } else if (key == "mcmc_burn_in") {
    c.mcmc.burn_in = to_count(key, value);
  } else if (key == "mcmc_thin") {
    c.mcmc.thin = to_count(key, value);
  } else if (key == "robust_scale") {
    if (value == "as-printed") {
      c.scale_sign = models::RobustScaleSign::AsPrinted;
    } else if (value == "conventional") {
      c.scale_sign = models::RobustScaleSign::Conventional;
    } else {
      throw ConfigError("robust_scale must be as-printed or conventional");
    }
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

ExperimentConfig parse_config(std::string_view text, std::optional<Scale> scale_override) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string value(trim(line.substr(eq + 1)));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    entries.emplace_back(std::string(trim(line.substr(0, eq))), std::move(value));
  }
  std::optional<ModelId> model;
  Scale scale = Scale::Desk;
  for (const auto& [k, v] : entries) {
    if (k == "model") model = models::parse_model(v);
    if (k == "scale") scale = parse_scale(v);
  }
  if (!model) throw ConfigError("config must set 'model'");
  if (scale_override) scale = *scale_override;
  ExperimentConfig cfg = defaults(*model, scale);
  for (const auto& [k, v] : entries) {
    if (k == "scale" || k == "model") continue;
    apply_setting(cfg, k, v);
  }
  return cfg;
}

std::string format_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "model = " << models::model_name(c.model) << '\n';
  os << "methods = ";
  for (std::size_t i = 0; i < c.methods.size(); ++i) os << (i ? ", " : "") << c.methods[i].label();
  os << "\nn_train = ";
  for (std::size_t i = 0; i < c.n_train.size(); ++i) os << (i ? ", " : "") << c.n_train[i];
  os << "\nn_eval = " << c.n_eval << "\nn_tilde = " << c.n_tilde
     << "\npercentile_x = " << io::format_double(c.percentile_x) << "\nrepetitions = " << c.repetitions
     << "\nseed = " << c.seed << "\noutput_dir = " << c.output_dir.string() << "\nseries_len = " << c.series_len
     << "\nepochs = " << c.epochs << "\nbatch_size = " << c.batch_size
     << "\nlearning_rate = " << io::format_double(c.learning_rate) << "\nthreads = " << c.threads
     << "\ngrid_resolution = " << c.grid_resolution << "\nreference_draws = " << c.reference_draws
     << "\nmcmc_tuning_batches = " << c.mcmc.tuning_batches << "\nmcmc_batch_steps = " << c.mcmc.batch_steps
     << "\nmcmc_burn_in = " << c.mcmc.burn_in << "\nmcmc_thin = " << c.mcmc.thin
     << "\nrobust_scale = " << sign_name(c.scale_sign) << '\n';
  return os.str();
}

void validate(const ExperimentConfig& c) {
  if (c.methods.empty()) throw ConfigError("at least one summary method is required");
  std::set<std::string> seen;
  for (const MethodSpec& m : c.methods) {
    summary::validate(c.model, m);
    if (m.method == Method::Pen && m.pen_d >= c.series_len) {
      throw ConfigError(m.label() + " needs series longer than its order");
    }
    if (!seen.insert(m.label()).second) throw ConfigError("method " + m.label() + " listed twice");
  }
  if (c.series_len == 0) throw ConfigError("series_len must be positive");
  if (any_network(c)) {
    if (c.n_train.empty()) throw ConfigError("network methods need at least one n_train value");
    for (std::size_t n : c.n_train) {
      if (n == 0) throw ConfigError("n_train values must be positive");
    }
    if (std::set<std::size_t>(c.n_train.begin(), c.n_train.end()).size() != c.n_train.size()) {
      throw ConfigError("n_train values must be distinct");
    }
    if (c.n_eval == 0) throw ConfigError("n_eval must be positive");
    if (c.epochs == 0) throw ConfigError("epochs must be positive");
    if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  }
  if (c.n_tilde == 0) throw ConfigError("n_tilde must be positive");
  if (!(c.percentile_x > 0.0 && c.percentile_x < 100.0)) throw ConfigError("percentile_x must lie in (0, 100)");
  if (abc::retention_count(c.n_tilde, c.percentile_x) == 0) {
    throw ConfigError("percentile_x retains no proposals from n_tilde; increase either");
  }
  if (c.repetitions == 0) throw ConfigError("repetitions must be positive");
  if (c.grid_resolution < 2) throw ConfigError("grid_resolution must be at least 2");
  if (c.reference_draws == 0) throw ConfigError("reference_draws must be positive");
  if (c.mcmc.batch_steps == 0 || c.mcmc.thin == 0) throw ConfigError("MCMC batch steps and thinning must be positive");
}

// ------------------------------------------------------------- stages

void cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Layout L{cfg.output_dir};
  const std::string key = simulate_key(cfg);
  const fs::path stamp = L.stamp(L.data() / "simulate");
  if (up_to_date(stamp, key)) {
    log << "simulate: up to date\n";
    return;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const models::ParamVector truth = models::ground_truth(cfg.model);
  const models::PreprocessSpec prep = models::PreprocessSpec::for_model(cfg.model);
  RowMatrix observed(static_cast<Eigen::Index>(cfg.repetitions), static_cast<Eigen::Index>(cfg.series_len));
  RowMatrix raw(observed.rows(), observed.cols());
  for (std::size_t r = 0; r < cfg.repetitions; ++r) {
    Rng rng = make_rng(cfg.seed, kStreamObserved, r);
    const models::Series y = models::simulate(truth, cfg.series_len, rng);
    const models::Series clean = prep.clean ? models::clean_outliers(y, prep.clean_lo, prep.clean_hi, rng) : y;
    std::copy(y.begin(), y.end(), raw.row(static_cast<Eigen::Index>(r)).data());
    std::copy(clean.begin(), clean.end(), observed.row(static_cast<Eigen::Index>(r)).data());
  }
  io::write_series_csv(L.observed(), observed);
  io::write_series_csv(L.observed_raw(), raw);
  log << "simulate: " << cfg.repetitions << " observed data sets of length " << cfg.series_len << '\n';

  abc::save_table(L.table(), abc::build_reference_table(cfg.model, cfg.series_len, cfg.n_tilde, cfg.seed,
                                                        kStreamTable, cfg.threads));
  log << "simulate: reference table of " << cfg.n_tilde << " entries\n";
  if (any_network(cfg)) {
    abc::save_table(L.train_pool(), abc::build_reference_table(cfg.model, cfg.series_len, max_train(cfg), cfg.seed,
                                                               kStreamTrain, cfg.threads));
    abc::save_table(L.eval_set(), abc::build_reference_table(cfg.model, cfg.series_len, cfg.n_eval, cfg.seed,
                                                             kStreamEval, cfg.threads));
    log << "simulate: " << max_train(cfg) << " training and " << cfg.n_eval << " evaluation pairs\n";
  }
  mark_done(stamp, key);
  log << "simulate: done in " << fixed(seconds_since(t0), 1) << " s\n";
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Layout L{cfg.output_dir};
  if (!up_to_date(L.stamp(L.data() / "simulate"), simulate_key(cfg))) {
    throw std::runtime_error("simulated data missing or stale in " + L.data().string() + "; run simulate first");
  }
  std::optional<abc::ReferenceTable> pool, eval;
  for (const Cell& c : cells(cfg)) {
    if (!c.method.uses_network()) continue;
    const std::string key = net_key(cfg, c);
    const fs::path out = L.net(c.name);
    if (up_to_date(L.stamp(out), key)) {
      log << "train " << c.name << ": up to date\n";
      continue;
    }
    if (!pool) {
      pool = abc::load_table(L.train_pool(), cfg.model);
      eval = abc::load_table(L.eval_set(), cfg.model);
    }
    const auto t0 = std::chrono::steady_clock::now();
    const NetworkSpec spec = summary::network_for(cfg.model, c.method, cfg.series_len);
    const nn::RegressionData train_data = regression_data(cfg, c.method.method, *pool, c.n_train);
    const nn::RegressionData eval_data = regression_data(cfg, c.method.method, *eval, cfg.n_eval);
    const std::uint64_t tag = fnv1a(c.name);
    Rng init_rng = make_rng(cfg.seed, kStreamInit, tag);
    const auto input_dim = static_cast<std::size_t>(train_data.inputs.cols());
    std::unique_ptr<nn::Regressor> net = summary::make_regressor(spec, input_dim, init_rng);
    nn::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.seed = derive_seed(cfg.seed, kStreamShuffle, tag);
    const nn::TrainResult result = nn::train(*net, train_data, eval_data, tc);
    std::string csv = "epoch,train_mse,eval_mse\n";
    for (const nn::EpochRecord& e : result.history) {
      csv += std::to_string(e.epoch) + ',' + io::format_double(e.train_mse) + ',' + io::format_double(e.eval_mse) + '\n';
    }
    io::write_file(L.train_log(c.name), csv);
    summary::save_network(out, {spec, input_dim, result.best_params});
    mark_done(L.stamp(out), key);
    log << "train " << c.name << ": " << count_weights(spec) << " weights, best epoch " << result.best_epoch << '/'
        << cfg.epochs << ", eval mse " << fixed(result.best_eval_mse, 5) << " (" << fixed(seconds_since(t0), 1)
        << " s)\n";
  }
}

void cmd_abc(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Layout L{cfg.output_dir};
  if (!up_to_date(L.stamp(L.data() / "simulate"), simulate_key(cfg))) {
    throw std::runtime_error("simulated data missing or stale in " + L.data().string() + "; run simulate first");
  }
  std::optional<abc::ReferenceTable> table;
  std::optional<RowMatrix> observed;
  for (const Cell& c : cells(cfg)) {
    const std::string key = abc_key(cfg, c);
    const fs::path stamp = L.stamp(L.posterior_dir(c.name));
    if (up_to_date(stamp, key)) {
      log << "abc " << c.name << ": up to date\n";
      continue;
    }
    if (!table) {
      table = abc::load_table(L.table(), cfg.model);
      observed = io::read_series_csv(L.observed());
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<summary::StoredNetwork> stored;
    if (c.method.uses_network()) {
      if (!up_to_date(L.stamp(L.net(c.name)), net_key(cfg, c))) {
        throw std::runtime_error("weights for " + c.name + " missing or stale; run train first");
      }
      stored = summary::load_network(L.net(c.name));
    }
    const auto fn = summary::make_summary(cfg.model, c.method, stored ? &*stored : nullptr, cfg.scale_sign);
    const RowMatrix summaries = abc::summarize_table(*table, *fn, cfg.threads);
    const std::vector<double> weights = summary::distance_weights(cfg.model, c.method, fn->dim());
    const RowMatrix s_obs_all = fn->apply(*observed);
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
      const std::vector<double> s_obs = row_vector(s_obs_all, static_cast<Eigen::Index>(r));
      const abc::PosteriorSample post =
          abc::rejection_sample(summaries, table->thetas, s_obs, weights, cfg.percentile_x);
      abc::write_posterior_csv(L.posterior(c.name, r), post);
    }
    mark_done(stamp, key);
    log << "abc " << c.name << ": " << cfg.repetitions << " posteriors of "
        << abc::retention_count(cfg.n_tilde, cfg.percentile_x) << " draws (" << fixed(seconds_since(t0), 1)
        << " s)\n";
  }
}

std::vector<CellSummary> summarize(const std::vector<ResultRow>& rows) {
  std::vector<CellSummary> out;
  std::map<std::pair<std::string, std::size_t>, std::size_t> index;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : rows) {
    const auto k = std::make_pair(r.method, r.n_train);
    auto it = index.find(k);
    if (it == index.end()) {
      it = index.emplace(k, groups.size()).first;
      groups.emplace_back();
      out.push_back({r.method, r.n_train, 0, std::nullopt, std::nullopt, 0.0});
    }
    groups[it->second].push_back(&r);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    CellSummary& s = out[g];
    s.repetitions = grp.size();
    double sq = 0.0;
    for (const ResultRow* r : grp) sq += r->sq_error;
    s.rmse = std::sqrt(sq / static_cast<double>(grp.size()));
    if (std::all_of(grp.begin(), grp.end(), [](const ResultRow* r) { return r->wasserstein.has_value(); })) {
      double mean = 0.0;
      for (const ResultRow* r : grp) mean += *r->wasserstein;
      mean /= static_cast<double>(grp.size());
      double var = 0.0;
      for (const ResultRow* r : grp) var += (*r->wasserstein - mean) * (*r->wasserstein - mean);
      const double n = static_cast<double>(grp.size());
      s.mean_wasserstein = mean;
      s.se_wasserstein = grp.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
    }
  }
  return out;
}

std::string results_csv(const ExperimentConfig& cfg, const std::vector<ResultRow>& rows) {
  std::string out = "model,method,n_train,seed,repetition,wasserstein,sq_error";
  for (std::size_t j = 0; j < models::param_dim(cfg.model); ++j) out += ",mean_" + std::to_string(j + 1);
  out += '\n';
  for (const ResultRow& r : rows) {
    out += std::string(models::model_name(cfg.model)) + ',' + r.method + ',' + std::to_string(r.n_train) + ',' +
           std::to_string(cfg.seed) + ',' + std::to_string(r.repetition) + ',' +
           (r.wasserstein ? io::format_double(*r.wasserstein) : std::string()) + ',' + io::format_double(r.sq_error);
    for (double m : r.posterior_mean) out += ',' + io::format_double(m);
    out += '\n';
  }
  return out;
}

std::string summary_csv(const ExperimentConfig& cfg, const std::vector<CellSummary>& cells_out) {
  std::string out = "model,method,n_train,repetitions,mean_wasserstein,se_wasserstein,rmse\n";
  for (const CellSummary& s : cells_out) {
    out += std::string(models::model_name(cfg.model)) + ',' + s.method + ',' + std::to_string(s.n_train) + ',' +
           std::to_string(s.repetitions) + ',' +
           (s.mean_wasserstein ? io::format_double(*s.mean_wasserstein) : std::string()) + ',' +
           (s.se_wasserstein ? io::format_double(*s.se_wasserstein) : std::string()) + ',' +
           io::format_double(s.rmse) + '\n';
  }
  return out;
}

std::vector<ResultRow> cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
  validate(cfg);
  const Layout L{cfg.output_dir};
  const models::ParamVector truth = models::ground_truth(cfg.model);
  const std::vector<Cell> all = cells(cfg);
  for (const Cell& c : all) {
    if (!up_to_date(L.stamp(L.posterior_dir(c.name)), abc_key(cfg, c))) {
      throw std::runtime_error("posteriors for " + c.name + " missing or stale; run abc first");
    }
  }
  std::vector<RowMatrix> refs;
  if (has_reference(cfg.model)) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::string key = reference_key(cfg);
    std::optional<RowMatrix> raw;
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
      const fs::path path = L.reference(r);
      if (!up_to_date(L.stamp(path), key)) {
        if (!raw) raw = io::read_series_csv(L.observed_raw());
        std::vector<double> y = row_vector(*raw, static_cast<Eigen::Index>(r));
        Rng rng = make_rng(cfg.seed, kStreamReference, r);
        RowMatrix draws;
        if (cfg.model == ModelId::GAndK) {
          reference::TunedChainConfig mc = cfg.mcmc;
          mc.draws = cfg.reference_draws;
          const auto post = reference::log_posterior(cfg.model, std::move(y));
          const auto chain = reference::tuned_metropolis(post, truth.values, {0.05, 0.05, 0.2, 0.05}, mc, rng);
          log << "evaluate: reference chain " << r << " acceptance " << fixed(chain.acceptance_rate, 3) << '\n';
          draws = chain.chain;
        } else {
          const auto gp = reference::grid_posterior(cfg.model, reference::log_posterior(cfg.model, std::move(y)),
                                                    cfg.grid_resolution, cfg.threads);
          draws = reference::sample_grid(gp, cfg.reference_draws, rng);
        }
        abc::write_draws_csv(path, draws);
        mark_done(L.stamp(path), key);
      }
      refs.push_back(abc::read_draws_csv(path));
    }
    log << "evaluate: reference posteriors ready (" << fixed(seconds_since(t0), 1) << " s)\n";
  }
  std::vector<ResultRow> rows;
  for (const Cell& c : all) {
    for (std::size_t r = 0; r < cfg.repetitions; ++r) {
      const abc::PosteriorSample post = abc::read_posterior_csv(L.posterior(c.name, r));
      ResultRow row;
      row.method = c.method.label();
      row.n_train = c.n_train;
      row.repetition = r;
      const Eigen::RowVectorXd mean = post.draws.colwise().mean();
      row.posterior_mean.assign(mean.data(), mean.data() + mean.size());
      for (std::size_t j = 0; j < truth.size(); ++j) {
        const double e = row.posterior_mean[j] - truth[j];
        row.sq_error += e * e;
      }
      if (!refs.empty()) {
        row.wasserstein = reference::wasserstein(post.draws, refs[r], derive_seed(cfg.seed, kStreamWasserstein, r));
      }
      rows.push_back(std::move(row));
    }
  }
  const std::vector<CellSummary> sums = summarize(rows);
  io::write_file(cfg.output_dir / "results.csv", results_csv(cfg, rows));
  io::write_file(cfg.output_dir / "summary.csv", summary_csv(cfg, sums));
  for (const CellSummary& s : sums) {
    log << "evaluate " << s.method << " n_train=" << s.n_train;
    if (s.mean_wasserstein) log << " wasserstein=" << fixed(*s.mean_wasserstein, 4);
    log << " rmse=" << fixed(s.rmse, 4) << '\n';
  }
  return rows;
}

std::vector<ResultRow> run_pipeline(const ExperimentConfig& cfg, std::ostream& log) {
  cmd_simulate(cfg, log);
  cmd_train(cfg, log);
  cmd_abc(cfg, log);
  return cmd_evaluate(cfg, log);
}

std::vector<std::string> reproduce_ids() { return {"fig1", "table1", "fig3", "fig4"}; }

ExperimentConfig reproduce_config(std::string_view id, Scale scale) {
  if (id == "fig1") return defaults(ModelId::GAndK, scale);
  if (id == "table1") return defaults(ModelId::AlphaStable, scale);
  if (id == "fig3") return defaults(ModelId::Ar2, scale);
  if (id == "fig4") return defaults(ModelId::Ma2, scale);
  throw ConfigError("unknown reproduction id '" + std::string(id) + "' (expected fig1, table1, fig3 or fig4)");
}

std::vector<CellSummary> cmd_reproduce(std::string_view id, Scale scale, std::uint64_t seed, std::size_t threads,
                                       const fs::path& output_dir, std::ostream& log) {
  ExperimentConfig cfg = reproduce_config(id, scale);
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.output_dir = output_dir / std::string(id);
  log << "reproduce " << id << " at " << scale_name(scale) << " scale\n";
  const std::vector<ResultRow> rows = run_pipeline(cfg, log);
  const std::vector<CellSummary> sums = summarize(rows);
  io::write_file(output_dir / (std::string(id) + ".csv"), results_csv(cfg, rows));
  io::write_file(output_dir / (std::string(id) + "_summary.csv"), summary_csv(cfg, sums));
  return sums;
}

}  // namespace penabc::experiment
