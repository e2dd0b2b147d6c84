// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "rmix/errors.hpp"

namespace rmix {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double parse_plain_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) throw ConfigError("not a number: '" + s + "'");
  return v;
}

// Accepts plain decimals and fractions such as 8/255.
double parse_double(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) return parse_plain_double(s);
  const double den = parse_plain_double(trim(s.substr(slash + 1)));
  if (den == 0.0) throw ConfigError("zero denominator in '" + s + "'");
  return parse_plain_double(trim(s.substr(0, slash))) / den;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("not a non-negative integer: '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s) { return static_cast<std::size_t>(parse_u64(s)); }

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + s + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& s, F parse) {
  std::vector<T> out;
  if (s.empty()) return out;
  for (const std::string& item : split(s, ',')) out.push_back(parse(item));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F format, const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += format(values[i]);
  }
  return out;
}

std::string format_size(std::size_t v) { return std::to_string(v); }
std::string format_bool(bool v) { return v ? "true" : "false"; }
std::string identity(const std::string& s) { return s; }

template <typename Enum>
Enum parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, Enum>> names) {
  std::string options;
  for (const auto& [name, value] : names) {
    if (s == name) return value;
    options += options.empty() ? name : std::string("|") + name;
  }
  throw ConfigError("expected one of " + options + ", got '" + s + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define RMIX_FIELD(KEY, MEMBER, PARSE, FORMAT)                                            \
  Field {                                                                                 \
    KEY, [](const RunConfig& c) { return FORMAT(c.MEMBER); },                             \
        [](RunConfig& c, const std::string& v) { c.MEMBER = PARSE(v); }                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      RMIX_FIELD("run.id", run_id, identity, identity),
      RMIX_FIELD("run.seed", seed, parse_u64, std::to_string),
      Field{"data.format", [](const RunConfig& c) { return to_string(c.data.format); },
            [](RunConfig& c, const std::string& v) {
              c.data.format = parse_enum<DataFormat>(
                  v, {{"cifar10", DataFormat::kCifar10}, {"cifar100", DataFormat::kCifar100}, {"idx", DataFormat::kIdx}});
            }},
      RMIX_FIELD("data.root", data.root, identity, identity),
      Field{"data.train_files", [](const RunConfig& c) { return join(c.data.train_files, identity); },
            [](RunConfig& c, const std::string& v) { c.data.train_files = parse_list<std::string>(v, identity); }},
      Field{"data.test_files", [](const RunConfig& c) { return join(c.data.test_files, identity); },
            [](RunConfig& c, const std::string& v) { c.data.test_files = parse_list<std::string>(v, identity); }},
      RMIX_FIELD("data.classes", data.classes, parse_size, format_size),
      RMIX_FIELD("data.channels", data.channels, parse_size, format_size),
      RMIX_FIELD("data.side", data.side, parse_size, format_size),
      RMIX_FIELD("data.train_subset", data.train_subset, parse_size, format_size),
      RMIX_FIELD("data.test_subset", data.test_subset, parse_size, format_size),
      Field{"data.mean", [](const RunConfig& c) { return join(c.data.mean, format_double); },
            [](RunConfig& c, const std::string& v) { c.data.mean = parse_list<double>(v, parse_double); }},
      Field{"data.std", [](const RunConfig& c) { return join(c.data.stddev, format_double); },
            [](RunConfig& c, const std::string& v) { c.data.stddev = parse_list<double>(v, parse_double); }},
      RMIX_FIELD("data.crop_padding", data.crop_padding, parse_size, format_size),
      RMIX_FIELD("data.flip", data.flip, parse_bool, format_bool),
      RMIX_FIELD("model.name", model, identity, identity),
      Field{"model.conv_channels", [](const RunConfig& c) { return join(c.cnn.conv_channels, format_size); },
            [](RunConfig& c, const std::string& v) { c.cnn.conv_channels = parse_list<std::size_t>(v, parse_size); }},
      RMIX_FIELD("model.hidden", cnn.hidden, parse_size, format_size),
      RMIX_FIELD("train.epochs", train.epochs, parse_size, format_size),
      RMIX_FIELD("train.batch_size", train.batch_size, parse_size, format_size),
      Field{"train.loss", [](const RunConfig& c) { return to_string(c.train.loss); },
            [](RunConfig& c, const std::string& v) {
              c.train.loss = parse_enum<LossKind>(
                  v, {{"sigmoid_bce", LossKind::kSigmoidBce}, {"softmax_ce", LossKind::kSoftmaxCrossEntropy}});
            }},
      RMIX_FIELD("optim.momentum", optim.momentum, parse_double, format_double),
      RMIX_FIELD("optim.nesterov", optim.nesterov, parse_bool, format_bool),
      RMIX_FIELD("optim.weight_decay", optim.weight_decay, parse_double, format_double),
      Field{"sched.kind", [](const RunConfig& c) { return to_string(c.sched.kind); },
            [](RunConfig& c, const std::string& v) {
              c.sched.kind = parse_enum<ScheduleKind>(
                  v, {{"onecycle", ScheduleKind::kOneCycle}, {"multistep", ScheduleKind::kMultiStep}});
            }},
      RMIX_FIELD("sched.initial_lr", sched.one_cycle.initial_lr, parse_double, format_double),
      RMIX_FIELD("sched.max_lr", sched.one_cycle.max_lr, parse_double, format_double),
      RMIX_FIELD("sched.final_lr", sched.one_cycle.final_lr, parse_double, format_double),
      RMIX_FIELD("sched.warmup_fraction", sched.one_cycle.warmup_fraction, parse_double, format_double),
      Field{"sched.anneal", [](const RunConfig& c) { return std::string(c.sched.one_cycle.cosine ? "cos" : "linear"); },
            [](RunConfig& c, const std::string& v) {
              c.sched.one_cycle.cosine = parse_enum<bool>(v, {{"cos", true}, {"linear", false}});
            }},
      RMIX_FIELD("sched.base_lr", sched.base_lr, parse_double, format_double),
      Field{"sched.milestone_epochs", [](const RunConfig& c) { return join(c.sched.milestone_epochs, format_size); },
            [](RunConfig& c, const std::string& v) { c.sched.milestone_epochs = parse_list<std::size_t>(v, parse_size); }},
      RMIX_FIELD("sched.gamma", sched.gamma, parse_double, format_double),
      Field{"mix.policy", [](const RunConfig& c) { return to_string(c.mix.variant); },
            [](RunConfig& c, const std::string& v) {
              try {
                c.mix.variant = mix_variant_from_string(v);
              } catch (const ShapeError& e) {
                throw ConfigError(e.what());
              }
            }},
      RMIX_FIELD("mix.alpha", mix.alpha, parse_double, format_double),
      RMIX_FIELD("mix.k", mix.k, parse_size, format_size),
      Field{"mix.p_set", [](const RunConfig& c) { return join(c.mix.p_set, format_size); },
            [](RunConfig& c, const std::string& v) { c.mix.p_set = parse_list<std::size_t>(v, parse_size); }},
      Field{"mix.granularity",
            [](const RunConfig& c) { return std::string(c.mix.granularity == Granularity::kPerBatch ? "batch" : "pair"); },
            [](RunConfig& c, const std::string& v) {
              c.mix.granularity = parse_enum<Granularity>(v, {{"batch", Granularity::kPerBatch}, {"pair", Granularity::kPerPair}});
            }},
      Field{"mix.pool",
            [](const RunConfig& c) { return std::string(c.mix.pool == PoolMode::kGridSide ? "grid_side" : "kernel_side"); },
            [](RunConfig& c, const std::string& v) {
              c.mix.pool = parse_enum<PoolMode>(v, {{"grid_side", PoolMode::kGridSide}, {"kernel_side", PoolMode::kKernelSide}});
            }},
      Field{"mix.quantile",
            [](const RunConfig& c) { return std::string(c.mix.quantile == QuantileMethod::kLinear ? "linear" : "nearest_rank"); },
            [](RunConfig& c, const std::string& v) {
              c.mix.quantile = parse_enum<QuantileMethod>(
                  v, {{"linear", QuantileMethod::kLinear}, {"nearest_rank", QuantileMethod::kNearestRank}});
            }},
      RMIX_FIELD("eval.ece_bins", eval.ece_bins, parse_size, format_size),
      RMIX_FIELD("eval.fgsm", eval.fgsm, parse_bool, format_bool),
      RMIX_FIELD("eval.fgsm_epsilon", eval.fgsm_epsilon, parse_double, format_double),
      RMIX_FIELD("eval.batch_size", eval.batch_size, parse_size, format_size),
      RMIX_FIELD("rl.hidden", rl.hidden, parse_size, format_size),
      RMIX_FIELD("rl.learning_rate", rl.learning_rate, parse_double, format_double),
      RMIX_FIELD("rl.baseline_decay", rl.baseline_decay, parse_double, format_double),
      RMIX_FIELD("rl.grid", rl.grid, parse_size, format_size),
      RMIX_FIELD("rl.per_batch_reward", rl.per_batch_reward, parse_bool, format_bool),
      Field{"sweep.p_sets",
            [](const RunConfig& c) {
              return join(c.sweep.p_sets, [](const std::vector<std::size_t>& s) { return join(s, format_size); }, ";");
            },
            [](RunConfig& c, const std::string& v) {
              c.sweep.p_sets.clear();
              for (const std::string& part : split(v, ';')) c.sweep.p_sets.push_back(parse_list<std::size_t>(part, parse_size));
            }},
      Field{"sweep.k_values", [](const RunConfig& c) { return join(c.sweep.k_values, format_size); },
            [](RunConfig& c, const std::string& v) { c.sweep.k_values = parse_list<std::size_t>(v, parse_size); }},
      Field{"sweep.alphas", [](const RunConfig& c) { return join(c.sweep.alphas, format_double); },
            [](RunConfig& c, const std::string& v) { c.sweep.alphas = parse_list<double>(v, parse_double); }},
      RMIX_FIELD("debug.dump_provenance", debug.dump_provenance, parse_bool, format_bool),
      RMIX_FIELD("debug.dump_saliency", debug.dump_saliency, parse_bool, format_bool),
  };
  return table;
}

#undef RMIX_FIELD

const Field& find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::string to_string(DataFormat f) {
  switch (f) {
    case DataFormat::kCifar10: return "cifar10";
    case DataFormat::kCifar100: return "cifar100";
    case DataFormat::kIdx: return "idx";
  }
  return "unknown";
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::kOneCycle ? "onecycle" : "multistep"; }

std::string to_string(LossKind k) { return k == LossKind::kSigmoidBce ? "sigmoid_bce" : "softmax_ce"; }

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  try {
    find_field(key).set(config, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(config, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.key);
  return out;
}

DatasetMeta RunConfig::meta() const {
  DatasetMeta m;
  m.classes = data.classes;
  m.side = data.side;
  m.channels = data.channels;
  m.mean = data.mean;
  m.stddev = data.stddev;
  return m;
}

SmallCnnOptions RunConfig::model_options() const {
  SmallCnnOptions o = cnn;
  o.channels = data.channels;
  o.side = data.side;
  o.classes = data.classes;
  return o;
}

void RunConfig::validate() const {
  require(!run_id.empty() && run_id.find_first_of(",\n/\\") == std::string::npos,
          "run.id must be non-empty without commas, slashes or newlines");
  meta().validate();
  if (data.format != DataFormat::kIdx) {
    require(data.channels == 3 && data.side == 32, "CIFAR data has 3 channels of side 32");
    require(data.classes == (data.format == DataFormat::kCifar10 ? 10u : 100u), "data.classes does not match data.format");
  } else {
    require(data.channels == 1, "IDX data is single-channel");
    require(data.train_files.size() == 2 && data.test_files.size() == 2, "IDX data needs an images file and a labels file");
  }
  require(!data.train_files.empty() && !data.test_files.empty(), "data.train_files and data.test_files must be set");
  require(model == "small_cnn", "unknown model '" + model + "'");
  require(!cnn.conv_channels.empty() && cnn.hidden > 0, "model needs at least one conv block and a hidden layer");
  for (std::size_t c : cnn.conv_channels) require(c > 0, "model.conv_channels entries must be positive");
  require(data.side % (std::size_t{1} << cnn.conv_channels.size()) == 0, "each conv block halves the side; data.side is not divisible");
  require(train.epochs > 0, "train.epochs must be positive");
  require(train.batch_size > 0, "train.batch_size must be positive");
  require(optim.momentum >= 0.0 && optim.momentum < 1.0, "optim.momentum must lie in [0, 1)");
  require(optim.weight_decay >= 0.0, "optim.weight_decay must be non-negative");
  const OneCycleSchedule& oc = sched.one_cycle;
  require(oc.initial_lr > 0.0 && oc.max_lr > 0.0 && oc.final_lr > 0.0, "one-cycle rates must be positive");
  require(oc.warmup_fraction > 0.0 && oc.warmup_fraction < 1.0, "sched.warmup_fraction must lie in (0, 1)");
  require(sched.base_lr > 0.0 && sched.gamma > 0.0, "sched.base_lr and sched.gamma must be positive");
  if (sched.kind == ScheduleKind::kMultiStep) {
    for (std::size_t m : sched.milestone_epochs) require(m > 0, "sched.milestone_epochs must be positive");
  }
  try {
    mix.validate(data.side);
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  require(eval.ece_bins > 0, "eval.ece_bins must be positive");
  require(eval.fgsm_epsilon >= 0.0, "eval.fgsm_epsilon must be non-negative");
  require(eval.batch_size > 0, "eval.batch_size must be positive");
  require(rl.learning_rate > 0.0, "rl.learning_rate must be positive");
  require(rl.baseline_decay >= 0.0 && rl.baseline_decay < 1.0, "rl.baseline_decay must lie in [0, 1)");
  require(rl.grid > 0 && data.side % rl.grid == 0, "rl.grid must divide data.side");
  require(!sweep.p_sets.empty() && !sweep.k_values.empty() && !sweep.alphas.empty(), "sweep axes must be non-empty");
  for (const auto& ps : sweep.p_sets) {
    require(!ps.empty(), "sweep.p_sets entries must be non-empty");
    for (std::size_t p : ps) require(p > 0 && data.side % p == 0, "sweep p values must divide data.side");
  }
  for (std::size_t k : sweep.k_values) require(k > 0, "sweep.k_values must be positive");
  for (double a : sweep.alphas) require(a > 0.0, "sweep.alphas must be positive");
}

}  // namespace rmix
