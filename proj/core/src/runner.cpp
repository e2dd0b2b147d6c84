// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "rmix/checkpoint.hpp"
#include "rmix/errors.hpp"
#include "rmix/kernels.hpp"
#include "rmix/mixers.hpp"
#include "rmix/netlib.hpp"
#include "rmix/rlmix.hpp"
#include "rmix/saliency.hpp"

namespace fs = std::filesystem;

namespace rmix {

namespace {

// Independent random streams split from the run seed.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kSubsetStream = 2,
  kShuffleStream = 3,
  kAugmentStream = 4,
  kMixStream = 5,
  kPolicyStream = 6,
  kPolicyInitStream = 7,
};

Rng stream(std::uint64_t seed, Stream s) { return Rng(seed).fork(s); }
Rng epoch_stream(std::uint64_t seed, Stream s, std::size_t epoch) { return Rng(seed).fork(s).fork(epoch); }

std::vector<LabeledImage> read_split(const RunConfig& config, const fs::path& root, const std::vector<std::string>& files) {
  const auto path_of = [&](const std::string& f) {
    const fs::path p = root / f;
    if (!fs::is_regular_file(p)) throw ConfigError("dataset file not found: " + p.string());
    return p;
  };
  std::vector<LabeledImage> out;
  if (config.data.format == DataFormat::kIdx) {
    const Tensor images = parse_idx(read_file_bytes(path_of(files.at(0))));
    const Tensor labels = parse_idx(read_file_bytes(path_of(files.at(1))));
    out = images_from_idx(images, labels, config.data.classes);
  } else {
    const CifarLayout layout = config.data.format == DataFormat::kCifar10 ? CifarLayout::kCifar10 : CifarLayout::kCifar100;
    for (const std::string& f : files) {
      auto part = parse_cifar_binary(read_file_bytes(path_of(f)), layout);
      out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
  }
  const Shape expected{config.data.channels, config.data.side, config.data.side};
  for (const LabeledImage& img : out) {
    if (img.pixels.shape() != expected) {
      throw ConfigError("dataset image shape " + shape_string(img.pixels.shape()) + " does not match the config " +
                        shape_string(expected));
    }
  }
  return out;
}

std::vector<LabeledImage> subset(const std::vector<LabeledImage>& all, std::size_t count, std::size_t classes, Rng rng,
                                 const char* split) {
  if (count == 0) return all;
  if (count > all.size()) {
    throw ConfigError(std::string(split) + " subset of " + std::to_string(count) + " exceeds the " +
                      std::to_string(all.size()) + " available images");
  }
  return stratified_subset(all, count, classes, rng);
}

Dataset load_dataset_impl(const RunConfig& config, bool include_train) {
  const fs::path root = resolve_data_root(config.data);
  Dataset d;
  d.meta = config.meta();
  const Rng base = stream(config.seed, kSubsetStream);
  if (include_train) {
    d.train = subset(read_split(config, root, config.data.train_files), config.data.train_subset, config.data.classes,
                     base.fork(0), "train");
    if (d.train.empty()) throw ConfigError("training split is empty");
  }
  d.test = subset(read_split(config, root, config.data.test_files), config.data.test_subset, config.data.classes,
                  base.fork(1), "test");
  if (d.test.empty()) throw ConfigError("test split is empty");
  return d;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void write_config_comment(std::ostream& out, const std::string& config_text) {
  std::istringstream in(config_text);
  std::string line;
  while (std::getline(in, line)) out << "# " << line << '\n';
}

std::uintmax_t file_size_or_zero(const fs::path& p) { return fs::exists(p) ? fs::file_size(p) : 0; }

std::ofstream open_append(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + p.string());
  return out;
}

void ensure_fresh_dir(const fs::path& dir) {
  if (fs::exists(dir)) throw ConfigError("output directory already exists: " + dir.string());
  fs::create_directories(dir);
}

LrSchedule make_schedule(const RunConfig& config, std::size_t steps_per_epoch) {
  const std::size_t total = config.train.epochs * steps_per_epoch;
  // Updates use steps 0 .. total - 1, so the one-cycle anchors span exactly
  // those: the last update runs at the final rate.
  if (config.sched.kind == ScheduleKind::kOneCycle) return LrSchedule(config.sched.one_cycle, total > 1 ? total - 1 : 1);
  MultiStepSchedule ms;
  ms.base_lr = config.sched.base_lr;
  ms.gamma = config.sched.gamma;
  for (std::size_t e : config.sched.milestone_epochs) ms.milestones.push_back(e * steps_per_epoch);
  return LrSchedule(ms, total);
}

void restore_tensors(std::vector<Tensor>& dst, const std::vector<Tensor>& src, const char* what) {
  if (dst.size() != src.size()) throw ConfigError(std::string("checkpoint ") + what + " has the wrong tensor count");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != src[i].shape()) throw ConfigError(std::string("checkpoint ") + what + " tensor shape mismatch");
    dst[i] = src[i];
  }
}

std::size_t row_argmax(const Tensor& t, std::size_t row) {
  const std::size_t n = t.dim(1);
  return argmax(std::span<const double>(t.data().data() + row * n, n));
}

void write_eval_csv(const fs::path& path, const std::string& config_text, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_config_comment(out, config_text);
  write_metric_header(out);
  write_metric_rows(out, rows);
}

const char* const kAppendOnly[] = {"metrics.csv", "transitions.csv", "provenance.csv"};

class Trainer {
 public:
  Trainer(const RunConfig& config, const fs::path& dir, const RunOptions& options)
      : config_(config), dir_(dir), options_(options), config_text_(serialize_config(config)) {}

  RunResult run() {
    config_.validate();
    const bool rl = options_.mode == RunMode::kRlMix;
    if (rl && config_.mix.variant != MixVariant::kRMix) throw ConfigError("rlmix runs require mix.policy = rmix");
    if (options_.resume) {
      if (!fs::is_regular_file(dir_ / "checkpoint.bin")) throw ConfigError("nothing to resume in " + dir_.string());
    } else if (fs::exists(dir_)) {
      throw ConfigError("output directory already exists: " + dir_.string());
    }
    // Everything that can fail on bad input happens before the first write.
    data_ = load_dataset_impl(config_, true);
    Rng init = stream(config_.seed, kInitStream);
    model_.emplace(make_model(config_.model, config_.model_options(), init));
    sgd_.emplace(config_.optim);
    steps_per_epoch_ = (data_.train.size() + config_.train.batch_size - 1) / config_.train.batch_size;
    schedule_.emplace(make_schedule(config_, steps_per_epoch_));
    if (rl) {
      PolicyOptions po;
      po.input_dim = config_.rl.grid * config_.rl.grid + config_.data.classes;
      po.actions = config_.mix.k;
      po.hidden = config_.rl.hidden;
      po.learning_rate = config_.rl.learning_rate;
      po.baseline_decay = config_.rl.baseline_decay;
      Rng pinit = stream(config_.seed, kPolicyInitStream);
      policy_.emplace(make_policy(po, pinit));
    }

    RunResult result;
    result.dir = dir_;
    if (options_.resume) {
      restore();
    } else {
      fs::create_directories(dir_);
      std::ofstream(dir_ / "config.cfg", std::ios::binary) << config_text_;
      std::ofstream metrics(dir_ / "metrics.csv", std::ios::binary);
      write_epoch_header(metrics, config_text_);
      if (rl) {
        std::ofstream tr(dir_ / "transitions.csv", std::ios::binary);
        write_config_comment(tr, config_text_);
        write_transition_header(tr);
      }
      if (config_.debug.dump_provenance) {
        std::ofstream pv(dir_ / "provenance.csv", std::ios::binary);
        write_config_comment(pv, config_text_);
        write_provenance_header(pv);
      }
    }
    log("start epoch " + std::to_string(epoch_ + 1) + (options_.resume ? " (resumed)" : ""));

    while (epoch_ < config_.train.epochs) {
      const EpochMetrics m = train_epoch();
      ++epoch_;
      {
        auto out = open_append(dir_ / "metrics.csv");
        write_epoch_row(out, m);
      }
      save();
      log("epoch " + std::to_string(epoch_) + " done");
      if (options_.progress) {
        *options_.progress << config_.run_id << " epoch " << epoch_ << '/' << config_.train.epochs << std::fixed
                           << std::setprecision(4) << " loss " << m.train_loss << " lr " << m.lr << " train_acc "
                           << m.train_acc << " val_acc " << m.val_acc << " val_ece " << m.val_ece << std::endl;
        options_.progress->unsetf(std::ios::floatfield);
      }
      if (options_.stop_after_epoch && epoch_ >= *options_.stop_after_epoch && epoch_ < config_.train.epochs) break;
    }
    result.epochs = read_metrics_csv(dir_ / "metrics.csv");
    if (epoch_ == config_.train.epochs) {
      EvalOptions eo = config_.eval;
      const EvalResult final_eval = evaluate(*model_, data_.test, data_.meta, eo);
      write_eval_csv(dir_ / "eval.csv", config_text_, metric_rows(config_.run_id, epoch_, final_eval, eo));
      result.final_eval = final_eval;
      result.finished = true;
      log("finished");
    } else {
      log("stopped after epoch " + std::to_string(epoch_));
    }
    return result;
  }

 private:
  void log(const std::string& message) {
    auto out = open_append(dir_ / "run.log");
    out << timestamp() << ' ' << message << '\n';
  }

  EpochMetrics train_epoch() {
    const std::size_t e = epoch_;
    Rng shuffle = epoch_stream(config_.seed, kShuffleStream, e);
    Rng augment = epoch_stream(config_.seed, kAugmentStream, e);
    Rng mix_rng = epoch_stream(config_.seed, kMixStream, e);
    Rng policy_rng = epoch_stream(config_.seed, kPolicyStream, e);
    const bool rl = policy_.has_value();
    const std::size_t n = data_.train.size();
    const std::size_t batch_size = config_.train.batch_size;
    const std::vector<std::size_t> order = shuffle.permutation(n);

    std::ofstream transitions_out;
    std::ofstream provenance_out;
    if (rl) transitions_out = open_append(dir_ / "transitions.csv");
    if (config_.debug.dump_provenance) provenance_out = open_append(dir_ / "provenance.csv");

    std::vector<Transition> transitions;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t b = 0; b * batch_size < n; ++b) {
      const std::size_t start = b * batch_size;
      const std::size_t count = std::min(batch_size, n - start);
      std::vector<Tensor> xs;
      std::vector<std::size_t> labels;
      for (std::size_t i = 0; i < count; ++i) {
        const LabeledImage img =
            augment_classic(data_.train[order[start + i]], augment, config_.data.crop_padding, config_.data.flip);
        xs.push_back(normalize(img.pixels, data_.meta));
        labels.push_back(img.label);
      }
      const Tensor x = stack(xs);
      const Tensor y = one_hot(labels, config_.data.classes);

      std::vector<Tensor> maps;
      if (config_.mix.needs_saliency() || rl) maps = saliency_maps(*model_, x, y, config_.train.loss);
      if (config_.debug.dump_saliency && e == 0 && b == 0) dump_saliency(maps);

      std::vector<double> qs;
      std::vector<std::size_t> actions;
      Tensor obs;
      MixOverrides overrides;
      if (rl) {
        std::vector<SaliencyGrid> grids;
        for (std::size_t i = 0; i < count; ++i) {
          grids.push_back(normalize_and_pool(maps[i], config_.rl.grid, PoolMode::kGridSide));
          grids.back().source = i;
        }
        obs = observations(grids, model_->logits(x));
        actions = select_actions(*policy_, obs, policy_rng);
        for (std::size_t a : actions) qs.push_back(action_to_q(a, config_.mix.k));
        overrides.per_image_q = qs;
      }
      const MixedBatch mixed = mix_batch(x, y, config_.mix, mix_rng, maps, overrides);

      if (rl) {
        const std::vector<Tensor> mixed_maps = saliency_maps(*model_, mixed.images, y, config_.train.loss);
        const std::vector<double> rewards = rewards_from_maps(maps, mixed_maps, config_.rl.per_batch_reward);
        for (std::size_t i = 0; i < count; ++i) {
          transitions.push_back({obs.slice0(i), actions[i], rewards[i]});
          write_transition_row(transitions_out, e + 1, b, i, actions[i], qs[i], rewards[i]);
        }
      }
      if (config_.debug.dump_provenance) write_provenance_rows(provenance_out, mixed, e * steps_per_epoch_ + b);

      const BatchGradients g = compute_gradients(*model_, mixed.images, mixed.labels, config_.train.loss);
      lr = schedule_->lr_at(step_);
      sgd_->step(*model_, g.grads, lr);
      ++step_;
      loss_sum += g.loss * static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (row_argmax(g.logits, i) == row_argmax(mixed.labels, i)) ++correct;
      }
    }
    if (rl) policy_update(*policy_, transitions);

    EvalOptions eo = config_.eval;
    eo.fgsm = false;
    const EvalResult val = evaluate(*model_, data_.test, data_.meta, eo);
    EpochMetrics m;
    m.run_id = config_.run_id;
    m.epoch = e + 1;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.lr = lr;
    m.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    m.val_acc = val.accuracy;
    m.val_ece = val.ece;
    return m;
  }

  void dump_saliency(const std::vector<Tensor>& maps) {
    for (std::size_t p : config_.mix.p_set) {
      std::vector<SaliencyGrid> grids;
      for (std::size_t i = 0; i < maps.size(); ++i) {
        grids.push_back(normalize_and_pool(maps[i], p, config_.mix.pool));
        grids.back().source = i;
      }
      std::ofstream out(dir_ / ("saliency_p" + std::to_string(p) + ".csv"), std::ios::binary | std::ios::trunc);
      write_config_comment(out, config_text_);
      write_saliency_csv(out, grids);
    }
  }

  void save() {
    Checkpoint c;
    c.config_text = config_text_;
    c.epoch = epoch_;
    c.step = step_;
    c.groups["model"] = model_->parameters();
    c.groups["velocity"] = sgd_->velocity();
    c.rng_states["master"] = Rng(config_.seed).state();
    if (policy_) {
      c.groups["policy"] = policy_->params;
      c.scalars["policy.baseline"] = policy_->baseline;
      c.counters["policy.updates"] = policy_->updates;
    }
    for (const char* name : kAppendOnly) c.counters[std::string("bytes.") + name] = file_size_or_zero(dir_ / name);
    save_checkpoint(dir_ / "checkpoint.bin", c);
  }

  void restore() {
    const Checkpoint c = load_checkpoint(dir_ / "checkpoint.bin");
    if (c.config_text != config_text_) throw ConfigError("config differs from the one stored in the checkpoint");
    epoch_ = c.epoch;
    step_ = c.step;
    restore_tensors(model_->parameters(), c.groups.at("model"), "model");
    sgd_->velocity() = c.groups.at("velocity");
    if (policy_) {
      restore_tensors(policy_->params, c.groups.at("policy"), "policy");
      policy_->baseline = c.scalars.at("policy.baseline");
      policy_->updates = c.counters.at("policy.updates");
    }
    // Drop anything appended after the checkpoint was taken.
    for (const char* name : kAppendOnly) {
      const auto it = c.counters.find(std::string("bytes.") + name);
      if (it != c.counters.end() && fs::exists(dir_ / name)) fs::resize_file(dir_ / name, it->second);
    }
  }

  RunConfig config_;
  fs::path dir_;
  RunOptions options_;
  std::string config_text_;
  Dataset data_;
  std::optional<Model> model_;
  std::optional<Sgd> sgd_;
  std::optional<LrSchedule> schedule_;
  std::optional<PolicyState> policy_;
  std::size_t steps_per_epoch_ = 0;
  std::size_t epoch_ = 0;
  std::size_t step_ = 0;
};

std::string format_p_set(const std::vector<std::size_t>& ps) {
  std::string s;
  for (std::size_t i = 0; i < ps.size(); ++i) s += (i ? ";" : "") + std::to_string(ps[i]);
  return s;
}

}  // namespace

fs::path resolve_data_root(const DataConfig& data) {
  if (!data.root.empty()) return data.root;
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  throw ConfigError(std::string("data.root is empty and ") + kDataRootEnv + " is not set");
}

Dataset load_dataset(const RunConfig& config) { return load_dataset_impl(config, true); }

void write_epoch_header(std::ostream& out, const std::string& config_text) {
  write_config_comment(out, config_text);
  out << "run_id,epoch,train_loss,lr,train_acc,val_acc,val_ece\n";
}

void write_epoch_row(std::ostream& out, const EpochMetrics& m) {
  const auto old_precision = out.precision(17);
  out << m.run_id << ',' << m.epoch << ',' << m.train_loss << ',' << m.lr << ',' << m.train_acc << ',' << m.val_acc
      << ',' << m.val_ece << '\n';
  out.precision(old_precision);
}

std::vector<EpochMetrics> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<EpochMetrics> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream row(line);
    EpochMetrics m;
    std::string field;
    std::vector<std::string> f;
    while (std::getline(row, field, ',')) f.push_back(field);
    if (f.size() != 7) throw std::runtime_error("malformed metrics row: " + line);
    m.run_id = f[0];
    m.epoch = std::stoul(f[1]);
    m.train_loss = std::stod(f[2]);
    m.lr = std::stod(f[3]);
    m.train_acc = std::stod(f[4]);
    m.val_acc = std::stod(f[5]);
    m.val_ece = std::stod(f[6]);
    out.push_back(m);
  }
  return out;
}

RunResult run_training(const RunConfig& config, const fs::path& out_dir, const RunOptions& options) {
  return Trainer(config, out_dir, options).run();
}

EvalResult run_evaluation(const fs::path& checkpoint, const RunConfig& config, const fs::path& out_dir) {
  config.validate();
  const Checkpoint c = load_checkpoint(checkpoint);
  const RunConfig trained = parse_config(c.config_text);
  if (trained.data.channels != config.data.channels || trained.data.side != config.data.side ||
      trained.data.classes != config.data.classes) {
    throw ConfigError("evaluation data does not match the checkpoint's input shape or class count");
  }
  Rng unused(0);
  Model model = make_model(trained.model, trained.model_options(), unused);
  restore_tensors(model.parameters(), c.groups.at("model"), "model");
  const Dataset data = load_dataset_impl(config, false);
  ensure_fresh_dir(out_dir);
  const EvalResult r = evaluate(model, data.test, data.meta, config.eval);
  const std::string text = serialize_config(config);
  write_eval_csv(out_dir / "eval.csv", text, metric_rows(trained.run_id, c.epoch, r, config.eval));

  std::vector<LabeledImage> test = data.test;
  std::vector<PredictionRecord> records;
  for (std::size_t start = 0; start < test.size(); start += config.eval.batch_size) {
    const std::size_t count = std::min(config.eval.batch_size, test.size() - start);
    std::vector<Tensor> xs;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < count; ++i) {
      xs.push_back(normalize(test[start + i].pixels, data.meta));
      labels.push_back(test[start + i].label);
    }
    const auto recs = records_from_logits(model.logits(stack(xs)), labels);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  std::ofstream cal(out_dir / "calibration.csv", std::ios::binary);
  write_config_comment(cal, text);
  write_calibration_csv(cal, calibration_bins(records, config.eval.ece_bins));
  return r;
}

std::vector<SweepCell> sweep_cells(const SweepConfig& sweep) {
  std::vector<SweepCell> cells;
  for (const auto& ps : sweep.p_sets) {
    for (std::size_t k : sweep.k_values) {
      for (double a : sweep.alphas) cells.push_back({ps, k, a});
    }
  }
  return cells;
}

std::vector<RunResult> run_sweep(const RunConfig& config, const fs::path& out_dir, std::size_t jobs,
                                 std::ostream* progress) {
  config.validate();
  const std::vector<SweepCell> cells = sweep_cells(config.sweep);
  std::vector<RunConfig> cell_configs;
  for (const SweepCell& cell : cells) {
    RunConfig c = config;
    c.mix.p_set = cell.p_set;
    c.mix.k = cell.k;
    c.mix.alpha = cell.alpha;
    c.validate();
    cell_configs.push_back(std::move(c));
  }
  ensure_fresh_dir(out_dir);

  std::vector<RunResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        RunOptions opts;
        opts.progress = jobs <= 1 ? progress : nullptr;
        results[i] = run_training(cell_configs[i], out_dir / ("cell_" + std::to_string(i)), opts);
        if (progress && jobs > 1) {
          std::lock_guard lock(progress_mutex);
          *progress << "cell " << i << " done" << std::endl;
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, cells.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ofstream out(out_dir / "summary.csv", std::ios::binary);
  write_config_comment(out, serialize_config(config));
  out << "cell,run_id,p_set,k,alpha,train_loss,val_acc,val_ece,test_acc,test_ece,fgsm_error\n";
  out.precision(17);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const EpochMetrics& last = results[i].epochs.back();
    const EvalResult& ev = *results[i].final_eval;
    out << i << ',' << cell_configs[i].run_id << ',' << format_p_set(cells[i].p_set) << ',' << cells[i].k << ','
        << cells[i].alpha << ',' << last.train_loss << ',' << last.val_acc << ',' << last.val_ece << ',' << ev.accuracy
        << ',' << ev.ece << ',' << (config.eval.fgsm ? ev.fgsm_error() : std::nan("")) << '\n';
  }
  return results;
}

}  // namespace rmix
