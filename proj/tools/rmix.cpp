// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

// rmix: train, evaluate, sweep and run the RL controller from a config file.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rmix/config.hpp"
#include "rmix/errors.hpp"
#include "rmix/runner.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override run.seed");
  cmd->add_option("--set", c.overrides, "Override a config key, key=value (repeatable)");
}

rmix::RunConfig load(const Common& c) {
  rmix::RunConfig config = rmix::load_config(c.config_path);
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw rmix::ConfigError("--set expects key=value, got '" + kv + "'");
    rmix::set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

void print_eval(const rmix::EvalResult& r, bool fgsm) {
  std::cout << "test_acc " << r.accuracy << " ece " << r.ece;
  if (fgsm) std::cout << " fgsm_error " << r.fgsm_error();
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Per-batch buffers are large and short-lived; keeping them off mmap avoids
  // a page-fault storm on every step.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"R-Mix training and evaluation"};
  app.require_subcommand(1);

  Common train_opts;
  bool resume = false;
  std::optional<std::size_t> stop_after;
  auto* train = app.add_subcommand("train", "Train one model");
  add_common(train, train_opts);
  train->add_option("--out", train_opts.out, "Output directory (must not exist unless resuming)")->required();
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.bin");
  train->add_option("--stop-after-epoch", stop_after, "Stop once this many epochs are complete");

  Common rl_opts;
  bool rl_resume = false;
  auto* rl = app.add_subcommand("rlmix", "Train a model jointly with the top-k controller");
  add_common(rl, rl_opts);
  rl->add_option("--out", rl_opts.out, "Output directory")->required();
  rl->add_flag("--resume", rl_resume, "Continue from <out>/checkpoint.bin");

  Common eval_opts;
  std::string checkpoint;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint: accuracy, ECE, FGSM error");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", checkpoint, "checkpoint.bin of a run")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_opts.out, "Output directory for eval.csv and calibration.csv")->required();

  Common sweep_opts;
  std::size_t jobs = 1;
  auto* sweep = app.add_subcommand("sweep", "Run the p-set x K x alpha grid");
  add_common(sweep, sweep_opts);
  sweep->add_option("--out", sweep_opts.out, "Output directory")->required();
  sweep->add_option("--jobs", jobs, "Cells to run concurrently")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train || *rl) {
      const bool is_rl = static_cast<bool>(*rl);
      const Common& c = is_rl ? rl_opts : train_opts;
      rmix::RunOptions opts;
      opts.mode = is_rl ? rmix::RunMode::kRlMix : rmix::RunMode::kTrain;
      opts.resume = is_rl ? rl_resume : resume;
      opts.stop_after_epoch = is_rl ? std::nullopt : stop_after;
      opts.progress = &std::cerr;
      const rmix::RunConfig config = load(c);
      const rmix::RunResult r = rmix::run_training(config, c.out, opts);
      if (r.final_eval) print_eval(*r.final_eval, config.eval.fgsm);
    } else if (*eval) {
      const rmix::RunConfig config = load(eval_opts);
      print_eval(rmix::run_evaluation(checkpoint, config, eval_opts.out), config.eval.fgsm);
    } else if (*sweep) {
      const rmix::RunConfig config = load(sweep_opts);
      rmix::run_sweep(config, sweep_opts.out, jobs, &std::cerr);
      std::cout << (std::filesystem::path(sweep_opts.out) / "summary.csv").string() << '\n';
    }
  } catch (const rmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const rmix::ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
