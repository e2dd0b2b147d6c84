// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rmix/config.hpp"
#include "rmix/dataio.hpp"
#include "rmix/evalsuite.hpp"

namespace rmix {

/// Environment variable consulted when data.root is empty.
inline constexpr const char* kDataRootEnv = "RMIX_DATA_ROOT";

struct Dataset {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  DatasetMeta meta;
};

std::filesystem::path resolve_data_root(const DataConfig& data);

/// Reads and subsets the configured files. Subsets are drawn from a stream
/// derived from the run seed. Throws ConfigError for missing files or
/// oversized subsets and ParseError for malformed bytes.
Dataset load_dataset(const RunConfig& config);

struct EpochMetrics {
  std::string run_id;
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double lr = 0.0;  ///< rate of the epoch's last step
  double train_acc = 0.0;
  double val_acc = 0.0;
  double val_ece = 0.0;
};

/// metrics.csv: '#'-prefixed config lines, then
/// "run_id,epoch,train_loss,lr,train_acc,val_acc,val_ece".
void write_epoch_header(std::ostream& out, const std::string& config_text);
void write_epoch_row(std::ostream& out, const EpochMetrics& m);
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);

enum class RunMode { kTrain, kRlMix };

struct RunOptions {
  RunMode mode = RunMode::kTrain;
  /// Continue from <out>/checkpoint.bin instead of starting fresh.
  bool resume = false;
  /// Stop (as if interrupted) once this many epochs are complete.
  std::optional<std::size_t> stop_after_epoch;
  /// Progress lines; null for silence.
  std::ostream* progress = nullptr;
};

struct RunResult {
  std::filesystem::path dir;
  std::vector<EpochMetrics> epochs;  ///< every completed epoch, including resumed ones
  bool finished = false;
  std::optional<EvalResult> final_eval;  ///< present once the last epoch is done
};

/// Trains one model. Output directory layout:
///   config.cfg        canonical config
///   metrics.csv       one row per epoch
///   eval.csv          final evaluation, long format (run_id,epoch,metric,value)
///   checkpoint.bin    state after the latest epoch
///   transitions.csv   controller transitions (rlmix mode)
///   provenance.csv    mixing provenance (debug.dump_provenance)
///   saliency.csv      first-batch grids per epoch (debug.dump_saliency)
///   run.log           timestamps; the only non-reproducible file
/// A fresh run refuses an existing directory.
RunResult run_training(const RunConfig& config, const std::filesystem::path& out_dir, const RunOptions& options = {});

/// Evaluates a checkpoint on the test split of `config` (the model
/// architecture comes from the config stored in the checkpoint) and writes
/// <out_dir>/eval.csv plus calibration.csv.
EvalResult run_evaluation(const std::filesystem::path& checkpoint, const RunConfig& config,
                          const std::filesystem::path& out_dir);

struct SweepCell {
  std::vector<std::size_t> p_set;
  std::size_t k = 0;
  double alpha = 0.0;
};

/// Cells of the p-set x K x alpha grid in row-major order.
std::vector<SweepCell> sweep_cells(const SweepConfig& sweep);

/// Runs every cell as an independent training run under <out>/cell_<i>,
/// each with the master seed, and writes <out>/summary.csv. `jobs` > 1 runs
/// cells concurrently; results do not depend on it.
std::vector<RunResult> run_sweep(const RunConfig& config, const std::filesystem::path& out_dir, std::size_t jobs = 1,
                                 std::ostream* progress = nullptr);

}  // namespace rmix
