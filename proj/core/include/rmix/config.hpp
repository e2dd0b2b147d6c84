// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rmix/evalsuite.hpp"
#include "rmix/mixers.hpp"
#include "rmix/netlib.hpp"

namespace rmix {

enum class DataFormat { kCifar10, kCifar100, kIdx };
enum class ScheduleKind { kOneCycle, kMultiStep };

struct DataConfig {
  DataFormat format = DataFormat::kCifar10;
  /// Directory holding the dataset files; empty means $RMIX_DATA_ROOT.
  std::string root;
  /// File names relative to root. For IDX data: images file, then labels file.
  std::vector<std::string> train_files{"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin",
                                       "data_batch_5.bin"};
  std::vector<std::string> test_files{"test_batch.bin"};
  std::size_t classes = 10;
  std::size_t channels = 3;
  std::size_t side = 32;
  std::size_t train_subset = 5000;  ///< 0 keeps every image
  std::size_t test_subset = 1000;
  std::vector<double> mean{0.4914, 0.4822, 0.4465};
  std::vector<double> stddev{0.2470, 0.2435, 0.2616};
  std::size_t crop_padding = 2;
  bool flip = true;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 100;
  LossKind loss = LossKind::kSigmoidBce;
};

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kOneCycle;
  OneCycleSchedule one_cycle;
  double base_lr = 0.1;
  /// Epochs after which the multi-step rate is multiplied by gamma.
  std::vector<std::size_t> milestone_epochs{15, 23};
  double gamma = 0.1;
};

struct RlConfig {
  std::size_t hidden = 64;
  double learning_rate = 0.01;
  double baseline_decay = 0.99;
  std::size_t grid = 8;
  bool per_batch_reward = false;
};

struct SweepConfig {
  /// Each entry is one p set.
  std::vector<std::vector<std::size_t>> p_sets{{2, 4}};
  std::vector<std::size_t> k_values{10};
  std::vector<double> alphas{1.0};
};

struct DebugConfig {
  bool dump_provenance = false;
  bool dump_saliency = false;
};

/// Complete description of one run. (config, seed) determines every output
/// byte apart from the timestamps in run.log.
struct RunConfig {
  std::string run_id = "run";
  std::uint64_t seed = 0;
  DataConfig data;
  std::string model = "small_cnn";
  /// Conv widths and hidden size; input extents and class count come from
  /// the data section.
  SmallCnnOptions cnn{3, 32, 10, {16, 32}, 64};
  TrainConfig train;
  SgdOptions optim;
  ScheduleConfig sched;
  MixPolicy mix;
  EvalOptions eval;
  RlConfig rl;
  SweepConfig sweep;
  DebugConfig debug;

  /// Field-level checks that need no file system access. Throws ConfigError.
  void validate() const;
  DatasetMeta meta() const;
  SmallCnnOptions model_options() const;
};

/// Parses the flat "key = value" format: one assignment per line, '#' starts
/// a comment, unknown or repeated keys are errors. Keys absent from the text
/// keep their defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Applies one assignment with the same rules as the file format.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Canonical text of every key in a fixed order; parse_config of the result
/// reproduces the config.
std::string serialize_config(const RunConfig& config);

/// Every recognised key, in canonical order.
std::vector<std::string> config_keys();

std::string to_string(DataFormat f);
std::string to_string(ScheduleKind k);
std::string to_string(LossKind k);

}  // namespace rmix
