// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "rmix/config.hpp"
#include "rmix/dataio.hpp"
#include "rmix/netlib.hpp"
#include "rmix/rlmix.hpp"
#include "rmix/rng.hpp"
#include "rmix/tensor.hpp"

namespace rmix::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

/// Central finite difference of f at x (x is restored afterwards).
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-5) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Fresh, empty directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("rmix_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Deterministic 10-class CIFAR-layout records: pixel bytes are a function of
/// (index, position), labels cycle through the classes.
inline std::vector<std::uint8_t> synthetic_cifar_bytes(std::size_t count, std::uint64_t seed = 7) {
  Rng rng(seed);
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(static_cast<std::uint8_t>(i % 10));
    for (std::size_t k = 0; k < 3072; ++k) out.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
  }
  return out;
}

/// Config for a tiny run over CIFAR-layout files in `root`.
inline RunConfig tiny_config(const std::filesystem::path& root, std::size_t train, std::size_t test) {
  RunConfig c;
  c.run_id = "tiny";
  c.data.root = root.string();
  c.data.train_files = {"train.bin"};
  c.data.test_files = {"test.bin"};
  c.data.train_subset = train;
  c.data.test_subset = test;
  c.cnn.conv_channels = {4, 8};
  c.cnn.hidden = 16;
  c.train.epochs = 2;
  c.train.batch_size = 10;
  c.eval.batch_size = 10;
  return c;
}

/// Writes train.bin / test.bin with `train` and `test` synthetic records.
inline void write_tiny_dataset(const std::filesystem::path& root, std::size_t train, std::size_t test) {
  write_bytes(root / "train.bin", synthetic_cifar_bytes(train, 7));
  write_bytes(root / "test.bin", synthetic_cifar_bytes(test, 8));
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Two-armed bandit with a constant observation: arm 0 pays 1, arm 1 pays 0.
/// Starts from the uniform policy (zeroed output layer), runs up to
/// `max_updates` single-transition updates and returns the number of updates
/// after which P(arm 0) first reached `target`, or max_updates + 1 if it
/// never did.
inline std::size_t bandit_updates_to(double target, std::uint64_t seed, std::size_t max_updates = 2000) {
  Rng init(seed);
  PolicyOptions opts;
  opts.input_dim = 1;
  opts.actions = 2;
  PolicyState policy = make_policy(opts, init);
  policy.params[2].fill(0.0);
  policy.params[3].fill(0.0);
  Rng rng = init.fork(1);
  const Tensor obs = Tensor({1, 1}, 1.0);
  for (std::size_t u = 1; u <= max_updates; ++u) {
    const std::size_t a = select_actions(policy, obs, rng)[0];
    const Transition t{Tensor::vector({1.0}), a, a == 0 ? 1.0 : 0.0};
    policy_update(policy, std::span<const Transition>(&t, 1));
    if (action_probabilities(policy, obs)[0] >= target) return u;
  }
  return max_updates + 1;
}

}  // namespace rmix::testing
