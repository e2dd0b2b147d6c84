// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion. The default suite runs
// the fast property checks; `--suite trend` runs the multi-seed CIFAR-10
// training comparison, which takes about an hour on one core.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "rmix/checkpoint.hpp"
#include "rmix/dataio.hpp"
#include "rmix/errors.hpp"
#include "rmix/evalsuite.hpp"
#include "rmix/kernels.hpp"
#include "rmix/mixers.hpp"
#include "rmix/netlib.hpp"
#include "rmix/rlmix.hpp"
#include "rmix/runner.hpp"
#include "rmix/saliency.hpp"
#include "support/support.hpp"

namespace fs = std::filesystem;
using namespace rmix;
using rmix::testing::random_tensor;
using rmix::testing::relative_error;

namespace {

// Tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr double kSimplexTol = 1e-6;
constexpr double kMixupTol = 1e-6;
constexpr double kQuantileTol = 1e-12;
constexpr double kGridSumTol = 1e-6;
constexpr double kEceTol = 1e-15;
constexpr double kResumeTol = 1e-6;
constexpr double kBanditTarget = 0.9;
constexpr std::size_t kBanditUpdates = 2000;
constexpr double kRunSecondsLimit = 15 * 60;
constexpr double kGradSecondsLimit = 60;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_++ < 5) notes_ << (notes_.tellp() > 0 ? "; " : "") << what;
  }
  Outcome finish(const std::string& ok_detail) const {
    if (failures_ == 0) return {true, ok_detail};
    return {false, std::to_string(failures_) + " failed check(s): " + notes_.str()};
  }

 private:
  std::size_t failures_ = 0;
  std::ostringstream notes_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Tensor> random_maps(std::size_t n, std::size_t side, Rng& rng) {
  std::vector<Tensor> maps;
  for (std::size_t i = 0; i < n; ++i) maps.push_back(random_tensor({side, side}, rng, 0.0, 1.0));
  return maps;
}

Tensor random_labels(std::size_t batch, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> y(batch);
  for (auto& v : y) v = rng.uniform_index(classes);
  return one_hot(y, classes);
}

// 1. Every parameter and input gradient of a two-conv, two-dense network
//    against central differences.
Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  Model model = make_small_cnn({3, 8, 10, {4, 8}, 16}, rng);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor y = random_labels(2, 10, rng);
  Checker c;
  double worst = 0;
  std::size_t checked = 0;
  for (LossKind kind : {LossKind::kSigmoidBce, LossKind::kSoftmaxCrossEntropy}) {
    const BatchGradients g = compute_gradients(model, x, y, kind);
    auto loss_now = [&] { return compute_gradients(model, x, y, kind).loss; };
    for (std::size_t p = 0; p < model.parameters().size(); ++p) {
      for (std::size_t i = 0; i < model.parameters()[p].size(); ++i) {
        const double fd = rmix::testing::central_difference(loss_now, model.parameters()[p][i], kFdStep);
        const double err = relative_error(g.grads[p][i], fd);
        worst = std::max(worst, err);
        ++checked;
        c.expect(err <= kGradRelTol, "param " + std::to_string(p) + "[" + std::to_string(i) + "] rel " + fmt(err));
      }
    }
    Tensor xi = x;
    const Tensor gx = grad_wrt_input(model, xi, y, kind);
    // The input gradient is of the summed loss; the batch loss is a mean.
    auto summed = [&] { return 2.0 * compute_gradients(model, xi, y, kind).loss; };
    for (std::size_t i = 0; i < xi.size(); ++i) {
      const double fd = rmix::testing::central_difference(summed, xi[i], kFdStep);
      const double err = relative_error(gx[i], fd);
      worst = std::max(worst, err);
      ++checked;
      c.expect(err <= kGradRelTol, "input[" + std::to_string(i) + "] rel " + fmt(err));
    }
  }
  const double secs = seconds_since(t0);
  c.expect(secs < kGradSecondsLimit, "took " + fmt(secs) + " s");
  return c.finish(std::to_string(checked) + " entries, max rel err " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s");
}

// 2. Soft labels from 1,000 seeded invocations of each mixing method.
Outcome label_simplex() {
  Checker c;
  double worst = 0;
  for (MixVariant v : {MixVariant::kRMix, MixVariant::kCutMix, MixVariant::kInputMixup}) {
    MixPolicy policy;
    policy.variant = v;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      Rng data(seed);
      const std::size_t batch = 2 + data.uniform_index(7);
      const std::size_t classes = 2 + data.uniform_index(9);
      const Tensor images = random_tensor({batch, 3, 8, 8}, data);
      const Tensor labels = random_labels(batch, classes, data);
      const auto maps = random_maps(batch, 8, data);
      policy.alpha = 0.2 + data.uniform() * 2.0;
      Rng rng = data.fork(1);
      const MixedBatch m = mix_batch(images, labels, policy, rng, maps);
      for (std::size_t i = 0; i < batch; ++i) {
        double total = 0;
        for (std::size_t k = 0; k < classes; ++k) {
          const double p = m.labels.at(i, k);
          c.expect(p >= 0.0 && p <= 1.0, to_string(v) + " entry outside [0,1]");
          total += p;
        }
        worst = std::max(worst, std::abs(total - 1.0));
        c.expect(std::abs(total - 1.0) <= kSimplexTol, to_string(v) + " seed " + std::to_string(seed) + " sum " + fmt(total, 17));
      }
    }
  }
  return c.finish("3 x 1000 invocations, max |sum - 1| = " + fmt(worst, 3));
}

// 3. Exact degenerations.
Outcome degenerations() {
  Checker c;
  Rng rng(303);
  const Tensor y0 = Tensor::vector({1, 0, 0}), y1 = Tensor::vector({0, 0.5, 0.5});
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const Tensor x = random_tensor({3, 8, 8}, rng), x1 = random_tensor({3, 8, 8}, rng);
    const std::size_t p = t % 2 == 0 ? 2 : 4;
    SaliencyGrid g0{random_tensor({p, p}, rng, 0.0, 1.0), 0, p}, g1{random_tensor({p, p}, rng, 0.0, 1.0), 1, p};
    const double q = topk_space(10)[rng.uniform_index(10)];
    const double lam = rng.uniform();
    const PatchMask m0 = build_mask(g0, q, 8);
    const MixedPair self = rmix_pair(x, y0, x, y0, m0, m0, lam);
    c.expect(self.image == x && self.label == y0, "self-mix not bitwise identical");

    const MixedPair rz = rmix_pair(x, y0, x1, y1, build_mask(g0, 0.0, 8), build_mask(g1, 0.0, 8), lam);
    const MixedPair im = input_mixup_pair(x, y0, x1, y1, lam);
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(rz.image[i] - im.image[i]));
    for (std::size_t i = 0; i < 3; ++i) worst = std::max(worst, std::abs(rz.label[i] - im.label[i]));

    const MixedPair c1 = cutmix_pair(x, y0, x1, y1, 1.0, rng);
    const MixedPair c0 = cutmix_pair(x, y0, x1, y1, 0.0, rng);
    c.expect(c1.image == x && c1.label == y0, "CutMix at lambda 1 differs from x0");
    c.expect(c0.image == x1 && c0.label == y1, "CutMix at lambda 0 differs from x1");
  }
  c.expect(worst <= kMixupTol, "q=0 vs mixup deviation " + fmt(worst));
  return c.finish("200 cases; q=0 vs mixup max deviation " + fmt(worst, 3));
}

// 4. Quantile against sort-and-interpolate.
Outcome quantile_oracle() {
  Checker c;
  Rng rng(404);
  double worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.uniform_index(200);
    std::vector<double> v(n);
    for (auto& e : v) e = rng.uniform(-10.0, 10.0);
    if (t % 5 == 0) v[rng.uniform_index(n)] = v[0];  // ties
    const double q = t % 10 == 0 ? static_cast<double>(t % 3) / 2.0 : rng.uniform();
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    const double pos = q * static_cast<double>(n - 1);
    const double lo = std::floor(pos);
    const auto i = static_cast<std::size_t>(lo);
    const double want = i + 1 < n ? s[i] + (pos - lo) * (s[i + 1] - s[i]) : s[i];
    const double got = quantile(v, q);
    worst = std::max(worst, std::abs(got - want));
    c.expect(std::abs(got - want) <= kQuantileTol, "n=" + std::to_string(n) + " q=" + fmt(q, 17));
  }
  return c.finish("1000 cases, max abs err " + fmt(worst, 3));
}

// 5. Grid normalization and invariance of masks to gradient scale.
Outcome saliency_normalization() {
  Checker c;
  Rng rng(505);
  const Model model = make_small_cnn({3, 16, 10, {4, 8}, 16}, rng);
  const Tensor batch = random_tensor({16, 3, 16, 16}, rng);
  const Tensor labels = random_labels(16, 10, rng);
  const Tensor grads = grad_wrt_input(model, batch, labels);
  double worst = 0;
  std::size_t grids = 0, masks = 0;
  for (std::size_t b = 0; b < 16; ++b) {
    const Tensor g = grads.slice0(b);
    const Tensor phi = saliency_from_gradient(g);
    for (std::size_t p : {2u, 4u, 8u, 16u}) {
      for (PoolMode mode : {PoolMode::kGridSide, PoolMode::kKernelSide}) {
        const SaliencyGrid grid = normalize_and_pool(phi, p, mode);
        worst = std::max(worst, std::abs(sum(grid.grid) - 1.0));
        ++grids;
        for (double factor : {1e-8, 0.3, 3.0, 7.7e6}) {
          const SaliencyGrid scaled = normalize_and_pool(saliency_from_gradient(scale(g, factor)), p, mode);
          worst = std::max(worst, std::abs(sum(scaled.grid) - 1.0));
          ++grids;
          for (double q : topk_space(10)) {
            const auto a = build_mask(grid, q, 16), s = build_mask(scaled, q, 16);
            c.expect(a.grid == s.grid && a.pixels == s.pixels, "mask changed under scale " + fmt(factor));
            ++masks;
          }
        }
      }
    }
  }
  c.expect(worst <= kGridSumTol, "grid sum off by " + fmt(worst));
  return c.finish(std::to_string(grids) + " grids, max |sum - 1| = " + fmt(worst, 3) + "; " + std::to_string(masks) +
                  " scaled masks bitwise equal");
}

// 6. One-cycle anchors.
Outcome scheduler_anchors() {
  Checker c;
  for (std::size_t total : {1000u, 1500u, 3000u}) {
    const LrSchedule s(OneCycleSchedule{}, total);
    const std::size_t peak = total * 3 / 10;
    c.expect(s.lr_at(0) == 3e-3, "step 0 gives " + fmt(s.lr_at(0), 17));
    c.expect(s.peak_step() == peak && s.lr_at(peak) == 0.3, "peak gives " + fmt(s.lr_at(peak), 17));
    c.expect(s.lr_at(total) == 3e-5, "final step gives " + fmt(s.lr_at(total), 17));
  }
  return c.finish("3e-3 / 0.3 / 3e-5 exact for 1000, 1500 and 3000 steps");
}

// 8. Expected calibration error.
Outcome ece_correctness() {
  Checker c;
  auto rec = [](double conf, bool ok) { return PredictionRecord{conf, 0, ok ? 0u : 1u}; };
  const std::vector<PredictionRecord> two{rec(0.9, true), rec(0.7, false)};
  const double e2 = ece(two);
  c.expect(std::abs(e2 - 0.4) <= kEceTol, "two-record case gives " + fmt(e2, 17));
  // Hand-computed: bins (0.6,0.8] and (0.8,1.0] at 5 bins.
  const std::vector<PredictionRecord> four{rec(0.65, true), rec(0.75, false), rec(0.85, true), rec(0.95, true)};
  const double want4 = 0.5 * std::abs(0.5 - 0.7) + 0.5 * std::abs(1.0 - 0.9);
  c.expect(std::abs(ece(four, 5) - want4) <= kEceTol, "four-record case gives " + fmt(ece(four, 5), 17));
  std::vector<PredictionRecord> perfect;
  for (std::size_t b = 1; b <= 8; ++b) {
    // b correct out of 8 at confidence b/8; dyadic values keep every mean exact.
    for (std::size_t i = 0; i < 8; ++i) perfect.push_back(rec(static_cast<double>(b) / 8.0, i < b));
  }
  c.expect(ece(perfect, 8) == 0.0, "calibrated set gives " + fmt(ece(perfect, 8), 17));
  c.expect(ece(std::vector<PredictionRecord>{rec(1.0, true)}, 15) == 0.0, "single confident hit not 0");
  return c.finish("0.4 two-record case, four-record case " + fmt(want4) + ", calibrated set 0");
}

// 9. FGSM bound and identity (the clean-vs-attacked ordering runs in the
//    trend suite, on trained checkpoints).
Outcome fgsm_properties() {
  Checker c;
  Rng rng(909);
  const Model model = make_small_cnn({3, 16, 10, {4, 8}, 16}, rng);
  DatasetMeta meta;
  meta.side = 16;
  meta.mean = {0.4914, 0.4822, 0.4465};
  meta.stddev = {0.2470, 0.2435, 0.2616};
  const Tensor raw = random_tensor({100, 3, 16, 16}, rng, 0.0, 1.0);
  std::vector<std::size_t> labels(100);
  for (auto& l : labels) l = rng.uniform_index(10);
  const double eps = 8.0 / 255.0;
  const Tensor adv = fgsm_attack(model, raw, labels, eps, meta);
  double linf = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) linf = std::max(linf, std::abs(adv[i] - raw[i]));
  c.expect(linf <= eps, "l_inf " + fmt(linf, 17) + " exceeds eps");
  c.expect(fgsm_attack(model, raw, labels, 0.0, meta) == raw, "eps = 0 changed the input");
  return c.finish("100 images, max l_inf " + fmt(linf, 6) + " <= " + fmt(eps, 6) + "; eps = 0 identity");
}

// 10. Controller learning loop and reward identity.
Outcome rl_sanity() {
  Checker c;
  std::string per_seed;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const std::size_t n = rmix::testing::bandit_updates_to(kBanditTarget, seed, kBanditUpdates);
    c.expect(n <= kBanditUpdates, "seed " + std::to_string(seed) + " never reached the target");
    per_seed += (per_seed.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + ": " + std::to_string(n);
  }
  Rng rng(1010);
  const Model model = make_small_cnn({3, 8, 10, {4, 8}, 16}, rng);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const Tensor x = random_tensor({3, 8, 8}, rng);
    const Tensor y = random_labels(1, 10, rng).reshaped({10});
    worst = std::max(worst, std::abs(reward(model, x, x, y) - 1.0));
  }
  c.expect(worst <= 1e-12, "reward(x, x) deviates from 1 by " + fmt(worst));
  return c.finish("updates to P >= 0.9: " + per_seed + "; reward(x, x) = 1 within " + fmt(worst, 2));
}

// 11. Byte-exact parser round trips and offset-bearing truncation errors.
Outcome parsers() {
  Checker c;
  Rng rng(1111);
  auto truncation_reports_offset = [&](const std::function<void(std::span<const std::uint8_t>)>& parse,
                                       const std::vector<std::uint8_t>& bytes, const std::string& name) {
    for (std::size_t cut : {std::size_t{1}, bytes.size() / 3 + 1, bytes.size() - 1}) {
      try {
        parse(std::span(bytes.data(), cut));
        c.expect(false, name + " accepted a truncated buffer");
      } catch (const ParseError& e) {
        c.expect(e.offset() <= cut && std::string(e.what()).find("offset") != std::string::npos,
                 name + " error lacks a valid offset");
      }
    }
  };

  const auto cifar10 = rmix::testing::synthetic_cifar_bytes(25, 3);
  c.expect(serialize_cifar_binary(parse_cifar_binary(cifar10, CifarLayout::kCifar10), CifarLayout::kCifar10) == cifar10,
           "CIFAR-10 round trip differs");
  truncation_reports_offset([](auto b) { parse_cifar_binary(b, CifarLayout::kCifar10); }, cifar10, "CIFAR-10");

  std::vector<std::uint8_t> cifar100;
  for (std::size_t i = 0; i < 12; ++i) {
    cifar100.push_back(static_cast<std::uint8_t>(i % 20));
    cifar100.push_back(static_cast<std::uint8_t>((i * 7) % 100));
    for (std::size_t k = 0; k < 3072; ++k) cifar100.push_back(static_cast<std::uint8_t>(rng.uniform_index(256)));
  }
  c.expect(serialize_cifar_binary(parse_cifar_binary(cifar100, CifarLayout::kCifar100), CifarLayout::kCifar100) ==
               cifar100,
           "CIFAR-100 round trip differs");
  truncation_reports_offset([](auto b) { parse_cifar_binary(b, CifarLayout::kCifar100); }, cifar100, "CIFAR-100");

  Tensor images({6, 5, 4});
  for (auto& v : images.data()) v = static_cast<double>(rng.uniform_index(256));
  const auto idx = serialize_idx(images);
  c.expect(serialize_idx(parse_idx(idx)) == idx, "IDX ubyte round trip differs");
  Tensor reals({3, 2});
  for (auto& v : reals.data()) v = rng.normal();
  const auto idxd = serialize_idx(reals, IdxType::kDouble);
  c.expect(serialize_idx(parse_idx(idxd), IdxType::kDouble) == idxd, "IDX double round trip differs");
  truncation_reports_offset([](auto b) { parse_idx(b); }, idx, "IDX");
  return c.finish("CIFAR-10, CIFAR-100, IDX (ubyte, double) round trips byte-exact; truncations carry offsets");
}

// 12. Determinism and resume equivalence of the training command.
Outcome reproducibility() {
  Checker c;
  rmix::testing::TempDir dir("acceptance12");
  rmix::testing::write_tiny_dataset(dir.path(), 40, 20);
  RunConfig config = rmix::testing::tiny_config(dir.path(), 40, 20);
  config.train.epochs = 3;
  run_training(config, dir / "a");
  run_training(config, dir / "b");
  c.expect(rmix::testing::read_text(dir / "a" / "metrics.csv") == rmix::testing::read_text(dir / "b" / "metrics.csv"),
           "metrics CSVs differ");

  RunOptions stop;
  stop.stop_after_epoch = 1;
  run_training(config, dir / "r", stop);
  RunOptions resume;
  resume.resume = true;
  const RunResult resumed = run_training(config, dir / "r", resume);
  const auto full = read_metrics_csv(dir / "a" / "metrics.csv");
  const auto part = read_metrics_csv(dir / "r" / "metrics.csv");
  double worst = 0;
  c.expect(full.size() == part.size() && resumed.finished, "resumed run incomplete");
  for (std::size_t e = 0; e < std::min(full.size(), part.size()); ++e) {
    for (auto f : {&EpochMetrics::train_loss, &EpochMetrics::lr, &EpochMetrics::train_acc, &EpochMetrics::val_acc,
                   &EpochMetrics::val_ece}) {
      worst = std::max(worst, std::abs(full[e].*f - part[e].*f));
    }
  }
  c.expect(worst <= kResumeTol, "resume deviation " + fmt(worst));
  return c.finish("metrics byte-identical; resume from epoch 1 of 3 deviates by " + fmt(worst, 3));
}

// 7 (and the trained-checkpoint half of 9). Twelve 30-epoch runs.
struct TrendRun {
  std::string arm;
  std::uint64_t seed;
  EvalResult eval;
  double seconds;
};

RunConfig trend_config(const std::string& arm, std::uint64_t seed, const fs::path& data_root) {
  RunConfig c;
  c.run_id = arm + "_s" + std::to_string(seed);
  c.seed = seed;
  c.data.root = data_root.string();
  if (arm == "vanilla") c.mix.variant = MixVariant::kNone;
  if (arm.rfind("cutmix", 0) == 0) c.mix.variant = MixVariant::kCutMix;
  if (arm == "cutmix_multistep") c.sched.kind = ScheduleKind::kMultiStep;
  c.validate();
  return c;
}

std::vector<Outcome> trend(const fs::path& data_root, const fs::path& work, std::size_t epochs) {
  const std::vector<std::string> arms{"rmix", "vanilla", "cutmix_onecycle", "cutmix_multistep"};
  std::vector<TrendRun> runs;
  std::string setup_error;
  if (!fs::is_regular_file(data_root / "data_batch_1.bin")) {
    setup_error = "CIFAR-10 binaries not found under " + data_root.string();
  } else {
    fs::remove_all(work);
    fs::create_directories(work);
    std::ofstream csv(work / "trend.csv");
    csv << "arm,seed,test_acc,test_ece,fgsm_accuracy,seconds\n";
    csv.precision(17);
    for (const auto& arm : arms) {
      for (std::uint64_t seed : {0u, 1u, 2u}) {
        RunConfig config = trend_config(arm, seed, data_root);
        if (epochs > 0) {
          config.train.epochs = epochs;
          config.sched.milestone_epochs = {std::max<std::size_t>(1, epochs / 2), std::max<std::size_t>(1, epochs * 3 / 4)};
        }
        const auto t0 = std::chrono::steady_clock::now();
        const RunResult r = run_training(config, work / config.run_id);
        runs.push_back({arm, seed, *r.final_eval, seconds_since(t0)});
        const TrendRun& t = runs.back();
        csv << arm << ',' << seed << ',' << t.eval.accuracy << ',' << t.eval.ece << ',' << t.eval.fgsm_accuracy << ','
            << t.seconds << '\n';
        csv.flush();
        std::cerr << "  " << config.run_id << ": test_acc " << t.eval.accuracy << ", " << fmt(t.seconds, 4) << " s\n";
      }
    }
  }
  if (!setup_error.empty()) return {{false, setup_error}, {false, setup_error}};

  std::map<std::string, std::vector<double>> acc;
  double slowest = 0;
  for (const auto& r : runs) {
    acc[r.arm].push_back(r.eval.accuracy);
    slowest = std::max(slowest, r.seconds);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto listing = [&](const std::string& arm) {
    std::string s = arm + " {";
    for (std::size_t i = 0; i < acc[arm].size(); ++i) s += (i ? ", " : "") + fmt(acc[arm][i]);
    return s + "} mean " + fmt(mean(acc[arm]));
  };
  Checker c7;
  c7.expect(mean(acc["rmix"]) >= mean(acc["vanilla"]), "R-Mix mean below vanilla");
  c7.expect(mean(acc["cutmix_onecycle"]) >= mean(acc["cutmix_multistep"]), "CutMix OneCycle mean below MultiStep");
  c7.expect(slowest < kRunSecondsLimit, "slowest run took " + fmt(slowest) + " s");
  Outcome o7 = c7.finish("");
  o7.detail += (o7.detail.empty() ? "" : " | ") + listing("rmix") + "; " + listing("vanilla") + "; " +
               listing("cutmix_onecycle") + "; " + listing("cutmix_multistep") + "; slowest run " + fmt(slowest) + " s";

  Checker c9;
  std::size_t ok = 0;
  for (const auto& r : runs) {
    const bool fine = r.eval.fgsm_accuracy <= r.eval.accuracy;
    ok += fine ? 1 : 0;
    c9.expect(fine, r.arm + " seed " + std::to_string(r.seed) + " attacked " + fmt(r.eval.fgsm_accuracy) + " > clean " +
                        fmt(r.eval.accuracy));
  }
  const Outcome o9 = c9.finish(std::to_string(ok) + "/" + std::to_string(runs.size()) +
                               " trained checkpoints have attacked accuracy <= clean accuracy");
  return {o7, o9};
}

void tune_allocator() {
#if defined(__GLIBC__)
  // Keep the large per-batch buffers on the heap instead of fresh mmaps.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks for the rmix library"};
  std::string suite = "fast";
  std::string data_root;
  std::string work = "acceptance_work";
  std::size_t epochs = 0;
  app.add_option("--suite", suite, "fast or trend")->check(CLI::IsMember({"fast", "trend"}));
  app.add_option("--data-root", data_root, "CIFAR-10 binary directory (default: $RMIX_DATA_ROOT)");
  app.add_option("--work", work, "scratch directory for trend runs (wiped)");
  app.add_option("--epochs", epochs, "override the 30-epoch trend schedule (smoke testing only)");
  CLI11_PARSE(app, argc, argv);
  tune_allocator();

  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;
  if (suite == "fast") {
    criteria = {{"1 gradient correctness", gradient_correctness},
                {"2 label simplex", label_simplex},
                {"3 degenerations", degenerations},
                {"4 quantile oracle", quantile_oracle},
                {"5 saliency normalization", saliency_normalization},
                {"6 scheduler anchors", scheduler_anchors},
                {"8 ECE correctness", ece_correctness},
                {"9 FGSM bound and identity", fgsm_properties},
                {"10 RL controller sanity", rl_sanity},
                {"11 parsers", parsers},
                {"12 reproducibility", reproducibility}};
  }

  bool all = true;
  auto report = [&](const std::string& name, const Outcome& o) {
    all = all && o.pass;
    std::cout << "criterion " << name << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
  };
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(name, o);
  }
  if (suite == "trend") {
    if (data_root.empty()) {
      const char* env = std::getenv(kDataRootEnv);
      data_root = env ? env : "";
    }
    std::vector<Outcome> out;
    try {
      out = trend(data_root, work, epochs);
    } catch (const std::exception& e) {
      out = {{false, std::string("exception: ") + e.what()}, {false, "not run"}};
    }
    report("7 desk-scale trend", out[0]);
    report("9 FGSM on trained checkpoints", out[1]);
  }
  return all ? EXIT_SUCCESS : EXIT_FAILURE;
}
