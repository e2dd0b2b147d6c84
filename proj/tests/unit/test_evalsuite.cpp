// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rmix/evalsuite.hpp"
#include "rmix/kernels.hpp"
#include "support/support.hpp"

using namespace rmix;
using rmix::testing::random_tensor;

namespace {

PredictionRecord rec(double conf, bool correct) { return {conf, 0, correct ? 0u : 1u}; }

// Direct bin formula with its own bin assignment.
double ece_oracle(const std::vector<PredictionRecord>& rs, std::size_t bins) {
  std::vector<double> n(bins, 0), acc(bins, 0), conf(bins, 0);
  for (const auto& r : rs) {
    std::size_t b = 0;
    while (b + 1 < bins && r.confidence > static_cast<double>(b + 1) / static_cast<double>(bins)) ++b;
    n[b] += 1;
    acc[b] += r.correct() ? 1 : 0;
    conf[b] += r.confidence;
  }
  double e = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (n[b] > 0) e += n[b] / static_cast<double>(rs.size()) * std::abs(acc[b] / n[b] - conf[b] / n[b]);
  }
  return e;
}

DatasetMeta unit_meta(std::size_t channels, std::size_t side, std::size_t classes) {
  DatasetMeta m;
  m.classes = classes;
  m.side = side;
  m.channels = channels;
  m.mean.assign(channels, 0.0);
  m.stddev.assign(channels, 1.0);
  return m;
}

}  // namespace

TEST_SUITE("evalsuite") {
  TEST_CASE("accuracy examples") {
    const Tensor logits({3, 3}, std::vector<double>{2, 1, 0, 0, 5, 1, 3, 0, 4});
    const std::vector<std::size_t> labels{0, 1, 0};
    const auto rs = records_from_logits(logits, labels);
    CHECK(top1_accuracy(rs) == doctest::Approx(2.0 / 3.0));
    CHECK(rs[2].predicted == 2);
    CHECK(rs[0].confidence == doctest::Approx(softmax(logits)[0]));
    CHECK_THROWS_AS(top1_accuracy(std::vector<PredictionRecord>{}), std::invalid_argument);

    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
      const Tensor l = random_tensor({20, 5}, rng);
      std::vector<std::size_t> y(20);
      for (auto& v : y) v = rng.uniform_index(5);
      std::size_t hits = 0;
      for (std::size_t i = 0; i < 20; ++i) hits += argmax(l.slice0(i).data()) == y[i] ? 1 : 0;
      CHECK(top1_accuracy(records_from_logits(l, y)) == static_cast<double>(hits) / 20.0);
    }
  }

  TEST_CASE("ECE examples") {
    const std::vector<PredictionRecord> two{rec(0.9, true), rec(0.7, false)};
    CHECK(std::abs(ece(two) - 0.4) <= 1e-15);
    CHECK(ece(std::vector<PredictionRecord>{rec(1.0, true), rec(1.0, true)}) == 0.0);
    // Two bins, each with accuracy equal to its confidence.
    std::vector<PredictionRecord> cal;
    for (int i = 0; i < 4; ++i) cal.push_back(rec(0.75, i < 3));
    for (int i = 0; i < 4; ++i) cal.push_back(rec(0.25, i < 1));
    CHECK(ece(cal, 10) == 0.0);
    // One bin collapses to |accuracy - mean confidence|.
    const std::vector<PredictionRecord> mixed{rec(0.2, true), rec(0.6, false), rec(0.9, true)};
    CHECK(ece(mixed, 1) == doctest::Approx(std::abs(2.0 / 3.0 - 1.7 / 3.0)));
    const auto bins = calibration_bins(two, 15);
    CHECK(bins.size() == 15);
    CHECK(bins[13].count == 1);
    CHECK(bins[10].count == 1);
    CHECK(calibration_bins(std::vector<PredictionRecord>{rec(0.0, true)}, 5)[0].count == 1);
  }

  TEST_CASE("ECE invariants and oracle") {
    Rng rng(2);
    for (int t = 0; t < 200; ++t) {
      std::vector<PredictionRecord> rs;
      const std::size_t n = 1 + rng.uniform_index(60);
      for (std::size_t i = 0; i < n; ++i) rs.push_back(rec(rng.uniform(), rng.bernoulli(0.6)));
      const std::size_t bins = 1 + rng.uniform_index(20);
      const double e = ece(rs, bins);
      CHECK(e >= 0.0);
      CHECK(e <= 1.0);
      CHECK(std::abs(e - ece_oracle(rs, bins)) <= 1e-12);
      std::size_t total = 0;
      for (const auto& b : calibration_bins(rs, bins)) total += b.count;
      CHECK(total == n);
    }
  }

  TEST_CASE("FGSM bounds and identity") {
    Rng rng(3);
    const Model m = make_small_cnn({3, 8, 10, {4, 4}, 8}, rng);
    const DatasetMeta meta = unit_meta(3, 8, 10);
    const Tensor raw = random_tensor({100, 3, 8, 8}, rng, 0.0, 1.0);
    std::vector<std::size_t> labels(100);
    for (std::size_t i = 0; i < 100; ++i) labels[i] = i % 10;
    CHECK(fgsm_attack(m, raw, labels, 0.0, meta) == raw);
    const double eps = 8.0 / 255.0;
    const Tensor adv = fgsm_attack(m, raw, labels, eps, meta);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(std::abs(adv[i] - raw[i]) <= eps + 1e-15);
      CHECK(adv[i] >= 0.0);
      CHECK(adv[i] <= 1.0);
    }
  }

  TEST_CASE("FGSM follows the loss gradient sign on a linear model") {
    Model m("linear", {1, 2, 2}, 2, {FlattenLayer{}, DenseLayer{4, 2}});
    m.parameters()[0] = Tensor({2, 4}, std::vector<double>{1, 1, -1, 0, -1, -1, 1, 0});
    m.parameters()[1] = Tensor({2}, 0.0);
    const DatasetMeta meta = unit_meta(1, 2, 2);
    const Tensor raw({1, 2, 2}, 0.5);
    const std::vector<std::size_t> y{0};
    const Tensor adv = fgsm_attack(m, raw, y, 0.1, meta);
    // dL/dx = (p0 - 1) w0 + p1 w1 = -2 p1 w0 for these rows; zero in the last pixel.
    CHECK(adv[0] == doctest::Approx(0.4));
    CHECK(adv[1] == doctest::Approx(0.4));
    CHECK(adv[2] == doctest::Approx(0.6));
    CHECK(adv[3] == 0.5);
  }

  TEST_CASE("evaluate and CSV writers") {
    Rng rng(4);
    const Model m = make_small_cnn({3, 8, 10, {2, 2}, 4}, rng);
    const DatasetMeta meta = unit_meta(3, 8, 10);
    std::vector<LabeledImage> imgs;
    for (std::size_t i = 0; i < 23; ++i) imgs.push_back({random_tensor({3, 8, 8}, rng, 0.0, 1.0), i % 10, {}});
    EvalOptions opts;
    opts.batch_size = 7;
    const EvalResult r = evaluate(m, imgs, meta, opts);
    CHECK(r.count == 23);
    CHECK(r.fgsm_accuracy <= 1.0);
    opts.batch_size = 100;
    const EvalResult r2 = evaluate(m, imgs, meta, opts);
    CHECK(r2.accuracy == r.accuracy);
    CHECK(std::abs(r2.ece - r.ece) <= 1e-12);
    opts.fgsm = false;
    CHECK(std::isnan(evaluate(m, imgs, meta, opts).fgsm_accuracy));

    std::ostringstream out;
    write_metric_header(out);
    const auto rows = metric_rows("r", 3, r, EvalOptions{});
    write_metric_rows(out, rows);
    CHECK(out.str().rfind("run_id,epoch,metric,value\nr,3,count,23\n", 0) == 0);
    std::ostringstream cal;
    write_calibration_csv(cal, calibration_bins(std::vector<PredictionRecord>{rec(0.9, true)}, 2));
    CHECK(cal.str().rfind("bin,lower,upper,count,accuracy,confidence\n", 0) == 0);
  }
}
