// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "rmix/errors.hpp"
#include "rmix/kernels.hpp"
#include "rmix/saliency.hpp"
#include "support/support.hpp"

using namespace rmix;
using rmix::testing::random_tensor;

TEST_SUITE("saliency") {
  TEST_CASE("linear single-channel model gives |w| up to the loss factor") {
    Rng rng(1);
    Model m("linear", {1, 4, 4}, 1, {FlattenLayer{}, DenseLayer{16, 1}});
    m.initialize(rng);
    const Tensor w = m.parameters()[0];
    const Tensor x = random_tensor({1, 4, 4}, rng);
    const Tensor target = Tensor::vector({0.0});
    const Tensor phi = saliency_map(m, x, target);
    // d(BCE)/dz = sigmoid(z) for a zero target.
    double z = 0;
    for (std::size_t i = 0; i < 16; ++i) z += w[i] * x[i];
    const double factor = 1.0 / (1.0 + std::exp(-z));
    for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(phi[i] - factor * std::abs(w[i])) <= 1e-12);
  }

  TEST_CASE("identical channels: the channel average cancels") {
    Rng rng(2);
    const Tensor g1 = random_tensor({1, 4, 4}, rng);
    Tensor g3({3, 4, 4});
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < 16; ++k) g3[c * 16 + k] = g1[k];
    }
    const Tensor phi = saliency_from_gradient(g3);
    for (std::size_t k = 0; k < 16; ++k) CHECK(std::abs(phi[k] - std::abs(g1[k])) <= 1e-15);
    const Tensor zero = saliency_from_gradient(Tensor({3, 4, 4}, 0.0));
    for (double v : zero.data()) CHECK(v == 0.0);
  }

  TEST_CASE("channel RMS formula") {
    const Tensor g({2, 1, 2}, std::vector<double>{3, 1, 4, -1});
    const Tensor phi = saliency_from_gradient(g);
    CHECK(phi.at(0, 0) == doctest::Approx(std::sqrt(12.5)));
    CHECK(phi.at(0, 1) == doctest::Approx(1.0));
  }

  TEST_CASE("batched maps equal per-image maps") {
    Rng rng(3);
    const Model m = make_small_cnn({3, 8, 4, {2, 3}, 5}, rng);
    const Tensor batch = random_tensor({3, 3, 8, 8}, rng);
    const std::vector<std::size_t> labels{0, 3, 1};
    const Tensor y = one_hot(labels, 4);
    const auto maps = saliency_maps(m, batch, y);
    for (std::size_t b = 0; b < 3; ++b) {
      const Tensor single = saliency_map(m, batch.slice0(b), y.slice0(b));
      for (std::size_t i = 0; i < single.size(); ++i) CHECK(std::abs(single[i] - maps[b][i]) <= 1e-14);
    }
  }

  TEST_CASE("normalize_and_pool examples") {
    const SaliencyGrid uniform = normalize_and_pool(Tensor({8, 8}, 3.0), 4);
    CHECK(uniform.side == 4);
    for (double v : uniform.grid.data()) CHECK(v == doctest::Approx(1.0 / 16.0).epsilon(1e-14));

    Tensor block({8, 8}, 0.0);
    for (std::size_t i = 4; i < 6; ++i) {
      for (std::size_t j = 2; j < 4; ++j) block.at(i, j) = 0.7;
    }
    const SaliencyGrid one = normalize_and_pool(block, 4);
    CHECK(one.grid.at(2, 1) == doctest::Approx(1.0));
    CHECK(sum(one.grid) == doctest::Approx(1.0));

    const SaliencyGrid zero = normalize_and_pool(Tensor({8, 8}, 0.0), 2);
    for (double v : zero.grid.data()) CHECK(v == 0.25);

    CHECK_THROWS_AS(normalize_and_pool(Tensor({8, 8}, 1.0), 3), ShapeError);
    Tensor neg({4, 4}, 1.0);
    neg[5] = -1.0;
    CHECK_THROWS_AS(normalize_and_pool(neg, 2), ShapeError);
  }

  TEST_CASE("grid cells equal normalized block sums") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor phi = random_tensor({8, 8}, rng, 0.0, 2.0);
      const double total = sum(phi);
      for (std::size_t p : {2u, 4u, 8u}) {
        const SaliencyGrid g = normalize_and_pool(phi, p);
        const std::size_t k = 8 / p;
        for (std::size_t bi = 0; bi < p; ++bi) {
          for (std::size_t bj = 0; bj < p; ++bj) {
            double s = 0;
            for (std::size_t i = 0; i < k; ++i) {
              for (std::size_t j = 0; j < k; ++j) s += phi.at(bi * k + i, bj * k + j) / total;
            }
            CHECK(std::abs(g.grid.at(bi, bj) - s) <= 1e-10);
          }
        }
      }
    }
  }

  TEST_CASE("kernel-side reading pools with kernel p") {
    Rng rng(5);
    const Tensor phi = random_tensor({8, 8}, rng, 0.0, 1.0);
    const SaliencyGrid g = normalize_and_pool(phi, 2, PoolMode::kKernelSide);
    CHECK(g.side == 4);
    CHECK(g.grid.shape() == Shape{4, 4});
    CHECK(sum(g.grid) == doctest::Approx(1.0));
  }

  TEST_CASE("positive rescaling leaves the grid unchanged") {
    Rng rng(6);
    const Tensor phi = random_tensor({16, 16}, rng, 0.0, 1.0);
    const SaliencyGrid ref = normalize_and_pool(phi, 4);
    for (double c : {1e-6, 0.37, 2.0, 913.0}) {
      const SaliencyGrid g = normalize_and_pool(scale(phi, c), 4);
      for (std::size_t i = 0; i < ref.grid.size(); ++i) CHECK(std::abs(g.grid[i] - ref.grid[i]) <= 1e-15);
    }
  }

  TEST_CASE("permuting aligned blocks permutes grid cells") {
    Rng rng(7);
    const Tensor phi = random_tensor({8, 8}, rng, 0.0, 1.0);
    Tensor swapped = phi;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) std::swap(swapped.at(i, j), swapped.at(4 + i, 4 + j));
    }
    const SaliencyGrid a = normalize_and_pool(phi, 2);
    const SaliencyGrid b = normalize_and_pool(swapped, 2);
    CHECK(std::abs(a.grid.at(0, 0) - b.grid.at(1, 1)) <= 1e-15);
    CHECK(std::abs(a.grid.at(1, 1) - b.grid.at(0, 0)) <= 1e-15);
    CHECK(std::abs(a.grid.at(0, 1) - b.grid.at(0, 1)) <= 1e-15);
  }

  TEST_CASE("CSV dump") {
    SaliencyGrid g{Tensor({2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4}), 5, 2};
    std::ostringstream out;
    write_saliency_csv(out, std::vector<SaliencyGrid>{g});
    CHECK(out.str().rfind("source,row,col,value\n5,0,0,0.1", 0) == 0);
  }
}
