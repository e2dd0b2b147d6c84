// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rmix/kernels.hpp"
#include "rmix/rlmix.hpp"
#include "rmix/saliency.hpp"
#include "support/support.hpp"

using namespace rmix;
using rmix::testing::random_tensor;
using rmix::testing::relative_error;

TEST_SUITE("rlmix") {
  TEST_CASE("reward examples") {
    Rng rng(1);
    const Model m = make_small_cnn({3, 8, 4, {2, 2}, 4}, rng);
    const Tensor x = random_tensor({3, 8, 8}, rng);
    const Tensor y = Tensor::vector({0, 1, 0, 0});
    CHECK(std::abs(reward(m, x, x, y) - 1.0) <= 1e-12);

    const Tensor x2 = random_tensor({3, 8, 8}, rng);
    const Tensor a = saliency_map(m, x, y), b = saliency_map(m, x2, y);
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    CHECK(std::abs(reward(m, x, x2, y) - dot / std::sqrt(na * nb)) <= 1e-10);

    std::vector<Tensor> clean{Tensor({2, 2}, std::vector<double>{1, 0, 0, 0}), Tensor({2, 2}, std::vector<double>{1, 1, 0, 0})};
    std::vector<Tensor> mixed{Tensor({2, 2}, std::vector<double>{0, 1, 0, 0}), Tensor({2, 2}, std::vector<double>{1, 1, 0, 0})};
    const auto per_image = rewards_from_maps(clean, mixed);
    CHECK(per_image[0] == 0.0);
    CHECK(per_image[1] == doctest::Approx(1.0));
    const auto per_batch = rewards_from_maps(clean, mixed, true);
    CHECK(per_batch[0] == per_batch[1]);
    CHECK(per_batch[0] == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("action selection") {
    Rng init(2);
    PolicyOptions opts;
    opts.input_dim = 3;
    opts.actions = 10;
    PolicyState p = make_policy(opts, init);
    for (auto& t : p.params) t.fill(0.0);
    const Tensor obs({10000, 3}, 0.5);
    Rng rng(3);
    const auto acts = select_actions(p, obs, rng);
    std::vector<double> freq(10, 0);
    for (auto a : acts) freq[a] += 1;
    const double sd = std::sqrt(10000 * 0.1 * 0.9);
    for (double f : freq) CHECK(std::abs(f - 1000) <= 3 * sd);

    Rng r1(4), r2(4);
    CHECK(select_actions(p, obs, r1) == select_actions(p, obs, r2));

    opts.hidden = 0;
    PolicyState lin = make_policy(opts, init);
    for (auto& t : lin.params) t.fill(0.0);
    lin.params[1][7] = 40.0;
    const Tensor probs = action_probabilities(lin, Tensor({1, 3}, 1.0));
    CHECK(probs[7] > 0.999);
    double total = 0;
    for (double v : probs.data()) total += v;
    CHECK(total == doctest::Approx(1.0));
    Rng r3(5);
    std::size_t hits = 0;
    for (auto a : select_actions(lin, Tensor({1000, 3}, 1.0), r3)) hits += a == 7 ? 1 : 0;
    CHECK(hits >= 999);
    CHECK_THROWS(select_actions(lin, Tensor({1, 4}, 1.0), r3));

    CHECK(action_to_q(0, 10) == 0.0);
    CHECK(action_to_q(9, 10) == doctest::Approx(0.99));
    CHECK(action_to_q(0, 1) == 0.0);
  }

  TEST_CASE("zero advantage leaves parameters unchanged") {
    Rng init(6);
    PolicyOptions opts;
    opts.input_dim = 4;
    PolicyState p = make_policy(opts, init);
    p.baseline = 0.5;
    const auto before = p.params;
    std::vector<Transition> ts;
    for (std::size_t i = 0; i < 5; ++i) ts.push_back({random_tensor({4}, init), i, 0.5});
    policy_update(p, ts);
    CHECK(p.params == before);
    CHECK(p.updates == 1);
    CHECK_THROWS_AS(policy_update(p, std::vector<Transition>{}), std::invalid_argument);
  }

  TEST_CASE("log-prob gradient of a two-parameter policy") {
    Rng init(7);
    PolicyOptions opts;
    opts.input_dim = 1;
    opts.actions = 2;
    opts.hidden = 0;
    opts.bias = false;
    PolicyState p = make_policy(opts, init);
    REQUIRE(p.params.size() == 1);
    REQUIRE(p.params[0].size() == 2);
    p.params[0][0] = 0.3;
    p.params[0][1] = -0.8;
    const Transition t{Tensor::vector({1.7}), 1, 0.6};
    const auto g = policy_gradient(p, std::span<const Transition>(&t, 1));
    // Hand form: d log pi(1)/dw_k = x (1[k == 1] - pi_k).
    const double z0 = 0.3 * 1.7, z1 = -0.8 * 1.7;
    const double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
    CHECK(g[0][0] == doctest::Approx(0.6 * 1.7 * (0 - p0)).epsilon(1e-12));
    CHECK(g[0][1] == doctest::Approx(0.6 * 1.7 * (1 - (1 - p0))).epsilon(1e-12));
    for (std::size_t k = 0; k < 2; ++k) {
      double& w = p.params[0][k];
      const double fd = rmix::testing::central_difference([&] { return 0.6 * log_probability(p, t.observation, 1); }, w);
      CHECK(relative_error(g[0][k], fd) <= 1e-4);
    }
  }

  TEST_CASE("policy gradient matches finite differences with a hidden layer") {
    Rng init(8);
    PolicyOptions opts;
    opts.input_dim = 3;
    opts.actions = 4;
    opts.hidden = 5;
    PolicyState p = make_policy(opts, init);
    p.baseline = 0.2;
    std::vector<Transition> ts;
    for (std::size_t i = 0; i < 3; ++i) ts.push_back({random_tensor({3}, init), i, init.uniform()});
    const auto g = policy_gradient(p, ts);
    auto objective = [&] {
      double s = 0;
      for (const auto& t : ts) s += (t.reward - p.baseline) * log_probability(p, t.observation, t.action);
      return s / static_cast<double>(ts.size());
    };
    for (std::size_t k = 0; k < p.params.size(); ++k) {
      for (std::size_t i = 0; i < p.params[k].size(); ++i) {
        const double fd = rmix::testing::central_difference(objective, p.params[k][i]);
        CHECK(relative_error(g[k][i], fd) <= 1e-4);
      }
    }
  }

  TEST_CASE("bandit converges for several seeds") {
    for (std::uint64_t seed : {0u, 1u, 2u}) CHECK(rmix::testing::bandit_updates_to(0.9, seed) <= 2000);
  }

  TEST_CASE("observation layout and transition CSV") {
    SaliencyGrid g{Tensor({2, 2}, std::vector<double>{0.1, 0.2, 0.3, 0.4}), 0, 2};
    const std::vector<double> logits{5, 6};
    const Tensor o = observation(g, logits);
    CHECK(o == Tensor::vector({0.1, 0.2, 0.3, 0.4, 5, 6}));
    std::vector<SaliencyGrid> gs{g, g};
    CHECK(observations(gs, Tensor({2, 2}, 1.0)).shape() == Shape{2, 6});
    std::ostringstream out;
    write_transition_header(out);
    write_transition_row(out, 1, 2, 3, 4, 0.44, 0.5);
    CHECK(out.str() == "epoch,batch,item,action,q,reward\n1,2,3,4,0.44,0.5\n");
  }
}
