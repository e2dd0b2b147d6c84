// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "rmix/netlib.hpp"
#include "rmix/rng.hpp"
#include "rmix/saliency.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

struct PolicyOptions {
  std::size_t input_dim = 0;
  std::size_t actions = 10;
  /// Width of the single ReLU hidden layer; 0 gives a linear policy.
  std::size_t hidden = 64;
  bool bias = true;
  double learning_rate = 0.01;
  double baseline_decay = 0.99;
};

/// Softmax policy over K discrete top-k values, trained by REINFORCE with an
/// exponential-moving-average reward baseline.
struct PolicyState {
  PolicyOptions options;
  /// Weight [out x in] then bias [out] per dense layer; biases are omitted
  /// when options.bias is false.
  std::vector<Tensor> params;
  double baseline = 0.0;
  std::size_t updates = 0;
};

PolicyState make_policy(const PolicyOptions& options, Rng& rng);

/// Action logits [B x K] for observations [B x D] (or [D], giving [1 x K]).
Tensor action_logits(const PolicyState& policy, const Tensor& observations);
Tensor action_probabilities(const PolicyState& policy, const Tensor& observations);

/// One sampled action index per observation row.
std::vector<std::size_t> select_actions(const PolicyState& policy, const Tensor& observations, Rng& rng);

/// action * 0.99 / (K - 1); 0 when K == 1.
double action_to_q(std::size_t action, std::size_t k);

struct Transition {
  Tensor observation;  ///< [D]
  std::size_t action = 0;
  double reward = 0.0;
};

/// Mean over transitions of (reward - baseline) * grad log pi(action | obs),
/// one parameter-shaped tensor per policy parameter.
std::vector<Tensor> policy_gradient(const PolicyState& policy, std::span<const Transition> transitions);

/// log pi(action | observation) for one observation [D].
double log_probability(const PolicyState& policy, const Tensor& observation, std::size_t action);

/// Gradient ascent step on the baseline-centred log-likelihood, then
/// baseline <- decay * baseline + (1 - decay) * mean reward. Throws on an
/// empty transition set.
void policy_update(PolicyState& policy, std::span<const Transition> transitions);

/// Flattened grid followed by the logits row: [p*p + N].
Tensor observation(const SaliencyGrid& grid, std::span<const double> logits);
/// Rows of observation() for a batch; `logits` is [B x N].
Tensor observations(std::span<const SaliencyGrid> grids, const Tensor& logits);

/// Cosine similarity of the raw saliency maps of x and x_mixed, both taken
/// under `target`.
double reward(const Model& model, const Tensor& x, const Tensor& x_mixed, const Tensor& target,
              LossKind kind = LossKind::kSigmoidBce);

/// Rewards from precomputed saliency maps. Per image by default; with
/// `per_batch` every image receives the cosine of the concatenated maps.
std::vector<double> rewards_from_maps(std::span<const Tensor> clean, std::span<const Tensor> mixed, bool per_batch = false);

/// "epoch,batch,item,action,q,reward".
void write_transition_header(std::ostream& out);
void write_transition_row(std::ostream& out, std::size_t epoch, std::size_t batch, std::size_t item,
                          std::size_t action, double q, double reward);

}  // namespace rmix
