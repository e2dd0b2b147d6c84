// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/rlmix.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "rmix/autodiff.hpp"
#include "rmix/errors.hpp"
#include "rmix/kernels.hpp"

namespace rmix {

namespace {

struct DenseShape {
  std::size_t in, out;
};

std::vector<DenseShape> layer_shapes(const PolicyOptions& o) {
  if (o.hidden == 0) return {{o.input_dim, o.actions}};
  return {{o.input_dim, o.hidden}, {o.hidden, o.actions}};
}

Tensor as_rows(const Tensor& observations, std::size_t dim) {
  if (observations.rank() == 1) {
    if (observations.dim(0) != dim) throw ShapeError("observation length " + std::to_string(observations.dim(0)) + " != policy input " + std::to_string(dim));
    return observations.reshaped({1, dim});
  }
  if (observations.rank() != 2 || observations.dim(1) != dim) {
    throw ShapeError("observations " + shape_string(observations.shape()) + " do not match policy input " + std::to_string(dim));
  }
  return observations;
}

// Records the policy on `tape`; parameter leaves are appended to `vars`.
Var policy_forward(Tape& tape, const PolicyState& policy, const Tensor& rows, std::vector<Var>* vars, bool train) {
  const auto shapes = layer_shapes(policy.options);
  Var h = tape.constant(rows);
  std::size_t k = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    Var w = tape.leaf(policy.params[k++], train);
    Var b;
    if (policy.options.bias) {
      b = tape.leaf(policy.params[k++], train);
    } else {
      b = tape.constant(Tensor({shapes[l].out}, 0.0));
    }
    if (vars) {
      vars->push_back(w);
      if (policy.options.bias) vars->push_back(b);
    }
    h = ad::linear(h, w, b);
    if (l + 1 < shapes.size()) h = ad::relu(h);
  }
  return h;
}

}  // namespace

PolicyState make_policy(const PolicyOptions& options, Rng& rng) {
  if (options.input_dim == 0 || options.actions == 0) throw ConfigError("policy needs a positive input size and action count");
  if (!(options.learning_rate > 0.0)) throw ConfigError("policy learning rate must be positive");
  if (!(options.baseline_decay >= 0.0 && options.baseline_decay < 1.0)) throw ConfigError("baseline decay must lie in [0, 1)");
  PolicyState state;
  state.options = options;
  for (const DenseShape& s : layer_shapes(options)) {
    Tensor w({s.out, s.in});
    const double bound = std::sqrt(6.0 / static_cast<double>(s.in));
    for (double& v : w.data()) v = rng.uniform(-bound, bound);
    state.params.push_back(std::move(w));
    if (options.bias) state.params.emplace_back(Shape{s.out}, 0.0);
  }
  return state;
}

Tensor action_logits(const PolicyState& policy, const Tensor& observations) {
  Tape tape;
  return policy_forward(tape, policy, as_rows(observations, policy.options.input_dim), nullptr, false).value();
}

Tensor action_probabilities(const PolicyState& policy, const Tensor& observations) {
  return softmax(action_logits(policy, observations));
}

std::vector<std::size_t> select_actions(const PolicyState& policy, const Tensor& observations, Rng& rng) {
  const Tensor probs = action_probabilities(policy, observations);
  const std::size_t k = probs.dim(1);
  std::vector<std::size_t> out(probs.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t a = k - 1;
    for (std::size_t j = 0; j < k; ++j) {
      acc += probs[i * k + j];
      if (u < acc) {
        a = j;
        break;
      }
    }
    out[i] = a;
  }
  return out;
}

double action_to_q(std::size_t action, std::size_t k) {
  if (action >= k) throw std::out_of_range("action index outside the top-k space");
  return k == 1 ? 0.0 : 0.99 * static_cast<double>(action) / static_cast<double>(k - 1);
}

double log_probability(const PolicyState& policy, const Tensor& observation, std::size_t action) {
  if (action >= policy.options.actions) throw std::out_of_range("action index outside the policy's range");
  Tape tape;
  const Var lp = ad::log_softmax(policy_forward(tape, policy, as_rows(observation, policy.options.input_dim), nullptr, false));
  return lp.value()[action];
}

std::vector<Tensor> policy_gradient(const PolicyState& policy, std::span<const Transition> transitions) {
  if (transitions.empty()) throw std::invalid_argument("policy update needs at least one transition");
  const std::size_t dim = policy.options.input_dim;
  const std::size_t k = policy.options.actions;
  const std::size_t n = transitions.size();
  Tensor rows({n, dim});
  Tensor weights({n, k}, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = transitions[i];
    if (t.observation.size() != dim) throw ShapeError("transition observation does not match policy input");
    if (t.action >= k) throw std::out_of_range("transition action outside the policy's range");
    std::copy(t.observation.data().begin(), t.observation.data().end(), rows.data().begin() + i * dim);
    weights[i * k + t.action] = (t.reward - policy.baseline) / static_cast<double>(n);
  }
  Tape tape;
  std::vector<Var> vars;
  const Var objective = ad::dot(ad::log_softmax(policy_forward(tape, policy, rows, &vars, true)), weights);
  tape.backward(objective);
  std::vector<Tensor> grads;
  for (const Var& v : vars) grads.push_back(tape.grad(v));
  return grads;
}

void policy_update(PolicyState& policy, std::span<const Transition> transitions) {
  const std::vector<Tensor> grads = policy_gradient(policy, transitions);
  for (std::size_t i = 0; i < grads.size(); ++i) axpy(policy.options.learning_rate, grads[i], policy.params[i]);
  double mean_reward = 0.0;
  for (const Transition& t : transitions) mean_reward += t.reward;
  mean_reward /= static_cast<double>(transitions.size());
  const double d = policy.options.baseline_decay;
  policy.baseline = d * policy.baseline + (1.0 - d) * mean_reward;
  ++policy.updates;
}

Tensor observation(const SaliencyGrid& grid, std::span<const double> logits) {
  std::vector<double> v(grid.grid.data().begin(), grid.grid.data().end());
  v.insert(v.end(), logits.begin(), logits.end());
  return Tensor::vector(std::move(v));
}

Tensor observations(std::span<const SaliencyGrid> grids, const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(0) != grids.size()) throw ShapeError("observations: one logits row per grid required");
  if (grids.empty()) throw ShapeError("observations of an empty batch");
  const std::size_t n = logits.dim(1);
  const std::size_t dim = grids.front().grid.size() + n;
  Tensor out({grids.size(), dim});
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (grids[i].grid.size() + n != dim) throw ShapeError("observations: grids differ in size");
    const Tensor row = observation(grids[i], std::span<const double>(logits.data().data() + i * n, n));
    std::copy(row.data().begin(), row.data().end(), out.data().begin() + i * dim);
  }
  return out;
}

double reward(const Model& model, const Tensor& x, const Tensor& x_mixed, const Tensor& target, LossKind kind) {
  if (x.shape() != x_mixed.shape()) throw ShapeError("reward: original and mixed images differ in shape");
  return cosine_similarity(saliency_map(model, x, target, kind), saliency_map(model, x_mixed, target, kind));
}

std::vector<double> rewards_from_maps(std::span<const Tensor> clean, std::span<const Tensor> mixed, bool per_batch) {
  if (clean.size() != mixed.size()) throw ShapeError("rewards: map counts differ");
  std::vector<double> out(clean.size());
  if (per_batch) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      a.insert(a.end(), clean[i].data().begin(), clean[i].data().end());
      b.insert(b.end(), mixed[i].data().begin(), mixed[i].data().end());
    }
    std::fill(out.begin(), out.end(), cosine_similarity(a, b));
    return out;
  }
  for (std::size_t i = 0; i < clean.size(); ++i) out[i] = cosine_similarity(clean[i], mixed[i]);
  return out;
}

void write_transition_header(std::ostream& out) { out << "epoch,batch,item,action,q,reward\n"; }

void write_transition_row(std::ostream& out, std::size_t epoch, std::size_t batch, std::size_t item,
                          std::size_t action, double q, double reward) {
  const auto old_precision = out.precision(17);
  out << epoch << ',' << batch << ',' << item << ',' << action << ',' << q << ',' << reward << '\n';
  out.precision(old_precision);
}

}  // namespace rmix
