// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "rmix/tensor.hpp"

namespace rmix {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape that produced it is alive.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = std::numeric_limits<std::size_t>::max();
};

/// Records a computation as an append-only list of nodes. Parents always have
/// smaller ids than their children, so reverse id order is a valid
/// topological order for the backward sweep.
class Tape {
 public:
  /// Receives the gradient flowing into a node and distributes it to the
  /// node's parents through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends an op node. It requires a gradient iff any parent does.
  Var record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Fills the gradient slot of every node that requires one with
  /// d(loss)/d(node). Slots are cleared first, so repeated calls are
  /// idempotent. Throws if `loss` is not a one-element node of this tape.
  void backward(Var loss);

  /// Gradient slot of `v`; zeros when no gradient reached it.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;
  const Tensor& value(Var v) const;
  std::string_view op(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear_grads();

  /// Adds `g` into the gradient slot of `target` if it requires a gradient.
  void accumulate(Var target, const Tensor& g);
  /// Direct access to a slot for in-place accumulation from kernels.
  Tensor* grad_slot(Var target);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::string op;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
};

enum class Reduction {
  kMean,  ///< averaged over the batch
  kSum,   ///< summed over the batch; each sample's loss keeps its own scale
};

/// Probabilities are clamped to [kLogClamp, 1 - kLogClamp] inside every log.
inline constexpr double kLogClamp = 1e-12;

namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var mean(Var a);
/// sum(a * weights) with constant weights.
Var dot(Var a, const Tensor& weights);
Var reshape(Var a, Shape shape);
Var matmul(Var a, Var b);
/// x [B x in] times weight [out x in] transposed, plus bias [out].
Var linear(Var x, Var weight, Var bias);
Var conv2d(Var x, Var weight, Var bias, std::size_t padding);
Var relu(Var a);
/// Non-overlapping max pooling of [B x C x H x W]; `size` must divide H and W.
Var max_pool2d(Var a, std::size_t size);
Var log_softmax(Var logits);

/// Multi-label binary cross-entropy of sigmoid(logits) against soft targets in
/// [0, 1]. Per sample the loss is averaged over classes, then reduced over the
/// batch.
Var sigmoid_bce(Var logits, const Tensor& targets, Reduction reduction);
/// Cross-entropy of softmax(logits) against soft target distributions.
Var softmax_cross_entropy(Var logits, const Tensor& targets, Reduction reduction);

}  // namespace ad

}  // namespace rmix
