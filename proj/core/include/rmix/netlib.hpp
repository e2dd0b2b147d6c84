// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rmix/autodiff.hpp"
#include "rmix/rng.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

struct Conv2dLayer {
  std::size_t in_channels, out_channels, kernel, padding;
};
struct DenseLayer {
  std::size_t in_features, out_features;
};
struct ReluLayer {};
struct MaxPoolLayer {
  std::size_t size;
};
struct FlattenLayer {};

using Layer = std::variant<Conv2dLayer, DenseLayer, ReluLayer, MaxPoolLayer, FlattenLayer>;

enum class LossKind {
  kSigmoidBce,           ///< multi-label binary cross-entropy (training default)
  kSoftmaxCrossEntropy,  ///< soft-target cross-entropy
};

/// Sequential network mapping [B x C x W x W] to logits [B x N].
///
/// Parameters live in the model as plain tensors (weight then bias for each
/// conv/dense layer, in layer order); a forward pass binds them to a tape as
/// leaves, so forward/backward never mutate them.
class Model {
 public:
  Model(std::string name, Shape input_shape, std::size_t classes, std::vector<Layer> layers);

  const std::string& name() const noexcept { return name_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t classes() const noexcept { return classes_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::vector<Tensor>& parameters() noexcept { return params_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  /// He-uniform weights, zero biases.
  void initialize(Rng& rng);

  /// Records the forward pass on `tape`. When `param_vars` is non-null the
  /// parameter leaves are appended to it; they require gradients iff
  /// `train_params` is set.
  Var forward(Tape& tape, Var input, std::vector<Var>* param_vars = nullptr, bool train_params = false) const;

  /// Inference-only forward of a [B x C x W x W] batch.
  Tensor logits(const Tensor& batch) const;

 private:
  std::string name_;
  Shape input_shape_;
  std::size_t classes_;
  std::vector<Layer> layers_;
  std::vector<Tensor> params_;
};

struct SmallCnnOptions {
  std::size_t channels = 3;
  std::size_t side = 32;
  std::size_t classes = 10;
  /// One conv(3x3, pad 1) + relu + maxpool(2) block per entry.
  std::vector<std::size_t> conv_channels{32, 64};
  std::size_t hidden = 128;
};

/// Conv blocks followed by dense(hidden) + relu + dense(classes).
Model make_small_cnn(const SmallCnnOptions& options, Rng& rng);

/// Model by registry name; currently "small_cnn".
Model make_model(const std::string& name, const SmallCnnOptions& options, Rng& rng);

Var loss(Var logits, const Tensor& targets, LossKind kind, Reduction reduction);

/// One-hot [B x N] targets.
Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);

/// d(loss)/d(input) with parameters held constant. `x` is one image
/// [C x W x W] or a batch [B x C x W x W]; `targets` is [N] or [B x N]. The
/// batch loss is a sum of per-image losses, so each image's slice is its own
/// exact input gradient.
Tensor grad_wrt_input(const Model& model, const Tensor& x, const Tensor& targets, LossKind kind = LossKind::kSigmoidBce);

/// Loss value and parameter gradients of one mini-batch.
struct BatchGradients {
  double loss = 0.0;
  Tensor logits;
  std::vector<Tensor> grads;
};
BatchGradients compute_gradients(const Model& model, const Tensor& batch, const Tensor& targets, LossKind kind);

struct SgdOptions {
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 1e-4;
};

/// SGD with (Nesterov) momentum and L2 weight decay folded into the
/// gradient: g' = g + wd*p; v = mu*v + g'; p -= lr * (g' + mu*v) (Nesterov)
/// or p -= lr * v (classic).
class Sgd {
 public:
  explicit Sgd(SgdOptions options = {});

  const SgdOptions& options() const noexcept { return options_; }
  std::vector<Tensor>& velocity() noexcept { return velocity_; }
  const std::vector<Tensor>& velocity() const noexcept { return velocity_; }

  /// Throws ShapeError if a gradient is missing or mis-shaped.
  void step(std::vector<Tensor>& params, std::span<const Tensor> grads, double lr);
  void step(Model& model, std::span<const Tensor> grads, double lr) { step(model.parameters(), grads, lr); }

 private:
  SgdOptions options_;
  std::vector<Tensor> velocity_;
};

struct OneCycleSchedule {
  double initial_lr = 3e-3;
  double max_lr = 0.3;
  double final_lr = 3e-5;
  /// Fraction of steps spent ramping up.
  double warmup_fraction = 0.3;
  bool cosine = true;
};

struct MultiStepSchedule {
  double base_lr = 0.1;
  /// Steps at which the rate is multiplied by gamma.
  std::vector<std::size_t> milestones;
  double gamma = 0.1;
};

/// Learning-rate schedule over steps [0, total_steps].
class LrSchedule {
 public:
  LrSchedule(OneCycleSchedule schedule, std::size_t total_steps);
  LrSchedule(MultiStepSchedule schedule, std::size_t total_steps);

  /// Throws ShapeError when step > total_steps.
  double lr_at(std::size_t step) const;

  std::size_t total_steps() const noexcept { return total_steps_; }
  /// Step at which the one-cycle ramp peaks.
  std::size_t peak_step() const noexcept { return peak_step_; }
  bool is_one_cycle() const noexcept { return std::holds_alternative<OneCycleSchedule>(schedule_); }

 private:
  std::variant<OneCycleSchedule, MultiStepSchedule> schedule_;
  std::size_t total_steps_;
  std::size_t peak_step_ = 0;
};

}  // namespace rmix
