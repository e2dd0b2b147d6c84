// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/netlib.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rmix/errors.hpp"
#include "rmix/kernels.hpp"

namespace rmix {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Model::Model(std::string name, Shape input_shape, std::size_t classes, std::vector<Layer> layers)
    : name_(std::move(name)), input_shape_(std::move(input_shape)), classes_(classes), layers_(std::move(layers)) {
  if (input_shape_.size() != 3) throw ShapeError("model input shape must be [C x W x W]");
  Shape current = input_shape_;
  bool flat = false;
  for (const Layer& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Conv2dLayer& l) {
                     if (flat || current[0] != l.in_channels) throw ShapeError("conv layer input channels mismatch");
                     params_.emplace_back(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel});
                     params_.emplace_back(Shape{l.out_channels});
                     current = {l.out_channels, current[1] + 2 * l.padding - l.kernel + 1,
                                current[2] + 2 * l.padding - l.kernel + 1};
                   },
                   [&](const DenseLayer& l) {
                     if (!flat || current[0] != l.in_features) throw ShapeError("dense layer input features mismatch");
                     params_.emplace_back(Shape{l.out_features, l.in_features});
                     params_.emplace_back(Shape{l.out_features});
                     current = {l.out_features};
                   },
                   [&](const ReluLayer&) {},
                   [&](const MaxPoolLayer& l) {
                     if (flat || l.size == 0 || current[1] % l.size || current[2] % l.size) {
                       throw ShapeError("max pool size must divide the feature map");
                     }
                     current = {current[0], current[1] / l.size, current[2] / l.size};
                   },
                   [&](const FlattenLayer&) {
                     current = {shape_size(current)};
                     flat = true;
                   },
               },
               layer);
  }
  if (!flat || current[0] != classes_) throw ShapeError("model must end in a dense layer producing " + std::to_string(classes_) + " logits");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& p : params_) n += p.size();
  return n;
}

void Model::initialize(Rng& rng) {
  for (Tensor& p : params_) {
    if (p.rank() == 1) {
      p.fill(0.0);
      continue;
    }
    const std::size_t fan_in = p.size() / p.dim(0);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : p.data()) v = rng.uniform(-bound, bound);
  }
}

Var Model::forward(Tape& tape, Var input, std::vector<Var>* param_vars, bool train_params) const {
  const Shape& in = input.shape();
  if (in.size() != 4 || in[1] != input_shape_[0] || in[2] != input_shape_[1] || in[3] != input_shape_[2]) {
    throw ShapeError("model " + name_ + " expects [B x " + std::to_string(input_shape_[0]) + " x " +
                     std::to_string(input_shape_[1]) + " x " + std::to_string(input_shape_[2]) + "], got " +
                     shape_string(in));
  }
  std::size_t next = 0;
  auto bind = [&]() {
    Var v = tape.leaf(params_[next++], train_params);
    if (param_vars) param_vars->push_back(v);
    return v;
  };
  Var x = input;
  const std::size_t batch = in[0];
  for (const Layer& layer : layers_) {
    std::visit(Overloaded{
                   [&](const Conv2dLayer& l) {
                     Var w = bind();
                     Var b = bind();
                     x = ad::conv2d(x, w, b, l.padding);
                   },
                   [&](const DenseLayer&) {
                     Var w = bind();
                     Var b = bind();
                     x = ad::linear(x, w, b);
                   },
                   [&](const ReluLayer&) { x = ad::relu(x); },
                   [&](const MaxPoolLayer& l) { x = ad::max_pool2d(x, l.size); },
                   [&](const FlattenLayer&) { x = ad::reshape(x, {batch, x.value().size() / batch}); },
               },
               layer);
  }
  return x;
}

Tensor Model::logits(const Tensor& batch) const {
  Tape tape;
  return forward(tape, tape.constant(batch)).value();
}

Model make_small_cnn(const SmallCnnOptions& o, Rng& rng) {
  if (o.conv_channels.empty()) throw ShapeError("small_cnn needs at least one conv block");
  std::vector<Layer> layers;
  std::size_t channels = o.channels;
  std::size_t side = o.side;
  for (std::size_t width : o.conv_channels) {
    if (side % 2 != 0) throw ShapeError("small_cnn: image side must stay even through every pooling stage");
    layers.emplace_back(Conv2dLayer{channels, width, 3, 1});
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(MaxPoolLayer{2});
    channels = width;
    side /= 2;
  }
  layers.emplace_back(FlattenLayer{});
  layers.emplace_back(DenseLayer{channels * side * side, o.hidden});
  layers.emplace_back(ReluLayer{});
  layers.emplace_back(DenseLayer{o.hidden, o.classes});
  Model model("small_cnn", {o.channels, o.side, o.side}, o.classes, std::move(layers));
  model.initialize(rng);
  return model;
}

Model make_model(const std::string& name, const SmallCnnOptions& options, Rng& rng) {
  if (name == "small_cnn") return make_small_cnn(options, rng);
  throw ConfigError("unknown model '" + name + "'");
}

Var loss(Var logits, const Tensor& targets, LossKind kind, Reduction reduction) {
  return kind == LossKind::kSigmoidBce ? ad::sigmoid_bce(logits, targets, reduction)
                                       : ad::softmax_cross_entropy(logits, targets, reduction);
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  Tensor out({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw ShapeError("label out of range for one_hot");
    out[i * classes + labels[i]] = 1.0;
  }
  return out;
}

Tensor grad_wrt_input(const Model& model, const Tensor& x, const Tensor& targets, LossKind kind) {
  const bool single = x.rank() == 3;
  Tensor batch = single ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  Tensor target_batch = targets.rank() == 1 ? targets.reshaped({1, targets.dim(0)}) : targets;
  if (target_batch.rank() != 2 || target_batch.dim(0) != batch.dim(0) || target_batch.dim(1) != model.classes()) {
    throw ShapeError("grad_wrt_input: targets " + shape_string(targets.shape()) + " do not match input " + shape_string(x.shape()));
  }
  Tape tape;
  Var input = tape.leaf(std::move(batch), true);
  Var logits = model.forward(tape, input);
  Var l = loss(logits, target_batch, kind, Reduction::kSum);
  tape.backward(l);
  Tensor g = tape.grad(input);
  return single ? g.reshaped(x.shape()) : g;
}

BatchGradients compute_gradients(const Model& model, const Tensor& batch, const Tensor& targets, LossKind kind) {
  Tape tape;
  std::vector<Var> params;
  Var logits = model.forward(tape, tape.constant(batch), &params, true);
  Var l = loss(logits, targets, kind, Reduction::kMean);
  tape.backward(l);
  BatchGradients out;
  out.loss = l.value().item();
  out.logits = logits.value();
  out.grads.reserve(params.size());
  for (Var p : params) out.grads.push_back(tape.grad(p));
  return out;
}

Sgd::Sgd(SgdOptions options) : options_(options) {
  if (options_.momentum < 0.0 || options_.weight_decay < 0.0) throw ShapeError("sgd momentum and weight decay must be non-negative");
}

void Sgd::step(std::vector<Tensor>& params, std::span<const Tensor> grads, double lr) {
  if (grads.size() != params.size()) {
    throw ShapeError("sgd: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params.size()) + " parameters");
  }
  if (velocity_.empty()) {
    for (const Tensor& p : params) velocity_.push_back(Tensor::like(p));
  }
  if (velocity_.size() != params.size()) throw ShapeError("sgd: velocity state does not match parameters");
  const double mu = options_.momentum;
  const double wd = options_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    Tensor& v = velocity_[k];
    const Tensor& g = grads[k];
    if (g.shape() != p.shape() || v.shape() != p.shape()) throw ShapeError("sgd: gradient shape mismatch for parameter " + std::to_string(k));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = g[i] + wd * p[i];
      v[i] = mu * v[i] + d;
      const double update = options_.nesterov ? d + mu * v[i] : v[i];
      p[i] -= lr * update;
    }
  }
}

LrSchedule::LrSchedule(OneCycleSchedule schedule, std::size_t total_steps) : schedule_(schedule), total_steps_(total_steps) {
  if (total_steps == 0) throw ShapeError("schedule needs at least one step");
  if (!(schedule.initial_lr > 0.0) || !(schedule.max_lr > 0.0) || !(schedule.final_lr > 0.0)) {
    throw ShapeError("one-cycle learning rates must be positive");
  }
  if (!(schedule.warmup_fraction > 0.0 && schedule.warmup_fraction < 1.0)) throw ShapeError("warmup fraction must lie in (0, 1)");
  peak_step_ = static_cast<std::size_t>(std::llround(schedule.warmup_fraction * static_cast<double>(total_steps)));
  peak_step_ = std::clamp<std::size_t>(peak_step_, 1, total_steps);
}

LrSchedule::LrSchedule(MultiStepSchedule schedule, std::size_t total_steps) : schedule_(std::move(schedule)), total_steps_(total_steps) {
  if (total_steps == 0) throw ShapeError("schedule needs at least one step");
  const auto& ms = std::get<MultiStepSchedule>(schedule_);
  if (!(ms.base_lr > 0.0) || !(ms.gamma > 0.0)) throw ShapeError("multi-step base rate and gamma must be positive");
}

double LrSchedule::lr_at(std::size_t step) const {
  if (step > total_steps_) {
    throw ShapeError("step " + std::to_string(step) + " beyond schedule length " + std::to_string(total_steps_));
  }
  if (const auto* ms = std::get_if<MultiStepSchedule>(&schedule_)) {
    double lr = ms->base_lr;
    for (std::size_t m : ms->milestones) {
      if (step >= m) lr *= ms->gamma;
    }
    return lr;
  }
  const auto& oc = std::get<OneCycleSchedule>(schedule_);
  auto anneal = [&](double start, double end, double pct) {
    if (oc.cosine) return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
    return start + (end - start) * pct;
  };
  // Phase boundaries return the configured anchors exactly.
  if (step == 0) return oc.initial_lr;
  if (step == peak_step_) return oc.max_lr;
  if (step == total_steps_) return oc.final_lr;
  if (step < peak_step_) {
    return anneal(oc.initial_lr, oc.max_lr, static_cast<double>(step) / static_cast<double>(peak_step_));
  }
  return anneal(oc.max_lr, oc.final_lr,
                static_cast<double>(step - peak_step_) / static_cast<double>(total_steps_ - peak_step_));
}

}  // namespace rmix
