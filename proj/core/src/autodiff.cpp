// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "eigen_maps.hpp"
#include "rmix/errors.hpp"
#include "rmix/kernels.hpp"

namespace rmix {

const Tensor& Var::value() const {
  if (!tape_) throw ShapeError("value() of a detached Var");
  return tape_->value(*this);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw ShapeError("Var does not belong to this tape");
  return nodes_[v.id()];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape() != this || v.id() >= nodes_.size()) throw ShapeError("Var does not belong to this tape");
  return nodes_[v.id()];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = requires_grad ? "leaf" : "constant";
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const Var& p : parents) {
    const Node& parent = node(p);
    n.requires_grad = n.requires_grad || parent.requires_grad;
    n.parents.push_back(p.id());
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::clear_grads() {
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this || loss.id() >= nodes_.size()) throw ShapeError("backward: loss node is detached from this tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(nodes_[loss.id()].value.shape()));
  }
  clear_grads();
  if (!nodes_[loss.id()].requires_grad) return;
  accumulate(loss, Tensor(nodes_[loss.id()].value.shape(), 1.0));
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.has_grad) {
    // Lazily materialize zeros so callers always see the value's shape.
    Node& mut = const_cast<Node&>(n);
    mut.grad = Tensor::like(n.value);
    mut.has_grad = true;
  }
  return n.grad;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
const Tensor& Tape::value(Var v) const { return node(v).value; }
std::string_view Tape::op(Var v) const { return node(v).op; }

Tensor* Tape::grad_slot(Var target) {
  Node& n = node(target);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor::like(n.value);
    n.has_grad = true;
  }
  return &n.grad;
}

void Tape::accumulate(Var target, const Tensor& g) {
  Tensor* slot = grad_slot(target);
  if (!slot) return;
  if (slot->shape() != g.shape()) {
    throw ShapeError("gradient shape " + shape_string(g.shape()) + " does not match value shape " + shape_string(slot->shape()));
  }
  axpy(1.0, g, *slot);
}

namespace ad {

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw ShapeError("operation on a detached Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape() != &t) throw ShapeError("operands live on different tapes");
  return t;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_targets(const Tensor& logits, const Tensor& targets, const char* op) {
  if (logits.rank() != 2) throw ShapeError(std::string(op) + " expects logits [B x N]");
  if (targets.shape() != logits.shape()) {
    throw ShapeError(std::string(op) + ": targets " + shape_string(targets.shape()) + " vs logits " + shape_string(logits.shape()));
  }
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record("add", rmix::add(a.value(), b.value()), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record("sub", rmix::sub(a.value(), b.value()), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, rmix::scale(g, -1.0));
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record("mul", rmix::mul(a.value(), b.value()), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, rmix::mul(g, b.value()));
    if (tape.requires_grad(b)) tape.accumulate(b, rmix::mul(g, a.value()));
  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  return t.record("scale", rmix::scale(a.value(), factor), {a},
                  [a, factor](Tape& tape, const Tensor& g) { tape.accumulate(a, rmix::scale(g, factor)); });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  return t.record("sum", Tensor::scalar(rmix::sum(a.value())), {a},
                  [a](Tape& tape, const Tensor& g) { tape.accumulate(a, Tensor(a.shape(), g.item())); });
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  const double n = static_cast<double>(a.value().size());
  return t.record("mean", Tensor::scalar(rmix::mean(a.value())), {a},
                  [a, n](Tape& tape, const Tensor& g) { tape.accumulate(a, Tensor(a.shape(), g.item() / n)); });
}

Var dot(Var a, const Tensor& weights) {
  Tape& t = tape_of(a);
  if (weights.shape() != a.shape()) throw ShapeError("dot: weight shape mismatch");
  return t.record("dot", Tensor::scalar(rmix::sum(rmix::mul(a.value(), weights))), {a},
                  [a, weights](Tape& tape, const Tensor& g) { tape.accumulate(a, rmix::scale(weights, g.item())); });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  return t.record("reshape", a.value().reshaped(std::move(shape)), {a},
                  [a](Tape& tape, const Tensor& g) { tape.accumulate(a, g.reshaped(a.shape())); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record("matmul", rmix::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(a)) tape.accumulate(a, rmix::matmul(g, b.value(), false, true));
    if (tape.requires_grad(b)) tape.accumulate(b, rmix::matmul(a.value(), g, true, false));
  });
}

Var linear(Var x, Var weight, Var bias) {
  Tape& t = tape_of(x, weight);
  tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || wv.dim(1) != xv.dim(1) || bv.dim(0) != wv.dim(0)) {
    throw ShapeError("linear: x " + shape_string(xv.shape()) + ", weight " + shape_string(wv.shape()) + ", bias " +
                     shape_string(bv.shape()));
  }
  Tensor out = rmix::matmul(xv, wv, false, true);
  const std::size_t rows = out.dim(0);
  const std::size_t cols = out.dim(1);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  return t.record("linear", std::move(out), {x, weight, bias}, [x, weight, bias](Tape& tape, const Tensor& g) {
    if (tape.requires_grad(x)) tape.accumulate(x, rmix::matmul(g, weight.value()));
    if (tape.requires_grad(weight)) tape.accumulate(weight, rmix::matmul(g, x.value(), true, false));
    if (Tensor* slot = tape.grad_slot(bias)) {
      const std::size_t rows = g.dim(0);
      const std::size_t cols = g.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) (*slot)[c] += g[r * cols + c];
      }
    }
  });
}

Var conv2d(Var x, Var weight, Var bias, std::size_t padding) {
  Tape& t = tape_of(x, weight);
  tape_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  const internal::ConvGeometry geo = internal::conv_geometry(xv.shape(), wv.shape(), padding);
  if (bv.rank() != 1 || bv.dim(0) != geo.out_channels) throw ShapeError("conv2d bias length must equal output channels");

  Buffer cols(geo.col_rows() * geo.col_cols());
  Tensor out({geo.batch, geo.out_channels, geo.out_h, geo.out_w});
  auto w = internal::cmat(wv.data().data(), geo.out_channels, geo.col_rows());
  for (std::size_t b = 0; b < geo.batch; ++b) {
    double* col = cols.data();
    internal::im2col(geo, xv.data().data() + b * geo.in_image_size(), col);
    auto o = internal::mat(out.data().data() + b * geo.out_image_size(), geo.out_channels, geo.col_cols());
    o.noalias() = w * internal::cmat(col, geo.col_rows(), geo.col_cols());
    for (std::size_t oc = 0; oc < geo.out_channels; ++oc) o.row(static_cast<Eigen::Index>(oc)).array() += bv[oc];
  }

  return t.record("conv2d", std::move(out), {x, weight, bias}, [x, weight, bias, geo](Tape& tape, const Tensor& g) {
    Tensor* gx = tape.grad_slot(x);
    Tensor* gw = tape.grad_slot(weight);
    Tensor* gb = tape.grad_slot(bias);
    const Tensor& wv = weight.value();
    auto w = internal::cmat(wv.data().data(), geo.out_channels, geo.col_rows());
    // Columns are rebuilt per image rather than kept from the forward pass;
    // holding them for a whole batch costs more in memory traffic than the
    // recomputation.
    Buffer col(gw ? geo.col_rows() * geo.col_cols() : 0);
    Buffer dcols(gx ? geo.col_rows() * geo.col_cols() : 0);
    for (std::size_t b = 0; b < geo.batch; ++b) {
      auto go = internal::cmat(g.data().data() + b * geo.out_image_size(), geo.out_channels, geo.col_cols());
      if (gw) {
        internal::im2col(geo, x.value().data().data() + b * geo.in_image_size(), col.data());
        internal::mat(gw->data().data(), geo.out_channels, geo.col_rows()).noalias() +=
            go * internal::cmat(col.data(), geo.col_rows(), geo.col_cols()).transpose();
      }
      if (gb) {
        for (std::size_t oc = 0; oc < geo.out_channels; ++oc) (*gb)[oc] += go.row(static_cast<Eigen::Index>(oc)).sum();
      }
      if (gx) {
        internal::mat(dcols.data(), geo.col_rows(), geo.col_cols()).noalias() = w.transpose() * go;
        internal::col2im_add(geo, dcols.data(), gx->data().data() + b * geo.in_image_size());
      }
    }
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return t.record("relu", std::move(out), {a}, [a](Tape& tape, const Tensor& g) {
    Tensor* slot = tape.grad_slot(a);
    const Tensor& in = a.value();
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > 0.0) (*slot)[i] += g[i];
    }
  });
}

Var max_pool2d(Var a, std::size_t size) {
  Tape& t = tape_of(a);
  const Tensor& in = a.value();
  if (in.rank() != 4) throw ShapeError("max_pool2d expects [B x C x H x W]");
  if (size == 0 || in.dim(2) % size != 0 || in.dim(3) % size != 0) {
    throw ShapeError("max_pool2d size " + std::to_string(size) + " does not divide " + shape_string(in.shape()));
  }
  const std::size_t planes = in.dim(0) * in.dim(1);
  const std::size_t h = in.dim(2), w = in.dim(3);
  const std::size_t oh = h / size, ow = w / size;
  Tensor out({in.dim(0), in.dim(1), oh, ow});
  auto winners = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data().data() + p * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        // First maximum in row-major block order wins ties.
        std::size_t best = (i * size) * w + j * size;
        for (std::size_t di = 0; di < size; ++di) {
          for (std::size_t dj = 0; dj < size; ++dj) {
            const std::size_t idx = (i * size + di) * w + j * size + dj;
            if (src[idx] > src[best]) best = idx;
          }
        }
        const std::size_t o = p * oh * ow + i * ow + j;
        out[o] = src[best];
        (*winners)[o] = p * h * w + best;
      }
    }
  }
  return t.record("max_pool2d", std::move(out), {a}, [a, winners](Tape& tape, const Tensor& g) {
    Tensor* slot = tape.grad_slot(a);
    for (std::size_t o = 0; o < g.size(); ++o) (*slot)[(*winners)[o]] += g[o];
  });
}

Var log_softmax(Var logits) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ShapeError("log_softmax expects [B x N]");
  const std::size_t rows = z.dim(0), cols = z.dim(1);
  Tensor out = Tensor::like(z);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = z.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = in[c] - lse;
  }
  Tensor probs = out;
  for (double& v : probs.data()) v = std::exp(v);
  return t.record("log_softmax", std::move(out), {logits}, [logits, probs](Tape& tape, const Tensor& g) {
    const std::size_t rows = g.dim(0), cols = g.dim(1);
    Tensor gin = Tensor::like(g);
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gin[r * cols + c] = g[r * cols + c] - probs[r * cols + c] * gs;
    }
    tape.accumulate(logits, gin);
  });
}

Var sigmoid_bce(Var logits, const Tensor& targets, Reduction reduction) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  check_targets(z, targets, "sigmoid_bce");
  const std::size_t rows = z.dim(0), cols = z.dim(1);
  const double batch_scale = reduction == Reduction::kMean ? 1.0 / static_cast<double>(rows) : 1.0;
  const double weight = batch_scale / static_cast<double>(cols);
  double loss = 0.0;
  Tensor dz = Tensor::like(z);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = sigmoid(z[i]);
    const double q = sigmoid(-z[i]);
    const double y = targets[i];
    const double pc = std::clamp(p, kLogClamp, 1.0 - kLogClamp);
    const double qc = std::clamp(q, kLogClamp, 1.0 - kLogClamp);
    loss -= y * std::log(pc) + (1.0 - y) * std::log(qc);
    // Exact derivative of the clamped expression: a clamped log contributes nothing.
    const bool p_free = p > kLogClamp && p < 1.0 - kLogClamp;
    const bool q_free = q > kLogClamp && q < 1.0 - kLogClamp;
    dz[i] = weight * ((p_free ? -y * q : 0.0) + (q_free ? (1.0 - y) * p : 0.0));
  }
  return t.record("sigmoid_bce", Tensor::scalar(loss * weight), {logits},
                  [logits, dz](Tape& tape, const Tensor& g) { tape.accumulate(logits, rmix::scale(dz, g.item())); });
}

Var softmax_cross_entropy(Var logits, const Tensor& targets, Reduction reduction) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  check_targets(z, targets, "softmax_cross_entropy");
  const std::size_t rows = z.dim(0), cols = z.dim(1);
  const double weight = reduction == Reduction::kMean ? 1.0 / static_cast<double>(rows) : 1.0;
  const Tensor probs = rmix::softmax(z);
  double loss = 0.0;
  Tensor dz = Tensor::like(z);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = z.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
    const double lse = mx + std::log(s);
    double mass = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      loss -= targets[r * cols + c] * (in[c] - lse);
      mass += targets[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) {
      dz[r * cols + c] = weight * (probs[r * cols + c] * mass - targets[r * cols + c]);
    }
  }
  return t.record("softmax_cross_entropy", Tensor::scalar(loss * weight), {logits},
                  [logits, dz](Tape& tape, const Tensor& g) { tape.accumulate(logits, rmix::scale(dz, g.item())); });
}

}  // namespace ad

}  // namespace rmix
