// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <Eigen/Core>

#include "rmix/errors.hpp"
#include "eigen_maps.hpp"

namespace rmix {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out = Tensor::like(a);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

void require_binary(const Tensor& m, const char* op) {
  if (!is_binary(m)) throw ShapeError(std::string(op) + ": mask values must be 0 or 1");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, "add", [](double x, double y) { return x + y; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, "sub", [](double x, double y) { return x - y; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, "mul", [](double x, double y) { return x * y; }); }

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t k2 = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul inner extents differ: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  auto ma = internal::cmat(a.data().data(), a.dim(0), a.dim(1));
  auto mb = internal::cmat(b.data().data(), b.dim(0), b.dim(1));
  auto mo = internal::mat(out.data().data(), m, n);
  if (!transpose_a && !transpose_b) {
    mo.noalias() = ma * mb;
  } else if (transpose_a && !transpose_b) {
    mo.noalias() = ma.transpose() * mb;
  } else if (!transpose_a && transpose_b) {
    mo.noalias() = ma * mb.transpose();
  } else {
    mo.noalias() = ma.transpose() * mb.transpose();
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding) {
  if (input.rank() != 4 || weight.rank() != 4 || bias.rank() != 1) {
    throw ShapeError("conv2d expects input [BxCxHxW], weight [OxCxkxk], bias [O]");
  }
  const internal::ConvGeometry g = internal::conv_geometry(input.shape(), weight.shape(), padding);
  if (bias.dim(0) != g.out_channels) throw ShapeError("conv2d bias length must equal output channels");
  Tensor out({g.batch, g.out_channels, g.out_h, g.out_w});
  Buffer cols(g.col_rows() * g.col_cols());
  auto w = internal::cmat(weight.data().data(), g.out_channels, g.col_rows());
  for (std::size_t b = 0; b < g.batch; ++b) {
    internal::im2col(g, input.data().data() + b * g.in_image_size(), cols.data());
    auto o = internal::mat(out.data().data() + b * g.out_image_size(), g.out_channels, g.col_cols());
    o.noalias() = w * internal::cmat(cols.data(), g.col_rows(), g.col_cols());
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) o.row(static_cast<Eigen::Index>(oc)).array() += bias[oc];
  }
  return out;
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

double mean(const Tensor& t) { return sum(t) / static_cast<double>(t.size()); }

double l2_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

Tensor l2_norm_per_channel(const Tensor& t) {
  if (t.rank() != 3) throw ShapeError("l2_norm_per_channel expects [C x H x W]");
  const std::size_t c = t.dim(0);
  const std::size_t plane = t.dim(1) * t.dim(2);
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += t[ch * plane + i] * t[ch * plane + i];
    out[ch] = std::sqrt(s);
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [B x N]");
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  Tensor out = Tensor::like(logits);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = logits.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    // z >= 1 because the max entry contributes exp(0).
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  return out;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ShapeError("argmax of empty span");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

Tensor avg_pool2d(const Tensor& t, std::size_t kernel, std::size_t stride) {
  if (t.rank() != 2) throw ShapeError("avg_pool2d expects a 2-D tensor");
  if (kernel == 0 || kernel != stride) throw ShapeError("avg_pool2d requires kernel == stride > 0");
  const std::size_t h = t.dim(0);
  const std::size_t w = t.dim(1);
  if (h % kernel != 0 || w % kernel != 0) {
    throw ShapeError("avg_pool2d kernel " + std::to_string(kernel) + " does not divide " + shape_string(t.shape()));
  }
  const std::size_t oh = h / kernel;
  const std::size_t ow = w / kernel;
  Tensor out({oh, ow});
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double s = 0.0;
      for (std::size_t di = 0; di < kernel; ++di) {
        for (std::size_t dj = 0; dj < kernel; ++dj) s += t.at(i * kernel + di, j * kernel + dj);
      }
      out.at(i, j) = s * inv;
    }
  }
  return out;
}

Tensor upsample_replicate(const Tensor& t, std::size_t factor) {
  if (t.rank() != 2) throw ShapeError("upsample_replicate expects a 2-D tensor");
  if (factor == 0) throw ShapeError("upsample_replicate factor must be >= 1");
  const std::size_t oh = t.dim(0) * factor;
  const std::size_t ow = t.dim(1) * factor;
  Tensor out({oh, ow});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) out.at(i, j) = t.at(i / factor, j / factor);
  }
  return out;
}

double quantile(std::span<const double> values, double q, QuantileMethod method) {
  if (values.empty()) throw ShapeError("quantile of empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw ShapeError("quantile fraction must lie in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (std::isnan(v)) throw ShapeError("quantile input contains NaN");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (method == QuantileMethod::kNearestRank) {
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return sorted[rank == 0 ? 0 : rank - 1];
  }
  const double pos = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

bool is_binary(const Tensor& mask) {
  return std::all_of(mask.data().begin(), mask.data().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

Tensor mask_not(const Tensor& m) {
  require_binary(m, "mask_not");
  Tensor out = Tensor::like(m);
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = 1.0 - m[i];
  return out;
}

Tensor mask_and(const Tensor& a, const Tensor& b) {
  require_binary(a, "mask_and");
  require_binary(b, "mask_and");
  return zip(a, b, "mask_and", [](double x, double y) { return x * y; });
}

Tensor mask_or(const Tensor& a, const Tensor& b) {
  require_binary(a, "mask_or");
  require_binary(b, "mask_or");
  return zip(a, b, "mask_or", [](double x, double y) { return std::max(x, y); });
}

Tensor mask_equal(const Tensor& a, const Tensor& b) {
  require_binary(a, "mask_equal");
  require_binary(b, "mask_equal");
  return zip(a, b, "mask_equal", [](double x, double y) { return x == y ? 1.0 : 0.0; });
}

std::size_t count_nonzero(const Tensor& m) {
  return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(), [](double v) { return v != 0.0; }));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace rmix
