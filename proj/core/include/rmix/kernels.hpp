// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "rmix/tensor.hpp"

namespace rmix {

// Elementwise arithmetic. Shapes must match exactly; there is no broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// y += alpha * x
void axpy(double alpha, const Tensor& x, Tensor& y);

/// [m x k] * [k x n]. Transpose flags apply to the stored operands.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);

/// Cross-correlation of a [B x C x H x W] batch with [O x C x k x k]
/// filters plus a length-O bias, zero padding `padding`, stride 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding);

double sum(const Tensor& t);
double mean(const Tensor& t);
double l2_norm(const Tensor& t);
/// L2 norm of each channel of a [C x H x W] tensor; returns [C].
Tensor l2_norm_per_channel(const Tensor& t);
/// Row-wise softmax of a [B x N] tensor, max-shifted so exp never overflows.
Tensor softmax(const Tensor& logits);
std::size_t argmax(std::span<const double> values);

/// Mean of each kernel x kernel block of a 2-D tensor. Requires
/// kernel == stride and kernel dividing both extents.
Tensor avg_pool2d(const Tensor& t, std::size_t kernel, std::size_t stride);

/// Nearest-neighbour up-sampling: out[i][j] = t[i / factor][j / factor].
Tensor upsample_replicate(const Tensor& t, std::size_t factor);

enum class QuantileMethod {
  /// Position q*(n-1) between sorted order statistics, linearly interpolated.
  kLinear,
  /// Order statistic at ceil(q*n) (1-based), the classic nearest-rank rule.
  kNearestRank,
};

/// q-th quantile of all values of `values`. Rejects empty input, q outside
/// [0, 1] and NaN entries.
double quantile(std::span<const double> values, double q, QuantileMethod method = QuantileMethod::kLinear);
inline double quantile(const Tensor& values, double q, QuantileMethod method = QuantileMethod::kLinear) {
  return quantile(values.data(), q, method);
}

/// dot(a, b) / (|a| |b|). Returns 0 when either norm is below 1e-12 so a
/// degenerate (all-zero) gradient still yields a defined value.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double cosine_similarity(const Tensor& a, const Tensor& b) {
  return cosine_similarity(a.data(), b.data());
}

// Boolean mask algebra over {0, 1} tensors.
bool is_binary(const Tensor& mask);
Tensor mask_not(const Tensor& m);
Tensor mask_and(const Tensor& a, const Tensor& b);
Tensor mask_or(const Tensor& a, const Tensor& b);
/// 1 where a == b.
Tensor mask_equal(const Tensor& a, const Tensor& b);
std::size_t count_nonzero(const Tensor& m);

/// True when every value is finite.
bool all_finite(const Tensor& t);

}  // namespace rmix
