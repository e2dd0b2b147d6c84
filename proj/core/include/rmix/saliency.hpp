// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "rmix/netlib.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

/// Normalized, down-sampled saliency of one image: a p x p probability grid.
struct SaliencyGrid {
  Tensor grid;
  std::size_t source = 0;
  std::size_t side = 0;
};

/// How the grid-side parameter p is read when pooling a W x W map.
enum class PoolMode {
  /// Output is p x p; the pooling kernel is W / p.
  kGridSide,
  /// The pooling kernel is p; the output is (W / p) x (W / p).
  kKernelSide,
};

/// Channel-RMS of an input gradient [C x W x W]:
/// phi[i][j] = sqrt(sum_c g[c][i][j]^2 / C).
Tensor saliency_from_gradient(const Tensor& input_grad);

/// Saliency of one image [C x W x W] under `target` ([N], usually one-hot).
Tensor saliency_map(const Model& model, const Tensor& x, const Tensor& target, LossKind kind = LossKind::kSigmoidBce);

/// Per-image saliency maps of a batch [B x C x W x W] from one backward pass.
std::vector<Tensor> saliency_maps(const Model& model, const Tensor& batch, const Tensor& targets,
                                  LossKind kind = LossKind::kSigmoidBce);

/// Scales phi to unit sum, average-pools it, and rescales so the grid sums to
/// one. A map whose sum is below 1e-12 yields the uniform grid.
SaliencyGrid normalize_and_pool(const Tensor& phi, std::size_t p, PoolMode mode = PoolMode::kGridSide);

/// One CSV block per grid: "source,row,col,value".
void write_saliency_csv(std::ostream& out, std::span<const SaliencyGrid> grids);

}  // namespace rmix
