// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/saliency.hpp"

#include <cmath>
#include <ostream>

#include "rmix/errors.hpp"
#include "rmix/kernels.hpp"

namespace rmix {

Tensor saliency_from_gradient(const Tensor& g) {
  if (g.rank() != 3) throw ShapeError("saliency expects a [C x W x W] gradient");
  const std::size_t c = g.dim(0);
  const std::size_t h = g.dim(1);
  const std::size_t w = g.dim(2);
  const std::size_t plane = h * w;
  Tensor phi({h, w});
  const double inv_c = 1.0 / static_cast<double>(c);
  for (std::size_t i = 0; i < plane; ++i) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) s += g[ch * plane + i] * g[ch * plane + i];
    phi[i] = std::sqrt(s * inv_c);
  }
  return phi;
}

Tensor saliency_map(const Model& model, const Tensor& x, const Tensor& target, LossKind kind) {
  if (x.rank() != 3) throw ShapeError("saliency_map expects one [C x W x W] image");
  return saliency_from_gradient(grad_wrt_input(model, x, target, kind));
}

std::vector<Tensor> saliency_maps(const Model& model, const Tensor& batch, const Tensor& targets, LossKind kind) {
  if (batch.rank() != 4) throw ShapeError("saliency_maps expects a [B x C x W x W] batch");
  const Tensor g = grad_wrt_input(model, batch, targets, kind);
  std::vector<Tensor> maps;
  maps.reserve(batch.dim(0));
  for (std::size_t b = 0; b < batch.dim(0); ++b) maps.push_back(saliency_from_gradient(g.slice0(b)));
  return maps;
}

SaliencyGrid normalize_and_pool(const Tensor& phi, std::size_t p, PoolMode mode) {
  if (phi.rank() != 2 || phi.dim(0) != phi.dim(1)) throw ShapeError("saliency map must be square");
  const std::size_t w = phi.dim(0);
  if (p == 0 || w % p != 0) throw ShapeError("grid parameter " + std::to_string(p) + " does not divide image side " + std::to_string(w));
  const std::size_t kernel = mode == PoolMode::kGridSide ? w / p : p;
  const std::size_t side = w / kernel;
  SaliencyGrid out;
  out.side = side;
  for (double v : phi.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ShapeError("saliency map values must be finite and non-negative");
  }
  const double total = sum(phi);
  if (total < 1e-12) {
    out.grid = Tensor({side, side}, 1.0 / static_cast<double>(side * side));
    return out;
  }
  Tensor pooled = avg_pool2d(scale(phi, 1.0 / total), kernel, kernel);
  const double pooled_total = sum(pooled);
  out.grid = scale(pooled, 1.0 / pooled_total);
  return out;
}

void write_saliency_csv(std::ostream& out, std::span<const SaliencyGrid> grids) {
  out << "source,row,col,value\n";
  const auto old_precision = out.precision(17);
  for (const SaliencyGrid& g : grids) {
    for (std::size_t i = 0; i < g.side; ++i) {
      for (std::size_t j = 0; j < g.side; ++j) out << g.source << ',' << i << ',' << j << ',' << g.grid.at(i, j) << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace rmix
