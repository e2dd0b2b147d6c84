// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

// Private helpers shared by the kernel and autodiff translation units.

#pragma once

#include <cstddef>
#include <Eigen/Core>

#include "rmix/errors.hpp"
#include "rmix/tensor.hpp"

namespace rmix::internal {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

inline MatMap mat(double* p, std::size_t rows, std::size_t cols) {
  return MatMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline ConstMatMap cmat(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMatMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

struct ConvGeometry {
  std::size_t batch, in_channels, in_h, in_w;
  std::size_t out_channels, kernel, padding;
  std::size_t out_h, out_w;

  std::size_t in_image_size() const { return in_channels * in_h * in_w; }
  std::size_t out_image_size() const { return out_channels * out_h * out_w; }
  std::size_t col_rows() const { return in_channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

inline ConvGeometry conv_geometry(const Shape& input, const Shape& weight, std::size_t padding) {
  if (input.size() != 4 || weight.size() != 4) throw ShapeError("conv2d expects rank-4 input and weight");
  if (weight[1] != input[1]) throw ShapeError("conv2d channel mismatch: input " + shape_string(input) + ", weight " + shape_string(weight));
  if (weight[2] != weight[3]) throw ShapeError("conv2d expects square kernels");
  ConvGeometry g{};
  g.batch = input[0];
  g.in_channels = input[1];
  g.in_h = input[2];
  g.in_w = input[3];
  g.out_channels = weight[0];
  g.kernel = weight[2];
  g.padding = padding;
  if (g.in_h + 2 * padding < g.kernel || g.in_w + 2 * padding < g.kernel) throw ShapeError("conv2d kernel larger than padded input");
  g.out_h = g.in_h + 2 * padding - g.kernel + 1;
  g.out_w = g.in_w + 2 * padding - g.kernel + 1;
  return g;
}

/// Unfolds one [C x H x W] image into a [C*k*k x out_h*out_w] column matrix.
inline void im2col(const ConvGeometry& g, const double* image, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.in_h);
  const auto w = static_cast<std::ptrdiff_t>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
        double* dst = cols + row * g.col_cols();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi + ki) - pad;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj + kj) - pad;
            dst[oi * g.out_w + oj] = (ii >= 0 && ii < h && jj >= 0 && jj < w) ? plane[ii * w + jj] : 0.0;
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters column gradients back into an image buffer.
inline void col2im_add(const ConvGeometry& g, const double* cols, double* image) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.in_h);
  const auto w = static_cast<std::ptrdiff_t>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
        const double* src = cols + row * g.col_cols();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi + ki) - pad;
          if (ii < 0 || ii >= h) continue;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj + kj) - pad;
            if (jj >= 0 && jj < w) plane[ii * w + jj] += src[oi * g.out_w + oj];
          }
        }
      }
    }
  }
}

}  // namespace rmix::internal
