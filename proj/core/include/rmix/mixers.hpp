// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmix/kernels.hpp"
#include "rmix/rng.hpp"
#include "rmix/saliency.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

/// Binary top/least-salient split of one image at grid and pixel resolution.
struct PatchMask {
  Tensor grid;    ///< [p x p], 1 = top salient
  Tensor pixels;  ///< [W x W], grid replicated by W / p
  double q = 0.0;
  std::size_t p = 0;
};

/// Cells at or above the q-th quantile of the grid become 1. Ties at the
/// threshold are included, so the mask is never empty.
PatchMask build_mask(const SaliencyGrid& grid, double q, std::size_t image_side,
                     QuantileMethod method = QuantileMethod::kLinear);

/// Mask from an explicit binary grid; used by tests and by callers that
/// construct masks by hand.
PatchMask mask_from_grid(const Tensor& grid, std::size_t image_side);

/// Cells where both masks agree (top-top or least-least). Rejects masks of
/// different grid sizes.
PatchMask intersection_mask(const PatchMask& m0, const PatchMask& m1);

/// Which source a disagreement cell (exactly one mask set) is taken from.
enum class DisagreementRule {
  kSelectTop,    ///< the image whose patch is top salient (R-Mix)
  kSelectLeast,  ///< the image whose patch is least salient (strategy 4)
};

struct MixedPair {
  Tensor image;  ///< [C x W x W]
  Tensor label;  ///< [N]
  double weight0 = 0.0;
  double weight1 = 0.0;
  std::size_t agree_pixels = 0;
  std::size_t from0_pixels = 0;
  std::size_t from1_pixels = 0;
};

/// Blends agreement pixels with lambda and copies disagreement pixels from
/// one side, per `rule`. The label weights count pixels: agreement pixels
/// split lambda : 1 - lambda, copied pixels go to their source.
MixedPair rmix_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const PatchMask& m0,
                    const PatchMask& m1, double lambda, DisagreementRule rule = DisagreementRule::kSelectTop);

/// lambda * x0 + (1 - lambda) * x1 with matching label weights.
MixedPair input_mixup_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, double lambda);

/// Pastes the top-salient region of x1 (its mask m1) onto x0.
MixedPair strategy1_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const PatchMask& m1);

/// Pastes x1 wherever the two masks agree (top-top and least-least cells) and
/// keeps x0 on the disagreement cells.
MixedPair strategy2_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const PatchMask& m0,
                         const PatchMask& m1);

struct CutBox {
  std::size_t top = 0, left = 0, height = 0, width = 0;
};

/// Rectangle with side ratio sqrt(1 - lambda), placed uniformly among the
/// positions that keep it inside the image.
CutBox cutmix_box(double lambda, std::size_t side, Rng& rng);
MixedPair paste_box(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const CutBox& box);
MixedPair cutmix_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, double lambda, Rng& rng);

enum class MixVariant { kNone, kRMix, kInputMixup, kCutMix, kStrategy1, kStrategy2, kStrategy4 };

std::string to_string(MixVariant v);
MixVariant mix_variant_from_string(const std::string& name);

enum class Granularity {
  kPerBatch,  ///< one (lambda, q, p) draw shared by the whole batch
  kPerPair,   ///< a fresh draw for every pair
};

struct MixPolicy {
  MixVariant variant = MixVariant::kRMix;
  double alpha = 1.0;
  std::size_t k = 10;
  std::vector<std::size_t> p_set{2, 4};
  Granularity granularity = Granularity::kPerBatch;
  PoolMode pool = PoolMode::kGridSide;
  QuantileMethod quantile = QuantileMethod::kLinear;

  bool needs_saliency() const;
  /// Throws ShapeError on alpha <= 0, k == 0, an empty p set or a p that
  /// does not divide `image_side`.
  void validate(std::size_t image_side) const;
};

/// K equally spaced values from 0.0 to 0.99 (just {0} when K == 1).
std::vector<double> topk_space(std::size_t k);

struct MixRecord {
  std::size_t first = 0;
  std::size_t second = 0;
  double lambda = 1.0;
  double q0 = 0.0;
  double q1 = 0.0;
  std::size_t p = 0;
  std::size_t agree_pixels = 0;
  std::size_t from0_pixels = 0;
  std::size_t from1_pixels = 0;
  double weight0 = 1.0;
  double weight1 = 0.0;
};

struct MixedBatch {
  Tensor images;  ///< [B x C x W x W]
  Tensor labels;  ///< [B x N]
  std::vector<MixRecord> provenance;
};

struct MixOverrides {
  /// Per-image q values (one per batch item) replacing the sampled q.
  std::span<const double> per_image_q;
  /// Fixed grid parameter replacing the sampled p.
  std::optional<std::size_t> p;
};

/// Mixes every item with a partner from a random permutation of the batch.
/// Draw order: permutation, then lambda, q index and p index (once per batch,
/// or per pair), then any CutMix box position. `saliency` holds one raw W x W
/// map per item when the policy needs it.
MixedBatch mix_batch(const Tensor& images, const Tensor& labels, const MixPolicy& policy, Rng& rng,
                     std::span<const Tensor> saliency = {}, const MixOverrides& overrides = {});

void write_provenance_header(std::ostream& out);
void write_provenance_rows(std::ostream& out, const MixedBatch& batch, std::size_t batch_index);

}  // namespace rmix
