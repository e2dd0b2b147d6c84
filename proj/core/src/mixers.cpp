// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/mixers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "rmix/errors.hpp"

namespace rmix {

namespace {

// Convex blend that is exact when a == b and at lambda in {0, 1}, clamped to
// the source interval so rounding never leaves it.
double blend(double a, double b, double lambda) {
  if (a == b) return a;
  const double v = lambda * a + (1.0 - lambda) * b;
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

void check_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1) {
  if (x0.rank() != 3 || x0.dim(1) != x0.dim(2)) throw ShapeError("mixing expects square [C x W x W] images");
  if (x1.shape() != x0.shape()) throw ShapeError("mixing images differ in shape");
  if (y0.rank() != 1 || y1.shape() != y0.shape()) throw ShapeError("mixing labels must be equal-length vectors");
}

void check_mask(const PatchMask& m, std::size_t side) {
  if (m.pixels.rank() != 2 || m.pixels.dim(0) != side || m.pixels.dim(1) != side) {
    throw ShapeError("pixel mask " + shape_string(m.pixels.shape()) + " does not match image side " + std::to_string(side));
  }
}

Tensor blend_labels(const Tensor& y0, const Tensor& y1, double weight0) {
  Tensor out = Tensor::like(y0);
  for (std::size_t i = 0; i < y0.size(); ++i) out[i] = blend(y0[i], y1[i], weight0);
  return out;
}

// Builds the pair from a per-pixel source selector: 0 -> x0, 1 -> x1, 2 -> blend.
template <typename Select>
MixedPair compose(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, double lambda, Select select) {
  const std::size_t c = x0.dim(0);
  const std::size_t side = x0.dim(1);
  const std::size_t plane = side * side;
  MixedPair out;
  out.image = Tensor::like(x0);
  for (std::size_t i = 0; i < plane; ++i) {
    const int src = select(i);
    if (src == 2) ++out.agree_pixels;
    else if (src == 0) ++out.from0_pixels;
    else ++out.from1_pixels;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t k = ch * plane + i;
      out.image[k] = src == 2 ? blend(x0[k], x1[k], lambda) : (src == 0 ? x0[k] : x1[k]);
    }
  }
  const double area = static_cast<double>(plane);
  out.weight0 = (static_cast<double>(out.agree_pixels) * lambda + static_cast<double>(out.from0_pixels)) / area;
  out.weight1 = 1.0 - out.weight0;
  out.label = blend_labels(y0, y1, out.weight0);
  return out;
}

}  // namespace

PatchMask build_mask(const SaliencyGrid& grid, double q, std::size_t image_side, QuantileMethod method) {
  if (!(q >= 0.0 && q <= 0.99 + 1e-12)) throw ShapeError("top-k fraction q must lie in [0, 0.99]");
  const double threshold = quantile(grid.grid, q, method);
  Tensor m = Tensor::like(grid.grid);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = grid.grid[i] >= threshold ? 1.0 : 0.0;
  PatchMask out = mask_from_grid(m, image_side);
  out.q = q;
  return out;
}

PatchMask mask_from_grid(const Tensor& grid, std::size_t image_side) {
  if (grid.rank() != 2 || grid.dim(0) != grid.dim(1)) throw ShapeError("mask grid must be square");
  if (!is_binary(grid)) throw ShapeError("mask grid must be binary");
  const std::size_t p = grid.dim(0);
  if (image_side % p != 0) throw ShapeError("mask grid side " + std::to_string(p) + " does not divide image side " + std::to_string(image_side));
  PatchMask out;
  out.grid = grid;
  out.pixels = upsample_replicate(grid, image_side / p);
  out.p = p;
  return out;
}

PatchMask intersection_mask(const PatchMask& m0, const PatchMask& m1) {
  if (m0.p != m1.p || m0.grid.shape() != m1.grid.shape()) {
    throw ShapeError("intersection of masks with different grid sizes (" + std::to_string(m0.p) + " vs " + std::to_string(m1.p) + ")");
  }
  PatchMask out;
  out.grid = mask_equal(m0.grid, m1.grid);
  out.pixels = mask_equal(m0.pixels, m1.pixels);
  out.p = m0.p;
  return out;
}

MixedPair rmix_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const PatchMask& m0,
                    const PatchMask& m1, double lambda, DisagreementRule rule) {
  check_pair(x0, y0, x1, y1);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ShapeError("lambda must lie in [0, 1]");
  const std::size_t side = x0.dim(1);
  check_mask(m0, side);
  check_mask(m1, side);
  const PatchMask inter = intersection_mask(m0, m1);
  const double keep = rule == DisagreementRule::kSelectTop ? 1.0 : 0.0;
  return compose(x0, y0, x1, y1, lambda, [&](std::size_t i) {
    if (inter.pixels[i] == 1.0) return 2;
    return m0.pixels[i] == keep ? 0 : 1;
  });
}

MixedPair input_mixup_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, double lambda) {
  check_pair(x0, y0, x1, y1);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ShapeError("lambda must lie in [0, 1]");
  return compose(x0, y0, x1, y1, lambda, [](std::size_t) { return 2; });
}

MixedPair strategy1_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const PatchMask& m1) {
  check_pair(x0, y0, x1, y1);
  check_mask(m1, x0.dim(1));
  return compose(x0, y0, x1, y1, 1.0, [&](std::size_t i) { return m1.pixels[i] == 1.0 ? 1 : 0; });
}

MixedPair strategy2_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const PatchMask& m0,
                         const PatchMask& m1) {
  check_pair(x0, y0, x1, y1);
  check_mask(m0, x0.dim(1));
  check_mask(m1, x0.dim(1));
  const PatchMask inter = intersection_mask(m0, m1);
  return compose(x0, y0, x1, y1, 1.0, [&](std::size_t i) { return inter.pixels[i] == 1.0 ? 1 : 0; });
}

CutBox cutmix_box(double lambda, std::size_t side, Rng& rng) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ShapeError("lambda must lie in [0, 1]");
  const double ratio = std::sqrt(1.0 - lambda);
  const auto extent = std::min(side, static_cast<std::size_t>(std::floor(static_cast<double>(side) * ratio)));
  CutBox box;
  box.height = extent;
  box.width = extent;
  box.top = rng.uniform_index(side - extent + 1);
  box.left = rng.uniform_index(side - extent + 1);
  return box;
}

MixedPair paste_box(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, const CutBox& box) {
  check_pair(x0, y0, x1, y1);
  const std::size_t side = x0.dim(1);
  if (box.top + box.height > side || box.left + box.width > side) throw ShapeError("cut box exceeds image bounds");
  return compose(x0, y0, x1, y1, 1.0, [&](std::size_t i) {
    const std::size_t r = i / side;
    const std::size_t c = i % side;
    const bool inside = r >= box.top && r < box.top + box.height && c >= box.left && c < box.left + box.width;
    return inside ? 1 : 0;
  });
}

MixedPair cutmix_pair(const Tensor& x0, const Tensor& y0, const Tensor& x1, const Tensor& y1, double lambda, Rng& rng) {
  check_pair(x0, y0, x1, y1);
  return paste_box(x0, y0, x1, y1, cutmix_box(lambda, x0.dim(1), rng));
}

std::string to_string(MixVariant v) {
  switch (v) {
    case MixVariant::kNone: return "none";
    case MixVariant::kRMix: return "rmix";
    case MixVariant::kInputMixup: return "input_mixup";
    case MixVariant::kCutMix: return "cutmix";
    case MixVariant::kStrategy1: return "strategy1";
    case MixVariant::kStrategy2: return "strategy2";
    case MixVariant::kStrategy4: return "strategy4";
  }
  return "unknown";
}

MixVariant mix_variant_from_string(const std::string& name) {
  for (MixVariant v : {MixVariant::kNone, MixVariant::kRMix, MixVariant::kInputMixup, MixVariant::kCutMix,
                       MixVariant::kStrategy1, MixVariant::kStrategy2, MixVariant::kStrategy4}) {
    if (to_string(v) == name) return v;
  }
  throw ShapeError("unknown mix policy '" + name + "'");
}

bool MixPolicy::needs_saliency() const {
  return variant == MixVariant::kRMix || variant == MixVariant::kStrategy1 || variant == MixVariant::kStrategy2 ||
         variant == MixVariant::kStrategy4;
}

void MixPolicy::validate(std::size_t image_side) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ShapeError("mix alpha must be positive");
  if (k == 0) throw ShapeError("top-k space size K must be at least 1");
  if (p_set.empty()) throw ShapeError("mix p set must not be empty");
  for (std::size_t p : p_set) {
    if (p == 0 || image_side % p != 0) throw ShapeError("p = " + std::to_string(p) + " does not divide image side " + std::to_string(image_side));
  }
}

std::vector<double> topk_space(std::size_t k) {
  if (k == 0) throw ShapeError("top-k space size must be at least 1");
  std::vector<double> out(k, 0.0);
  for (std::size_t i = 1; i < k; ++i) out[i] = 0.99 * static_cast<double>(i) / static_cast<double>(k - 1);
  return out;
}

MixedBatch mix_batch(const Tensor& images, const Tensor& labels, const MixPolicy& policy, Rng& rng,
                     std::span<const Tensor> saliency, const MixOverrides& overrides) {
  if (images.rank() != 4) throw ShapeError("mix_batch expects [B x C x W x W] images");
  const std::size_t batch = images.dim(0);
  const std::size_t side = images.dim(2);
  if (images.dim(3) != side) throw ShapeError("mix_batch expects square images");
  if (labels.rank() != 2 || labels.dim(0) != batch) throw ShapeError("mix_batch expects [B x N] labels");
  policy.validate(side);
  if (policy.needs_saliency() && saliency.size() != batch) {
    throw ShapeError("mix policy " + to_string(policy.variant) + " needs one saliency map per image");
  }
  if (!overrides.per_image_q.empty() && overrides.per_image_q.size() != batch) {
    throw ShapeError("per-image q override must have one entry per image");
  }
  if (overrides.p && (*overrides.p == 0 || side % *overrides.p != 0)) throw ShapeError("override p does not divide image side");

  MixedBatch out{images, labels, {}};
  out.provenance.resize(batch);
  if (policy.variant == MixVariant::kNone) {
    for (std::size_t i = 0; i < batch; ++i) {
      out.provenance[i].first = out.provenance[i].second = i;
      out.provenance[i].agree_pixels = side * side;
    }
    return out;
  }

  const std::vector<std::size_t> perm = rng.permutation(batch);
  const std::vector<double> space = topk_space(policy.k);
  struct Draw {
    double lambda, q;
    std::size_t p;
  };
  auto draw = [&]() {
    Draw d{};
    d.lambda = rng.beta(policy.alpha, policy.alpha);
    d.q = space[rng.uniform_index(space.size())];
    d.p = policy.p_set[rng.uniform_index(policy.p_set.size())];
    if (overrides.p) d.p = *overrides.p;
    return d;
  };
  Draw shared{};
  if (policy.granularity == Granularity::kPerBatch) shared = draw();

  std::map<std::pair<std::size_t, std::size_t>, SaliencyGrid> grid_cache;
  auto mask_for = [&](std::size_t item, std::size_t p, double q) {
    auto key = std::make_pair(item, p);
    auto it = grid_cache.find(key);
    if (it == grid_cache.end()) {
      SaliencyGrid g = normalize_and_pool(saliency[item], p, policy.pool);
      g.source = item;
      it = grid_cache.emplace(key, std::move(g)).first;
    }
    return build_mask(it->second, q, side, policy.quantile);
  };

  for (std::size_t i = 0; i < batch; ++i) {
    const Draw d = policy.granularity == Granularity::kPerBatch ? shared : draw();
    const std::size_t j = perm[i];
    const Tensor x0 = images.slice0(i);
    const Tensor x1 = images.slice0(j);
    const Tensor y0 = labels.slice0(i);
    const Tensor y1 = labels.slice0(j);
    const double q0 = overrides.per_image_q.empty() ? d.q : overrides.per_image_q[i];
    const double q1 = overrides.per_image_q.empty() ? d.q : overrides.per_image_q[j];

    MixedPair pair;
    std::size_t grid_p = d.p;
    switch (policy.variant) {
      case MixVariant::kRMix:
      case MixVariant::kStrategy4: {
        const PatchMask m0 = mask_for(i, d.p, q0);
        const PatchMask m1 = mask_for(j, d.p, q1);
        grid_p = m0.p;
        pair = rmix_pair(x0, y0, x1, y1, m0, m1, d.lambda,
                         policy.variant == MixVariant::kRMix ? DisagreementRule::kSelectTop : DisagreementRule::kSelectLeast);
        break;
      }
      case MixVariant::kStrategy1: {
        const PatchMask m1 = mask_for(j, d.p, q1);
        grid_p = m1.p;
        pair = strategy1_pair(x0, y0, x1, y1, m1);
        break;
      }
      case MixVariant::kStrategy2: {
        const PatchMask m0 = mask_for(i, d.p, q0);
        const PatchMask m1 = mask_for(j, d.p, q1);
        grid_p = m0.p;
        pair = strategy2_pair(x0, y0, x1, y1, m0, m1);
        break;
      }
      case MixVariant::kInputMixup:
        pair = input_mixup_pair(x0, y0, x1, y1, d.lambda);
        break;
      case MixVariant::kCutMix:
        pair = cutmix_pair(x0, y0, x1, y1, d.lambda, rng);
        break;
      case MixVariant::kNone:
        break;
    }
    out.images.set_slice0(i, pair.image);
    out.labels.set_slice0(i, pair.label);
    MixRecord& rec = out.provenance[i];
    rec.first = i;
    rec.second = j;
    rec.lambda = d.lambda;
    rec.q0 = q0;
    rec.q1 = q1;
    rec.p = grid_p;
    rec.agree_pixels = pair.agree_pixels;
    rec.from0_pixels = pair.from0_pixels;
    rec.from1_pixels = pair.from1_pixels;
    rec.weight0 = pair.weight0;
    rec.weight1 = pair.weight1;
  }
  return out;
}

void write_provenance_header(std::ostream& out) {
  out << "batch,item,first,second,lambda,q0,q1,p,agree_pixels,from0_pixels,from1_pixels,weight0,weight1\n";
}

void write_provenance_rows(std::ostream& out, const MixedBatch& batch, std::size_t batch_index) {
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < batch.provenance.size(); ++i) {
    const MixRecord& r = batch.provenance[i];
    out << batch_index << ',' << i << ',' << r.first << ',' << r.second << ',' << r.lambda << ',' << r.q0 << ',' << r.q1
        << ',' << r.p << ',' << r.agree_pixels << ',' << r.from0_pixels << ',' << r.from1_pixels << ',' << r.weight0
        << ',' << r.weight1 << '\n';
  }
  out.precision(old_precision);
}

}  // namespace rmix
