// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rmix/errors.hpp"

namespace rmix {

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarChannels = 3;
constexpr std::size_t kCifarPixels = kCifarChannels * kCifarSide * kCifarSide;

std::uint8_t to_byte(double v) {
  const double scaled = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(scaled);
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::size_t idx_element_size(std::uint8_t type, std::size_t offset) {
  switch (type) {
    case 0x08:
    case 0x09:
      return 1;
    case 0x0B:
      return 2;
    case 0x0C:
    case 0x0D:
      return 4;
    case 0x0E:
      return 8;
    default:
      throw ParseError("unknown IDX element type 0x" + std::to_string(type), offset);
  }
}

template <typename T>
T load_be(const std::uint8_t* p) {
  std::uint8_t buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = p[sizeof(T) - 1 - i];
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename T>
void store_be(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(buf[sizeof(T) - 1 - i]);
}

}  // namespace

void DatasetMeta::validate() const {
  if (classes == 0 || side == 0 || channels == 0) throw ConfigError("dataset classes, side and channels must be positive");
  if (mean.size() != channels || stddev.size() != channels) {
    throw ConfigError("dataset mean/stddev must have one entry per channel (" + std::to_string(channels) + ")");
  }
  for (double s : stddev) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("dataset stddev entries must be positive");
  }
  for (double m : mean) {
    if (!std::isfinite(m)) throw ConfigError("dataset mean entries must be finite");
  }
}

std::size_t cifar_record_size(CifarLayout layout) {
  return (layout == CifarLayout::kCifar10 ? 1 : 2) + kCifarPixels;
}

std::size_t cifar_classes(CifarLayout layout) { return layout == CifarLayout::kCifar10 ? 10 : 100; }

std::vector<LabeledImage> parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarLayout layout) {
  const std::size_t record = cifar_record_size(layout);
  const std::size_t label_bytes = record - kCifarPixels;
  const std::size_t classes = cifar_classes(layout);
  std::vector<LabeledImage> out;
  out.reserve(bytes.size() / record);
  for (std::size_t offset = 0; offset < bytes.size(); offset += record) {
    if (bytes.size() - offset < record) {
      throw ParseError("truncated CIFAR record: " + std::to_string(bytes.size() - offset) + " of " +
                           std::to_string(record) + " bytes",
                       offset);
    }
    LabeledImage img;
    if (layout == CifarLayout::kCifar100) {
      img.coarse_label = bytes[offset];
      if (*img.coarse_label >= 20) throw ParseError("CIFAR-100 coarse label out of range", offset);
    }
    const std::size_t label_offset = offset + label_bytes - 1;
    img.label = bytes[label_offset];
    if (img.label >= classes) {
      throw ParseError("label " + std::to_string(img.label) + " >= class count " + std::to_string(classes), label_offset);
    }
    std::vector<double> pixels(kCifarPixels);
    const std::uint8_t* src = bytes.data() + offset + label_bytes;
    for (std::size_t i = 0; i < kCifarPixels; ++i) pixels[i] = static_cast<double>(src[i]) / 255.0;
    img.pixels = Tensor({kCifarChannels, kCifarSide, kCifarSide}, std::move(pixels));
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<std::uint8_t> serialize_cifar_binary(std::span<const LabeledImage> images, CifarLayout layout) {
  std::vector<std::uint8_t> out;
  out.reserve(images.size() * cifar_record_size(layout));
  for (const LabeledImage& img : images) {
    if (img.pixels.shape() != Shape{kCifarChannels, kCifarSide, kCifarSide}) {
      throw ShapeError("CIFAR records hold [3x32x32] images, got " + shape_string(img.pixels.shape()));
    }
    if (img.label >= cifar_classes(layout)) throw ShapeError("label out of range for CIFAR layout");
    if (layout == CifarLayout::kCifar100) out.push_back(static_cast<std::uint8_t>(img.coarse_label.value_or(0)));
    out.push_back(static_cast<std::uint8_t>(img.label));
    for (double v : img.pixels.data()) out.push_back(to_byte(v));
  }
  return out;
}

Tensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw ParseError("IDX header truncated", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("bad IDX magic: leading bytes must be zero", 0);
  const std::uint8_t type = bytes[2];
  const std::size_t rank = bytes[3];
  const std::size_t elem = idx_element_size(type, 2);
  if (rank == 0) throw ParseError("IDX rank must be positive", 3);
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw ParseError("IDX dimension table truncated", bytes.size());
  Shape dims(rank);
  for (std::size_t r = 0; r < rank; ++r) {
    dims[r] = read_be32(bytes, 4 + 4 * r);
    if (dims[r] == 0) throw ParseError("IDX dimension " + std::to_string(r) + " is zero", 4 + 4 * r);
  }
  const std::size_t count = shape_size(dims);
  const std::size_t payload = bytes.size() - header;
  if (payload != count * elem) {
    throw ParseError("IDX header declares " + std::to_string(count) + " elements (" + std::to_string(count * elem) +
                         " bytes) but payload has " + std::to_string(payload) + " bytes",
                     header + std::min(payload, count * elem));
  }
  std::vector<double> values(count);
  const std::uint8_t* p = bytes.data() + header;
  for (std::size_t i = 0; i < count; ++i, p += elem) {
    switch (type) {
      case 0x08: values[i] = static_cast<double>(*p); break;
      case 0x09: values[i] = static_cast<double>(static_cast<std::int8_t>(*p)); break;
      case 0x0B: values[i] = static_cast<double>(load_be<std::int16_t>(p)); break;
      case 0x0C: values[i] = static_cast<double>(load_be<std::int32_t>(p)); break;
      case 0x0D: values[i] = static_cast<double>(load_be<float>(p)); break;
      default: values[i] = load_be<double>(p); break;
    }
  }
  return Tensor(std::move(dims), std::move(values));
}

std::vector<std::uint8_t> serialize_idx(const Tensor& values, IdxType type) {
  if (values.rank() == 0 || values.rank() > 255) throw ShapeError("IDX rank must be in [1, 255]");
  std::vector<std::uint8_t> out{0, 0, static_cast<std::uint8_t>(type), static_cast<std::uint8_t>(values.rank())};
  for (std::size_t d : values.shape()) write_be32(out, static_cast<std::uint32_t>(d));
  for (double v : values.data()) {
    switch (type) {
      case IdxType::kUnsignedByte: out.push_back(static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0))); break;
      case IdxType::kSignedByte:
        out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(std::clamp(std::round(v), -128.0, 127.0))));
        break;
      case IdxType::kShort: store_be(out, static_cast<std::int16_t>(std::round(v))); break;
      case IdxType::kInt: store_be(out, static_cast<std::int32_t>(std::round(v))); break;
      case IdxType::kFloat: store_be(out, static_cast<float>(v)); break;
      case IdxType::kDouble: store_be(out, v); break;
    }
  }
  return out;
}

std::vector<LabeledImage> images_from_idx(const Tensor& images, const Tensor& labels, std::size_t classes) {
  if (images.rank() != 3) throw ShapeError("IDX images must have rank 3 [N x H x W]");
  if (images.dim(1) != images.dim(2)) throw ShapeError("IDX images must be square");
  if (labels.rank() != 1 || labels.dim(0) != images.dim(0)) throw ShapeError("IDX label count must equal image count");
  const std::size_t n = images.dim(0);
  const std::size_t side = images.dim(1);
  std::vector<LabeledImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledImage img;
    img.pixels = images.slice0(i).reshaped({1, side, side});
    for (double& v : img.pixels.data()) v /= 255.0;
    const double label = labels[i];
    if (label < 0.0 || label >= static_cast<double>(classes)) {
      throw ShapeError("IDX label " + std::to_string(label) + " out of range for " + std::to_string(classes) + " classes");
    }
    img.label = static_cast<std::size_t>(label);
    out.push_back(std::move(img));
  }
  return out;
}

Tensor flip_and_crop(const Tensor& pixels, bool flip, std::size_t padding, std::size_t row_offset, std::size_t col_offset) {
  if (pixels.rank() != 3 || pixels.dim(1) != pixels.dim(2)) throw ShapeError("augmentation expects a square [C x W x W] image");
  if (row_offset > 2 * padding || col_offset > 2 * padding) throw ShapeError("crop offset exceeds padded extent");
  const std::size_t c = pixels.dim(0);
  const std::size_t w = pixels.dim(1);
  Tensor out({c, w, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < w; ++i) {
      // Row/column in the padded image, then back to source coordinates.
      const auto si = static_cast<std::ptrdiff_t>(i + row_offset) - static_cast<std::ptrdiff_t>(padding);
      if (si < 0 || si >= static_cast<std::ptrdiff_t>(w)) continue;
      for (std::size_t j = 0; j < w; ++j) {
        const auto sj = static_cast<std::ptrdiff_t>(j + col_offset) - static_cast<std::ptrdiff_t>(padding);
        if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
        const std::size_t src_col = flip ? w - 1 - static_cast<std::size_t>(sj) : static_cast<std::size_t>(sj);
        out[(ch * w + i) * w + j] = pixels[(ch * w + static_cast<std::size_t>(si)) * w + src_col];
      }
    }
  }
  return out;
}

LabeledImage augment_classic(const LabeledImage& img, Rng& rng, std::size_t padding, bool allow_flip) {
  const bool flip = allow_flip && rng.bernoulli(0.5);
  const std::size_t row = rng.uniform_index(2 * padding + 1);
  const std::size_t col = rng.uniform_index(2 * padding + 1);
  LabeledImage out;
  out.pixels = flip_and_crop(img.pixels, flip, padding, row, col);
  out.label = img.label;
  out.coarse_label = img.coarse_label;
  return out;
}

Tensor normalize(const Tensor& pixels, const DatasetMeta& meta) {
  if (pixels.rank() != 3 || pixels.dim(0) != meta.channels) throw ShapeError("normalize: image channels do not match metadata");
  if (meta.mean.size() != meta.channels || meta.stddev.size() != meta.channels) throw ShapeError("normalize: bad metadata");
  const std::size_t plane = pixels.dim(1) * pixels.dim(2);
  Tensor out = pixels;
  for (std::size_t c = 0; c < meta.channels; ++c) {
    if (!(meta.stddev[c] > 0.0)) throw ShapeError("normalize: stddev must be positive");
    const double inv = 1.0 / meta.stddev[c];
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = (out[c * plane + i] - meta.mean[c]) * inv;
  }
  return out;
}

Tensor denormalize(const Tensor& normalized, const DatasetMeta& meta) {
  if (normalized.rank() != 3 || normalized.dim(0) != meta.channels) throw ShapeError("denormalize: channel mismatch");
  const std::size_t plane = normalized.dim(1) * normalized.dim(2);
  Tensor out = normalized;
  for (std::size_t c = 0; c < meta.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = out[c * plane + i] * meta.stddev[c] + meta.mean[c];
  }
  return out;
}

std::vector<LabeledImage> stratified_subset(const std::vector<LabeledImage>& images, std::size_t count,
                                            std::size_t classes, Rng& rng) {
  if (classes == 0) throw ShapeError("stratified_subset needs at least one class");
  if (count >= images.size()) return images;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].label >= classes) throw ShapeError("label out of range in stratified_subset");
    by_class[images[i].label].push_back(i);
  }
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  std::vector<std::size_t> quota(classes, count / classes);
  for (std::size_t c = 0; c < count % classes; ++c) ++quota[c];
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t>& pool = by_class[c];
    const std::vector<std::size_t> order = rng.permutation(pool.size());
    const std::size_t take = std::min(quota[c], pool.size());
    for (std::size_t k = 0; k < take; ++k) chosen.push_back(pool[order[k]]);
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<LabeledImage> out;
  out.reserve(chosen.size());
  for (std::size_t i : chosen) out.push_back(images[i]);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace rmix
