// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rmix/rng.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

/// One image in [0, 1] pixel space, shape [C x W x W], and its class index.
struct LabeledImage {
  Tensor pixels;
  std::size_t label = 0;
  /// Coarse label of the 100-class CIFAR layout; kept so records re-serialize
  /// byte-for-byte.
  std::optional<std::size_t> coarse_label;
};

struct DatasetMeta {
  std::size_t classes = 10;
  std::size_t side = 32;
  std::size_t channels = 3;
  std::vector<double> mean;
  std::vector<double> stddev;

  /// Throws ConfigError on non-positive extents, mismatched statistic
  /// lengths, or a non-positive standard deviation.
  void validate() const;
};

enum class CifarLayout {
  kCifar10,   ///< 1 label byte + 3072 pixel bytes
  kCifar100,  ///< coarse label byte + fine label byte + 3072 pixel bytes
};

std::size_t cifar_record_size(CifarLayout layout);
std::size_t cifar_classes(CifarLayout layout);

/// Decodes concatenated CIFAR binary records. Pixels are divided by 255; the
/// fine label is used for the 100-class layout. Throws ParseError carrying
/// the offset of a truncated record or an out-of-range label byte.
std::vector<LabeledImage> parse_cifar_binary(std::span<const std::uint8_t> bytes, CifarLayout layout);
std::vector<std::uint8_t> serialize_cifar_binary(std::span<const LabeledImage> images, CifarLayout layout);

/// Decodes an IDX file (big-endian, magic 0x0000TTRR where TT is the element
/// type and RR the rank). Values are returned unscaled.
Tensor parse_idx(std::span<const std::uint8_t> bytes);

enum class IdxType : std::uint8_t {
  kUnsignedByte = 0x08,
  kSignedByte = 0x09,
  kShort = 0x0B,
  kInt = 0x0C,
  kFloat = 0x0D,
  kDouble = 0x0E,
};

std::vector<std::uint8_t> serialize_idx(const Tensor& values, IdxType type = IdxType::kUnsignedByte);

/// Pairs an IDX image tensor [N x H x W] (bytes) with an IDX label vector [N]
/// into single-channel images in [0, 1].
std::vector<LabeledImage> images_from_idx(const Tensor& images, const Tensor& labels, std::size_t classes);

/// Horizontal flip with probability 1/2, then zero padding by `padding` on
/// every side and a random W x W crop. Draws flip, then row offset, then
/// column offset from `rng`.
LabeledImage augment_classic(const LabeledImage& img, Rng& rng, std::size_t padding = 2, bool allow_flip = true);

/// Deterministic core of augment_classic. The crop window starts at
/// (row_offset, col_offset) of the padded image; (padding, padding) is the
/// identity crop.
Tensor flip_and_crop(const Tensor& pixels, bool flip, std::size_t padding, std::size_t row_offset, std::size_t col_offset);

/// (x - mean[c]) / stddev[c] per channel.
Tensor normalize(const Tensor& pixels, const DatasetMeta& meta);
/// Inverse of normalize.
Tensor denormalize(const Tensor& normalized, const DatasetMeta& meta);

/// Seeded class-stratified subset of `count` images. Each class gets
/// count / classes images (the first count % classes classes one more, as
/// far as supply allows). The result keeps source order.
std::vector<LabeledImage> stratified_subset(const std::vector<LabeledImage>& images, std::size_t count,
                                            std::size_t classes, Rng& rng);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace rmix
