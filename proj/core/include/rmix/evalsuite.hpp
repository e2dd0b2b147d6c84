// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rmix/dataio.hpp"
#include "rmix/netlib.hpp"
#include "rmix/tensor.hpp"

namespace rmix {

struct PredictionRecord {
  double confidence = 0.0;  ///< max softmax probability
  std::size_t predicted = 0;
  std::size_t truth = 0;

  bool correct() const noexcept { return predicted == truth; }
};

/// One record per row of `logits` [B x N]; confidence is the softmax maximum.
std::vector<PredictionRecord> records_from_logits(const Tensor& logits, std::span<const std::size_t> labels);

/// Throws std::invalid_argument on an empty record set.
double top1_accuracy(std::span<const PredictionRecord> records);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;    ///< 0 for an empty bin
  double confidence = 0.0;  ///< mean confidence, 0 for an empty bin
};

/// Equal-width bins over [0, 1]. Bin b holds confidences in (b/n, (b+1)/n];
/// confidence 0 falls into the first bin.
std::vector<CalibrationBin> calibration_bins(std::span<const PredictionRecord> records, std::size_t bins);

/// Expected calibration error: sum over bins of count/n * |accuracy - confidence|.
double ece(std::span<const PredictionRecord> records, std::size_t bins = 15);

/// Single-step sign attack in raw pixel space. `raw` holds [0, 1] pixels
/// ([C x W x W] or [B x C x W x W]); the model sees normalize(raw). The
/// gradient is taken of the softmax cross-entropy against the true labels and
/// the result is clamped to [0, 1].
Tensor fgsm_attack(const Model& model, const Tensor& raw, std::span<const std::size_t> labels, double epsilon,
                   const DatasetMeta& meta);

struct EvalOptions {
  std::size_t ece_bins = 15;
  double fgsm_epsilon = 8.0 / 255.0;
  bool fgsm = true;
  std::size_t batch_size = 100;
};

struct EvalResult {
  std::size_t count = 0;
  double accuracy = 0.0;
  double ece = 0.0;
  double fgsm_accuracy = 0.0;  ///< NaN when the attack is disabled
  double fgsm_error() const { return 1.0 - fgsm_accuracy; }
};

/// Clean accuracy, ECE and (optionally) FGSM accuracy of `model` on raw
/// images, processed in fixed-size chunks in dataset order.
EvalResult evaluate(const Model& model, std::span<const LabeledImage> images, const DatasetMeta& meta,
                    const EvalOptions& options = {});

struct MetricRow {
  std::string run_id;
  std::size_t epoch = 0;
  std::string metric;
  double value = 0.0;
};

/// Long-format metrics: "run_id,epoch,metric,value".
void write_metric_header(std::ostream& out);
void write_metric_rows(std::ostream& out, std::span<const MetricRow> rows);
std::vector<MetricRow> metric_rows(const std::string& run_id, std::size_t epoch, const EvalResult& result,
                                   const EvalOptions& options);

/// Per-bin dump: "bin,lower,upper,count,accuracy,confidence".
void write_calibration_csv(std::ostream& out, std::span<const CalibrationBin> bins);

}  // namespace rmix
