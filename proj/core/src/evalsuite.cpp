// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "rmix/errors.hpp"
#include "rmix/kernels.hpp"

namespace rmix {

std::vector<PredictionRecord> records_from_logits(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw ShapeError("records_from_logits expects [B x N] logits");
  if (labels.size() != logits.dim(0)) throw ShapeError("records_from_logits: one label per row required");
  const Tensor probs = softmax(logits);
  const std::size_t classes = logits.dim(1);
  std::vector<PredictionRecord> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::span<const double> row(probs.data().data() + i * classes, classes);
    const std::size_t best = argmax(row);
    out[i] = {row[best], best, labels[i]};
  }
  return out;
}

double top1_accuracy(std::span<const PredictionRecord> records) {
  if (records.empty()) throw std::invalid_argument("top1_accuracy of an empty record set");
  const auto hits = std::count_if(records.begin(), records.end(), [](const PredictionRecord& r) { return r.correct(); });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

std::vector<CalibrationBin> calibration_bins(std::span<const PredictionRecord> records, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("calibration needs at least one bin");
  std::vector<CalibrationBin> out(bins);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<std::size_t> hits(bins, 0);
  const double n = static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = static_cast<double>(b) / n;
    out[b].upper = static_cast<double>(b + 1) / n;
  }
  for (const PredictionRecord& r : records) {
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) throw std::invalid_argument("confidence outside [0, 1]");
    const double scaled = std::ceil(r.confidence * n) - 1.0;
    const auto b = static_cast<std::size_t>(std::clamp(scaled, 0.0, n - 1.0));
    ++out[b].count;
    conf_sum[b] += r.confidence;
    if (r.correct()) ++hits[b];
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (out[b].count == 0) continue;
    const double c = static_cast<double>(out[b].count);
    out[b].accuracy = static_cast<double>(hits[b]) / c;
    out[b].confidence = conf_sum[b] / c;
  }
  return out;
}

double ece(std::span<const PredictionRecord> records, std::size_t bins) {
  if (records.empty()) throw std::invalid_argument("ece of an empty record set");
  const double total = static_cast<double>(records.size());
  double acc = 0.0;
  for (const CalibrationBin& b : calibration_bins(records, bins)) {
    if (b.count == 0) continue;
    acc += static_cast<double>(b.count) / total * std::abs(b.accuracy - b.confidence);
  }
  return acc;
}

Tensor fgsm_attack(const Model& model, const Tensor& raw, std::span<const std::size_t> labels, double epsilon,
                   const DatasetMeta& meta) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("FGSM epsilon must be finite and >= 0");
  const bool single = raw.rank() == 3;
  if (!single && raw.rank() != 4) throw ShapeError("fgsm_attack expects [C x W x W] or [B x C x W x W] pixels");
  const std::size_t batch = single ? 1 : raw.dim(0);
  if (labels.size() != batch) throw ShapeError("fgsm_attack: one label per image required");
  if (epsilon == 0.0) return raw;

  Tensor normalized = Tensor::like(raw);
  const std::size_t image = raw.size() / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    Shape one(raw.shape().end() - 3, raw.shape().end());
    Tensor x(one, std::vector<double>(raw.data().begin() + b * image, raw.data().begin() + (b + 1) * image));
    const Tensor z = normalize(x, meta);
    std::copy(z.data().begin(), z.data().end(), normalized.data().begin() + b * image);
  }
  Tensor targets = one_hot(labels, model.classes());
  if (single) targets = targets.reshaped({model.classes()});
  // d/d(raw) = d/d(normalized) / std with std > 0, so the sign carries over.
  const Tensor g = grad_wrt_input(model, normalized, targets, LossKind::kSoftmaxCrossEntropy);
  Tensor out = Tensor::like(raw);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    out[i] = std::clamp(raw[i] + epsilon * s, 0.0, 1.0);
  }
  return out;
}

namespace {

Tensor stack_pixels(std::span<const LabeledImage> images, const DatasetMeta& meta, bool normalized) {
  std::vector<Tensor> xs;
  xs.reserve(images.size());
  for (const LabeledImage& img : images) xs.push_back(normalized ? normalize(img.pixels, meta) : img.pixels);
  return stack(xs);
}

}  // namespace

EvalResult evaluate(const Model& model, std::span<const LabeledImage> images, const DatasetMeta& meta,
                    const EvalOptions& options) {
  if (images.empty()) throw std::invalid_argument("evaluate on an empty dataset");
  if (options.batch_size == 0) throw std::invalid_argument("evaluation batch size must be positive");
  std::vector<PredictionRecord> clean;
  std::vector<PredictionRecord> attacked;
  clean.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += options.batch_size) {
    const auto chunk = images.subspan(start, std::min(options.batch_size, images.size() - start));
    std::vector<std::size_t> labels;
    for (const LabeledImage& img : chunk) labels.push_back(img.label);
    const Tensor x = stack_pixels(chunk, meta, true);
    const auto recs = records_from_logits(model.logits(x), labels);
    clean.insert(clean.end(), recs.begin(), recs.end());
    if (options.fgsm) {
      const Tensor adv_raw = fgsm_attack(model, stack_pixels(chunk, meta, false), labels, options.fgsm_epsilon, meta);
      std::vector<LabeledImage> adv(chunk.begin(), chunk.end());
      for (std::size_t i = 0; i < adv.size(); ++i) adv[i].pixels = adv_raw.slice0(i);
      const auto arecs = records_from_logits(model.logits(stack_pixels(adv, meta, true)), labels);
      attacked.insert(attacked.end(), arecs.begin(), arecs.end());
    }
  }
  EvalResult r;
  r.count = clean.size();
  r.accuracy = top1_accuracy(clean);
  r.ece = ece(clean, options.ece_bins);
  r.fgsm_accuracy = options.fgsm ? top1_accuracy(attacked) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void write_metric_header(std::ostream& out) { out << "run_id,epoch,metric,value\n"; }

void write_metric_rows(std::ostream& out, std::span<const MetricRow> rows) {
  const auto old_precision = out.precision(17);
  for (const MetricRow& r : rows) out << r.run_id << ',' << r.epoch << ',' << r.metric << ',' << r.value << '\n';
  out.precision(old_precision);
}

std::vector<MetricRow> metric_rows(const std::string& run_id, std::size_t epoch, const EvalResult& result,
                                   const EvalOptions& options) {
  std::vector<MetricRow> rows{
      {run_id, epoch, "count", static_cast<double>(result.count)},
      {run_id, epoch, "top1_accuracy", result.accuracy},
      {run_id, epoch, "ece", result.ece},
  };
  if (options.fgsm) {
    rows.push_back({run_id, epoch, "fgsm_accuracy", result.fgsm_accuracy});
    rows.push_back({run_id, epoch, "fgsm_error", result.fgsm_error()});
  }
  return rows;
}

void write_calibration_csv(std::ostream& out, std::span<const CalibrationBin> bins) {
  const auto old_precision = out.precision(17);
  out << "bin,lower,upper,count,accuracy,confidence\n";
  for (std::size_t b = 0; b < bins.size(); ++b) {
    out << b << ',' << bins[b].lower << ',' << bins[b].upper << ',' << bins[b].count << ',' << bins[b].accuracy << ','
        << bins[b].confidence << '\n';
  }
  out.precision(old_precision);
}

}  // namespace rmix
