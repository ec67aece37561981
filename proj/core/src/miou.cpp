// SPDX-License-Identifier: Apache-2.0
#include "hkd/miou.hpp"

#include <string>

#include "hkd/errors.hpp"

namespace hkd {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : k_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::accumulate(const LabelMap& predicted, const LabelMap& truth) {
  if (predicted.height != truth.height || predicted.width != truth.width ||
      predicted.labels.size() != truth.labels.size()) {
    throw DimensionError("prediction and ground truth differ in size");
  }
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const std::uint8_t y = truth.labels[i];
    if (y == kIgnoreLabel) continue;
    const std::uint8_t p = predicted.labels[i];
    if (y >= k_ || p >= k_) {
      throw DataError("label pair (" + std::to_string(y) + ", " + std::to_string(p) +
                      ") outside [0, " + std::to_string(k_) + ")");
    }
    ++counts_[y * k_ + p];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw DimensionError("confusion matrices differ in class count");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (std::uint64_t c : counts_) n += c;
  return n;
}

double ConfusionMatrix::miou() const {
  if (total() == 0) throw MetricError("mIoU undefined: no evaluated pixels");
  double acc = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < k_; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (std::size_t j = 0; j < k_; ++j) {
      row += counts_[c * k_ + j];
      col += counts_[j * k_ + c];
    }
    const std::uint64_t tp = counts_[c * k_ + c];
    const std::uint64_t uni = row + col - tp;
    if (uni == 0) continue;
    acc += static_cast<double>(tp) / static_cast<double>(uni);
    ++present;
  }
  return acc / static_cast<double>(present);
}

LabelMap argmax_labels(const Tensor& logits) {
  if (logits.rank() != 3) throw DimensionError("argmax_labels expects K x H x W logits");
  const std::size_t k = logits.dim(0);
  const std::size_t h = logits.dim(1);
  const std::size_t w = logits.dim(2);
  const std::size_t plane = h * w;
  const auto v = logits.data();
  LabelMap out{h, w, std::vector<std::uint8_t>(plane, 0)};
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (v[c * plane + i] > v[best * plane + i]) best = c;
    }
    out.labels[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace hkd
