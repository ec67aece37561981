// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hkd/losses.hpp"
#include "hkd/tensor.hpp"

namespace hkd {

/// K x K pixel counts, rows indexed by ground truth, columns by prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  /// Adds one prediction/label pair; pixels labelled kIgnoreLabel are skipped.
  void accumulate(const LabelMap& predicted, const LabelMap& truth);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::uint64_t total() const;

  /// Mean of TP / (TP + FP + FN) over classes with a nonzero union. Throws
  /// MetricError when no pixel has been evaluated.
  double miou() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

/// Per-pixel arg-max over the class axis of K x H x W logits (lowest index on ties).
LabelMap argmax_labels(const Tensor& logits);

}  // namespace hkd
