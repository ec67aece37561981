// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hkd/tensor.hpp"

namespace hkd {

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// H x W ground-truth labels in [0, K) or kIgnoreLabel.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::uint8_t at(std::size_t h, std::size_t w) const { return labels[h * width + w]; }
  bool operator==(const LabelMap&) const = default;
};

/// Per-pixel cross-entropy before averaging. Ignored pixels hold 0 and are
/// marked invalid.
struct PixelCEMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;

  std::size_t valid_count() const;
};

struct PixelCE {
  Tensor loss;  // mean over valid pixels (0 when none are valid)
  PixelCEMap map;
};

/// Softmax cross-entropy of K x H x W logits against labels. Throws DataError
/// for a non-ignore label >= K.
PixelCE pixel_ce(const Tensor& logits, const LabelMap& labels);

inline constexpr double kCosineEps = 1e-8;

/// 1 - <a, b> / (|a| |b| + eps) over the channel axis (axis 0); the result has
/// the remaining (spatial) shape. A pair of zero vectors gives distance 1.
Tensor cosine_distance(const Tensor& a, const Tensor& b);
Tensor mean_cosine_distance(const Tensor& a, const Tensor& b);

/// KL(softmax(p) || softmax(q)) for two K-vectors of logits, evaluated in log space.
Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits);
/// Per-pixel KL over the class axis of two K x H x W logit maps; H x W result.
Tensor kl_div_map(const Tensor& p_logits, const Tensor& q_logits);

}  // namespace hkd
