// SPDX-License-Identifier: Apache-2.0
#include "hkd/losses.hpp"

#include <string>

#include "hkd/errors.hpp"
#include "hkd/ops.hpp"

namespace hkd {

std::size_t PixelCEMap::valid_count() const {
  std::size_t n = 0;
  for (std::uint8_t v : valid) n += v;
  return n;
}

PixelCE pixel_ce(const Tensor& logits, const LabelMap& labels) {
  if (logits.rank() != 3 || logits.dim(1) != labels.height || logits.dim(2) != labels.width ||
      labels.labels.size() != labels.height * labels.width) {
    throw DimensionError("pixel_ce: logits " + shape_string(logits.shape()) + " vs labels " +
                         std::to_string(labels.height) + "x" + std::to_string(labels.width));
  }
  const std::size_t k = logits.dim(0);
  PixelCE out;
  out.map.height = labels.height;
  out.map.width = labels.width;
  out.map.valid.resize(labels.size());
  std::size_t valid = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint8_t y = labels.labels[i];
    if (y == kIgnoreLabel) continue;
    if (y >= k) {
      throw DataError("label " + std::to_string(y) + " at pixel " + std::to_string(i) +
                      " outside [0, " + std::to_string(k) + ")");
    }
    out.map.valid[i] = 1;
    ++valid;
  }
  Tensor ce = ops::scale(ops::gather_channel(ops::log_softmax(logits, 0), labels.labels, kIgnoreLabel),
                         -1.0);
  out.map.values.assign(ce.data().begin(), ce.data().end());
  out.loss = valid == 0 ? ops::scale(ops::sum(ce), 0.0)
                        : ops::scale(ops::sum(ce), 1.0 / static_cast<double>(valid));
  return out;
}

Tensor cosine_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cosine_distance: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor dot = ops::sum_axis(ops::mul(a, b), 0);
  Tensor denom = ops::add_scalar(ops::mul(ops::l2_norm(a, 0), ops::l2_norm(b, 0)), kCosineEps);
  return ops::add_scalar(ops::scale(ops::div(dot, denom), -1.0), 1.0);
}

Tensor mean_cosine_distance(const Tensor& a, const Tensor& b) {
  return ops::mean(cosine_distance(a, b));
}

Tensor kl_div(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.rank() != 1 || p_logits.shape() != q_logits.shape()) {
    throw DimensionError("kl_div expects two equal-length logit vectors, got " +
                         shape_string(p_logits.shape()) + " and " +
                         shape_string(q_logits.shape()));
  }
  return ops::sum_axis(ops::mul(ops::softmax(p_logits, 0),
                                ops::sub(ops::log_softmax(p_logits, 0), ops::log_softmax(q_logits, 0))),
                       0);
}

Tensor kl_div_map(const Tensor& p_logits, const Tensor& q_logits) {
  if (p_logits.rank() != 3 || p_logits.shape() != q_logits.shape()) {
    throw DimensionError("kl_div_map expects two equal K x H x W logit maps, got " +
                         shape_string(p_logits.shape()) + " and " +
                         shape_string(q_logits.shape()));
  }
  return ops::sum_axis(ops::mul(ops::softmax(p_logits, 0),
                                ops::sub(ops::log_softmax(p_logits, 0), ops::log_softmax(q_logits, 0))),
                       0);
}

}  // namespace hkd
