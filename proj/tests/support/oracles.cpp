// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <cmath>
#include <set>

namespace hkd::testing::oracle {

std::vector<double> pixel_ce(const std::vector<double>& logits, std::size_t k, std::size_t h,
                             std::size_t w, const std::vector<std::uint8_t>& labels) {
  const std::size_t n = h * w;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == kIgnoreLabel) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logits[c * n + i]);
    out[i] = -std::log(std::exp(logits[labels[i] * n + i]) / z);
  }
  return out;
}

std::vector<double> region_ce(const std::vector<double>& ce, const std::vector<std::uint8_t>& labels,
                              std::size_t h, std::size_t w, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const bool inside = y * rows / h == r && x * cols / w == c;
          if (inside && labels[y * w + x] != kIgnoreLabel) out[r * cols + c] += ce[y * w + x];
        }
      }
    }
  }
  return out;
}

Mask region_mask(const std::vector<double>& ce_c, const std::vector<double>& ce_v) {
  Mask out{std::vector<std::uint8_t>(ce_c.size()), std::vector<std::uint8_t>(ce_c.size())};
  for (std::size_t i = 0; i < ce_c.size(); ++i) {
    out.m[i] = ce_c[i] < ce_v[i];
    out.comp[i] = 1 - out.m[i];
  }
  return out;
}

Mask pixel_mask(const std::vector<double>& ce_c, const std::vector<double>& ce_v,
                const std::vector<std::uint8_t>& labels) {
  Mask out = region_mask(ce_c, ce_v);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kIgnoreLabel) out.m[i] = out.comp[i] = 0;
  }
  return out;
}

std::vector<double> cosine_distance(const std::vector<double>& a, const std::vector<double>& b,
                                    std::size_t d, std::size_t n, double eps) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      dot += a[c * n + i] * b[c * n + i];
      na += a[c * n + i] * a[c * n + i];
      nb += b[c * n + i] * b[c * n + i];
    }
    out[i] = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb) + eps);
  }
  return out;
}

namespace {

double selected_mean(const std::vector<double>& v, const std::vector<std::uint8_t>& sel) {
  double acc = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (sel[i]) {
      acc += v[i];
      count += 1.0;
    }
  }
  return count == 0.0 ? 0.0 : acc / count;
}

}  // namespace

Pair region_loss(const std::vector<double>& s, const Mask& mask) {
  return {selected_mean(s, mask.comp), selected_mean(s, mask.m)};
}

std::vector<double> kl_map(const std::vector<double>& p, const std::vector<double>& q,
                           std::size_t k, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double zp = 0.0;
    double zq = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      zp += std::exp(p[c * n + i]);
      zq += std::exp(q[c * n + i]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      const double pp = std::exp(p[c * n + i]) / zp;
      const double qq = std::exp(q[c * n + i]) / zq;
      out[i] += pp * std::log(pp / qq);
    }
  }
  return out;
}

Pair pixel_loss(const std::vector<double>& pc, const std::vector<double>& pv, std::size_t k,
                const Mask& mask) {
  const std::size_t n = mask.m.size();
  return {selected_mean(kl_map(pc, pv, k, n), mask.comp),
          selected_mean(kl_map(pv, pc, k, n), mask.m)};
}

double miou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth,
            std::size_t k) {
  double acc = 0.0;
  double classes = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::set<std::size_t> p;
    std::set<std::size_t> t;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == kIgnoreLabel) continue;
      if (pred[i] == c) p.insert(i);
      if (truth[i] == c) t.insert(i);
    }
    std::set<std::size_t> uni = p;
    uni.insert(t.begin(), t.end());
    if (uni.empty()) continue;
    std::size_t inter = 0;
    for (std::size_t i : p) inter += t.count(i);
    acc += static_cast<double>(inter) / static_cast<double>(uni.size());
    classes += 1.0;
  }
  return acc / classes;
}

}  // namespace hkd::testing::oracle
