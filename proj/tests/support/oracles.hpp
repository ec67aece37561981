// SPDX-License-Identifier: Apache-2.0
#pragma once

// Straight-loop reference implementations on plain vectors. They share no
// code with the library beyond the data types.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hkd/losses.hpp"

namespace hkd::testing::oracle {

/// Per-pixel softmax CE of K x H x W logits; ignored pixels give 0.
std::vector<double> pixel_ce(const std::vector<double>& logits, std::size_t k, std::size_t h,
                             std::size_t w, const std::vector<std::uint8_t>& labels);

/// Sum of per-pixel CE over each block of a rows x cols grid, skipping ignored pixels.
std::vector<double> region_ce(const std::vector<double>& ce, const std::vector<std::uint8_t>& labels,
                              std::size_t h, std::size_t w, std::size_t rows, std::size_t cols);

struct Mask {
  std::vector<std::uint8_t> m;     // 1 where the CNN is strictly better
  std::vector<std::uint8_t> comp;  // 1 where the ViT teaches
};

Mask region_mask(const std::vector<double>& ce_c, const std::vector<double>& ce_v);
Mask pixel_mask(const std::vector<double>& ce_c, const std::vector<double>& ce_v,
                const std::vector<std::uint8_t>& labels);

/// Cosine distance per location of two D x N feature sets.
std::vector<double> cosine_distance(const std::vector<double>& a, const std::vector<double>& b,
                                    std::size_t d, std::size_t n, double eps);

struct Pair {
  double cnn = 0.0;
  double vit = 0.0;
};

Pair region_loss(const std::vector<double>& s, const Mask& mask);
/// KL(softmax(p) || softmax(q)) per pixel.
std::vector<double> kl_map(const std::vector<double>& p, const std::vector<double>& q,
                           std::size_t k, std::size_t n);
Pair pixel_loss(const std::vector<double>& pc, const std::vector<double>& pv, std::size_t k,
                const Mask& mask);

/// Mean IoU from explicit per-class pixel sets.
double miou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth,
            std::size_t k);

}  // namespace hkd::testing::oracle
