// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hkd/losses.hpp"
#include "hkd/tensor.hpp"

namespace hkd {

/// Partition of an H x W prediction map into rows x cols equal blocks; one
/// block per location of the transformed last-stage features.
struct RegionGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t block_h = 0;
  std::size_t block_w = 0;

  /// Throws ConfigError unless rows | height and cols | width.
  static RegionGrid make(std::size_t height, std::size_t width, std::size_t rows,
                         std::size_t cols);
};

struct RealMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Binary selection of which student teaches each unit (region or pixel).
///
/// `values` is 1 where the CNN student is more reliable (strictly smaller CE)
/// and knowledge flows CNN -> ViT. `complement` marks the units where it
/// flows ViT -> CNN; ignored pixels are 0 in both.
struct DirectionMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> values;
  std::vector<std::uint8_t> complement;
  std::size_t count = 0;             // number of ones in `values`
  std::size_t complement_count = 0;  // number of ones in `complement`

  std::size_t units() const { return rows * cols; }
};

/// Block sums of per-pixel CE; ignored pixels contribute 0.
RealMatrix region_ce(const PixelCEMap& ce, const RegionGrid& grid);

DirectionMask build_region_mask(const RealMatrix& ce_cnn, const RealMatrix& ce_vit);
DirectionMask build_pixel_mask(const PixelCEMap& ce_cnn, const PixelCEMap& ce_vit);

/// Per-location cosine distance between two D x Hr x Wr features.
Tensor region_similarity(const Tensor& fl_cnn_hat, const Tensor& fl_vit_hat);

/// The similarity map built twice: once with the ViT side detached (drives
/// the CNN loss) and once with the CNN side detached (drives the ViT loss).
struct SimilarityPair {
  Tensor for_cnn;
  Tensor for_vit;
};
SimilarityPair region_similarity_pair(const Tensor& fl_cnn_hat, const Tensor& fl_vit_hat);

struct DirectionalLosses {
  Tensor cnn;  // loss optimised by the CNN student
  Tensor vit;  // loss optimised by the ViT student
};

/// Mean of S over complement regions (CNN loss) and over mask regions (ViT
/// loss). An empty selection yields an untracked 0.
DirectionalLosses region_loss(const SimilarityPair& s, const DirectionMask& mask);
DirectionalLosses region_loss(const Tensor& s, const DirectionMask& mask);

/// Masked mean of KL(P_C || P_V) over complement pixels with P_V detached,
/// and of KL(P_V || P_C) over mask pixels with P_C detached.
DirectionalLosses pixel_loss(const Tensor& logits_cnn, const Tensor& logits_vit,
                             const DirectionMask& mask);

/// L_R + alpha * L_P per student.
DirectionalLosses bsd_loss(const DirectionalLosses& region, const DirectionalLosses& pixel,
                           double alpha);

/// Snapshot of one sample's selective-distillation state.
struct BsdSnapshot {
  Tensor similarity;
  DirectionMask region_mask;
  PixelCEMap ce_cnn;
  PixelCEMap ce_vit;
  DirectionMask pixel_mask;
};

/// Writes records "similarity", "region_mask", "ce_cnn", "ce_vit",
/// "pixel_mask" in the checkpoint archive format.
void write_bsd_dump(const std::filesystem::path& path, const BsdSnapshot& snapshot);

}  // namespace hkd
