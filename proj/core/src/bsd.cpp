// SPDX-License-Identifier: Apache-2.0
#include "hkd/bsd.hpp"

#include <string>

#include "hkd/archive.hpp"
#include "hkd/errors.hpp"
#include "hkd/ops.hpp"

namespace hkd {

namespace {

Tensor indicator(const std::vector<std::uint8_t>& bits, const Shape& shape) {
  std::vector<double> v(bits.begin(), bits.end());
  return Tensor::from_data(shape, std::move(v));
}

// sum(selection * values) / selected, or an untracked 0 for an empty selection.
Tensor masked_mean(const Tensor& values, const std::vector<std::uint8_t>& selection,
                   std::size_t selected) {
  if (selected == 0) return Tensor::scalar(0.0);
  return ops::scale(ops::sum(ops::mul(values, indicator(selection, values.shape()))),
                    1.0 / static_cast<double>(selected));
}

void require_mask_shape(const Tensor& t, const DirectionMask& mask, const char* what) {
  if (t.rank() != 2 || t.dim(0) != mask.rows || t.dim(1) != mask.cols) {
    throw DimensionError(std::string(what) + ": map " + shape_string(t.shape()) + " vs mask " +
                         std::to_string(mask.rows) + "x" + std::to_string(mask.cols));
  }
}

ArchiveRecord mask_record(const std::string& name, const DirectionMask& m) {
  return {name, {m.rows, m.cols}, std::vector<double>(m.values.begin(), m.values.end())};
}

ArchiveRecord ce_record(const std::string& name, const PixelCEMap& m) {
  return {name, {m.height, m.width}, m.values};
}

}  // namespace

RegionGrid RegionGrid::make(std::size_t height, std::size_t width, std::size_t rows,
                            std::size_t cols) {
  if (rows == 0 || cols == 0 || height % rows != 0 || width % cols != 0) {
    throw ConfigError("region grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " does not divide a " + std::to_string(height) + "x" +
                      std::to_string(width) + " map");
  }
  return {rows, cols, height / rows, width / cols};
}

RealMatrix region_ce(const PixelCEMap& ce, const RegionGrid& grid) {
  if (ce.height != grid.rows * grid.block_h || ce.width != grid.cols * grid.block_w) {
    throw ConfigError("region grid " + std::to_string(grid.rows) + "x" +
                      std::to_string(grid.cols) + " does not divide a " +
                      std::to_string(ce.height) + "x" + std::to_string(ce.width) + " CE map");
  }
  RealMatrix out{grid.rows, grid.cols, std::vector<double>(grid.rows * grid.cols, 0.0)};
  for (std::size_t h = 0; h < ce.height; ++h) {
    for (std::size_t w = 0; w < ce.width; ++w) {
      const std::size_t i = h * ce.width + w;
      if (!ce.valid.empty() && !ce.valid[i]) continue;
      out.values[(h / grid.block_h) * grid.cols + w / grid.block_w] += ce.values[i];
    }
  }
  return out;
}

DirectionMask build_region_mask(const RealMatrix& ce_cnn, const RealMatrix& ce_vit) {
  if (ce_cnn.rows != ce_vit.rows || ce_cnn.cols != ce_vit.cols) {
    throw DimensionError("region CE matrices differ in shape");
  }
  DirectionMask m{ce_cnn.rows, ce_cnn.cols, {}, {}, 0, 0};
  m.values.resize(m.units());
  m.complement.resize(m.units());
  for (std::size_t i = 0; i < m.units(); ++i) {
    const bool cnn_better = ce_cnn.values[i] < ce_vit.values[i];
    m.values[i] = cnn_better ? 1 : 0;
    m.complement[i] = cnn_better ? 0 : 1;
    m.count += m.values[i];
    m.complement_count += m.complement[i];
  }
  return m;
}

DirectionMask build_pixel_mask(const PixelCEMap& ce_cnn, const PixelCEMap& ce_vit) {
  if (ce_cnn.height != ce_vit.height || ce_cnn.width != ce_vit.width) {
    throw DimensionError("pixel CE maps differ in shape");
  }
  DirectionMask m{ce_cnn.height, ce_cnn.width, {}, {}, 0, 0};
  m.values.resize(m.units());
  m.complement.resize(m.units());
  for (std::size_t i = 0; i < m.units(); ++i) {
    const bool valid = (ce_cnn.valid.empty() || ce_cnn.valid[i]) &&
                       (ce_vit.valid.empty() || ce_vit.valid[i]);
    if (!valid) continue;
    const bool cnn_better = ce_cnn.values[i] < ce_vit.values[i];
    m.values[i] = cnn_better ? 1 : 0;
    m.complement[i] = cnn_better ? 0 : 1;
    m.count += m.values[i];
    m.complement_count += m.complement[i];
  }
  return m;
}

Tensor region_similarity(const Tensor& fl_cnn_hat, const Tensor& fl_vit_hat) {
  if (fl_cnn_hat.rank() != 3 || fl_cnn_hat.shape() != fl_vit_hat.shape()) {
    throw DimensionError("region_similarity: " + shape_string(fl_cnn_hat.shape()) + " vs " +
                         shape_string(fl_vit_hat.shape()));
  }
  return cosine_distance(fl_cnn_hat, fl_vit_hat);
}

SimilarityPair region_similarity_pair(const Tensor& fl_cnn_hat, const Tensor& fl_vit_hat) {
  return {region_similarity(fl_cnn_hat, ops::detach(fl_vit_hat)),
          region_similarity(ops::detach(fl_cnn_hat), fl_vit_hat)};
}

DirectionalLosses region_loss(const SimilarityPair& s, const DirectionMask& mask) {
  require_mask_shape(s.for_cnn, mask, "region_loss");
  require_mask_shape(s.for_vit, mask, "region_loss");
  return {masked_mean(s.for_cnn, mask.complement, mask.complement_count),
          masked_mean(s.for_vit, mask.values, mask.count)};
}

DirectionalLosses region_loss(const Tensor& s, const DirectionMask& mask) {
  return region_loss(SimilarityPair{s, s}, mask);
}

DirectionalLosses pixel_loss(const Tensor& logits_cnn, const Tensor& logits_vit,
                             const DirectionMask& mask) {
  if (logits_cnn.rank() != 3 || logits_cnn.shape() != logits_vit.shape()) {
    throw DimensionError("pixel_loss: " + shape_string(logits_cnn.shape()) + " vs " +
                         shape_string(logits_vit.shape()));
  }
  if (logits_cnn.dim(1) != mask.rows || logits_cnn.dim(2) != mask.cols) {
    throw DimensionError("pixel_loss: logits " + shape_string(logits_cnn.shape()) +
                         " vs mask " + std::to_string(mask.rows) + "x" +
                         std::to_string(mask.cols));
  }
  DirectionalLosses out;
  out.cnn = mask.complement_count == 0
                ? Tensor::scalar(0.0)
                : masked_mean(kl_div_map(logits_cnn, ops::detach(logits_vit)), mask.complement,
                              mask.complement_count);
  out.vit = mask.count == 0 ? Tensor::scalar(0.0)
                            : masked_mean(kl_div_map(logits_vit, ops::detach(logits_cnn)),
                                          mask.values, mask.count);
  return out;
}

DirectionalLosses bsd_loss(const DirectionalLosses& region, const DirectionalLosses& pixel,
                           double alpha) {
  if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
  return {ops::add(region.cnn, ops::scale(pixel.cnn, alpha)),
          ops::add(region.vit, ops::scale(pixel.vit, alpha))};
}

void write_bsd_dump(const std::filesystem::path& path, const BsdSnapshot& snapshot) {
  std::vector<ArchiveRecord> records;
  records.push_back({"similarity", snapshot.similarity.shape(),
                     {snapshot.similarity.data().begin(), snapshot.similarity.data().end()}});
  records.push_back(mask_record("region_mask", snapshot.region_mask));
  records.push_back(ce_record("ce_cnn", snapshot.ce_cnn));
  records.push_back(ce_record("ce_vit", snapshot.ce_vit));
  records.push_back(mask_record("pixel_mask", snapshot.pixel_mask));
  write_archive(path, records);
}

}  // namespace hkd
