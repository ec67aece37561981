// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hkd/losses.hpp"
#include "hkd/tensor.hpp"

namespace hkd {

/// Parameters of the synthetic shapes-on-background segmentation task.
struct SynthSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 4;
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 4;
  /// Standard deviation of the additive Gaussian pixel noise.
  double noise = 0.15;
  /// Half-width of the per-shape color jitter around the class color.
  double color_jitter = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Sample {
  Tensor image;  // 3 x H x W
  LabelMap labels;
};

using Dataset = std::vector<Sample>;

/// Rectangles and disks of class-correlated colors over a class-0
/// background, plus noise. Labels are the exact painted masks. Deterministic
/// in spec.seed.
Dataset generate_dataset(const SynthSpec& spec, std::size_t count);

/// Fixed RGB color of a class before jitter.
std::array<double, 3> class_color(std::size_t cls);

/// Sample record: "HKDS" magic, u32 version, u32 channels, u32 height,
/// u32 width (little-endian), then channels*H*W f64 LE image values, then
/// H*W u8 labels.
std::vector<std::uint8_t> encode_sample(const Sample& sample);
Sample decode_sample(std::span<const std::uint8_t> bytes);

/// Writes sample_000000.rec, sample_000001.rec, ... into `dir` (created if needed).
void write_dataset(const std::filesystem::path& dir, const Dataset& samples);
/// Reads every *.rec file of `dir` in lexicographic filename order.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace hkd
