// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hkd/rng.hpp"
#include "hkd/tensor.hpp"

namespace hkd {

/// Shapes of the two toy students.
///
/// The convolutional student downsamples by 2 twice (4x4 kernels, padding 1)
/// and keeps stride 4 for its last layer; the attention student embeds
/// patches of `patch_size` and halves the resolution before stages 2 and 3.
struct ArchConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 4;
  std::array<std::size_t, 3> cnn_channels{8, 16, 24};
  std::array<std::size_t, 3> vit_dims{16, 32, 48};
  std::size_t patch_size = 2;
  std::size_t num_heads = 2;
  std::size_t mlp_ratio = 2;
  /// Channel count of the transformed last-stage features compared region-wise.
  std::size_t region_dim = 24;

  /// Per-head key dimension of stage `stage` (0-based); the softmax scale is 1/sqrt of it.
  std::size_t head_dim(std::size_t stage) const { return vit_dims.at(stage) / num_heads; }

  /// Throws ConfigError when any stride, divisibility or head constraint fails.
  void validate() const;

  bool operator==(const ArchConfig&) const = default;
};

/// Named parameter set of one student (or of its distillation transforms).
/// Iteration order is lexicographic by identifier, which fixes checkpoint
/// layout and optimizer traversal.
class StudentParams {
 public:
  using Map = std::map<std::string, Tensor, std::less<>>;

  void add(std::string name, Tensor tensor);
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;
  std::vector<Tensor> tensors() const;
  std::vector<std::string> names() const;

  /// Copies with gradient tracking switched off.
  StudentParams detached() const;
  void zero_grads();

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }

 private:
  Map entries_;
};

/// Prediction logits plus the three features used by the distillation losses.
struct StudentOutputs {
  Tensor prediction;  // K x H x W logits
  Tensor f1;          // first layer / stage
  Tensor f2;          // second layer / stage
  Tensor fl;          // last layer / stage
};

StudentParams init_cnn_params(const ArchConfig& cfg, Rng& rng);
StudentParams init_vit_params(const ArchConfig& cfg, Rng& rng);

StudentOutputs cnn_forward(const Tensor& image, const StudentParams& params,
                           const ArchConfig& cfg);
StudentOutputs vit_forward(const Tensor& image, const StudentParams& params,
                           const ArchConfig& cfg);

/// The convolutional student's second layer, callable on any conforming
/// c1 x H/2 x W/2 feature map. cnn_forward computes F2 through this function.
Tensor mlp_block(const Tensor& feature, const StudentParams& params, const ArchConfig& cfg);

/// Pre-norm transformer block on N x D tokens: multi-head attention mixing
/// with residual, then a GELU feed-forward sublayer with residual.
/// `prefix` selects the stage's parameters (e.g. "stage2").
Tensor attn_block(const Tensor& tokens, const StudentParams& params, std::string_view prefix,
                  std::size_t num_heads);

/// Row-wise softmax(Q_h K_h^T / sqrt(d)) V_h for each head h, heads
/// concatenated along columns.
Tensor attention_mix(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t num_heads);

/// Per-head attention weight matrices (N x N each).
std::vector<Tensor> attention_weights(const Tensor& q, const Tensor& k, std::size_t num_heads);

/// Stage 2 or 3 of the attention student (1-based stage index): 2x2 patch
/// merge followed by attn_block. vit_forward computes F2 and F_l through it.
Tensor vit_stage(const Tensor& feature, const StudentParams& params, const ArchConfig& cfg,
                 std::size_t stage);

/// Expected feature shapes (C, H, W) of each student for a configuration.
struct StageShapes {
  Shape f1, f2, fl;
};
StageShapes cnn_stage_shapes(const ArchConfig& cfg);
StageShapes vit_stage_shapes(const ArchConfig& cfg);

}  // namespace hkd
