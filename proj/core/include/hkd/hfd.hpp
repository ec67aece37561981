// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include "hkd/rng.hpp"
#include "hkd/students.hpp"
#include "hkd/tensor.hpp"

namespace hkd {

/// 1x1 convolution followed by average pooling; maps one student's feature
/// map onto another student's channel count and spatial size.
struct GammaTransform {
  Tensor weight;  // C_out x C_in x 1 x 1
  Tensor bias;    // C_out
  std::size_t pool = 1;

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }

  static GammaTransform random(std::size_t c_in, std::size_t c_out, std::size_t pool, Rng& rng);
  /// Identity weights, zero bias, no pooling.
  static GammaTransform identity(std::size_t channels);
};

/// 1x1 conv then pooling. Throws ConfigError on channel mismatch or when the
/// spatial size is not divisible by the pooling factor.
Tensor apply_gamma(const Tensor& feature, const GammaTransform& gamma);

/// The four transforms of one student pair plus the shapes they produce.
struct DistillationTransforms {
  GammaTransform cnn_first;  // CNN F1 -> ViT F1 shape
  GammaTransform vit_first;  // ViT F1 -> CNN F1 shape
  GammaTransform cnn_last;   // CNN F_l -> region_dim x Hr x Wr
  GammaTransform vit_last;   // ViT F_l -> region_dim x Hr x Wr

  Shape region_shape;  // region_dim x Hr x Wr

  /// Validates the shape contract for `cfg` and initialises the transforms.
  static DistillationTransforms create(const ArchConfig& cfg, Rng& rng);

  StudentParams cnn_side() const;  // trained with the CNN student
  StudentParams vit_side() const;  // trained with the ViT student
};

/// Derived transform geometry, reported for diagnostics and checked by
/// DistillationTransforms::create.
struct TransformPlan {
  std::size_t first_cnn_pool = 1;
  std::size_t first_vit_pool = 1;
  std::size_t last_cnn_pool = 1;
  std::size_t last_vit_pool = 1;
  Shape region_shape;
  std::string describe() const;
};
TransformPlan plan_transforms(const ArchConfig& cfg);

/// One student's second block with frozen (detached) parameters, applied to
/// the other student's transformed feature.
class FrozenBlock {
 public:
  enum class Kind { kVitSecondStage, kCnnSecondLayer };

  static FrozenBlock vit_second_stage(const StudentParams& vit, const ArchConfig& cfg);
  static FrozenBlock cnn_second_layer(const StudentParams& cnn, const ArchConfig& cfg);

  Tensor operator()(const Tensor& feature) const;
  const Shape& input_shape() const { return input_shape_; }
  Kind kind() const { return kind_; }

 private:
  FrozenBlock(Kind kind, StudentParams params, ArchConfig cfg, Shape input_shape);

  Kind kind_;
  StudentParams params_;
  ArchConfig cfg_;
  Shape input_shape_;
};

/// Mean cosine distance between the ViT second stage applied to the
/// transformed CNN first-layer feature and the ViT's own F2. Gradients reach
/// only `f1_cnn` and `gamma_cnn`.
Tensor hfd_loss_cnn(const Tensor& f1_cnn, const GammaTransform& gamma_cnn,
                    const FrozenBlock& vit_block2, const Tensor& f2_vit);

/// Mirror of hfd_loss_cnn: the CNN second layer applied to the transformed
/// ViT first-stage feature, aligned with the CNN's own F2.
Tensor hfd_loss_vit(const Tensor& f1_vit, const GammaTransform& gamma_vit,
                    const FrozenBlock& cnn_block2, const Tensor& f2_cnn);

}  // namespace hkd
