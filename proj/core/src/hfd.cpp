// SPDX-License-Identifier: Apache-2.0
#include "hkd/hfd.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "hkd/errors.hpp"
#include "hkd/losses.hpp"
#include "hkd/ops.hpp"

namespace hkd {

namespace {

std::size_t pool_factor(std::size_t source, std::size_t target, const char* what) {
  if (target == 0 || source < target || source % target != 0) {
    throw ConfigError(std::string(what) + ": cannot pool spatial size " + std::to_string(source) +
                      " down to " + std::to_string(target));
  }
  return source / target;
}

void add_gamma(StudentParams& params, const std::string& name, const GammaTransform& g) {
  params.add(name + ".weight", g.weight);
  params.add(name + ".bias", g.bias);
}

}  // namespace

GammaTransform GammaTransform::random(std::size_t c_in, std::size_t c_out, std::size_t pool,
                                      Rng& rng) {
  if (c_in == 0 || c_out == 0 || pool == 0) throw ConfigError("degenerate transform geometry");
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in));
  std::vector<double> w(c_out * c_in);
  for (double& v : w) v = rng.uniform(-bound, bound);
  std::vector<double> b(c_out);
  for (double& v : b) v = rng.uniform(-bound, bound);
  return {Tensor::from_data({c_out, c_in, 1, 1}, std::move(w), true),
          Tensor::from_data({c_out}, std::move(b), true), pool};
}

GammaTransform GammaTransform::identity(std::size_t channels) {
  std::vector<double> w(channels * channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) w[c * channels + c] = 1.0;
  return {Tensor::from_data({channels, channels, 1, 1}, std::move(w), true),
          Tensor::zeros({channels}, true), 1};
}

Tensor apply_gamma(const Tensor& feature, const GammaTransform& gamma) {
  if (feature.rank() != 3 || feature.dim(0) != gamma.in_channels()) {
    throw ConfigError("transform expects " + std::to_string(gamma.in_channels()) +
                      " channels, got " + shape_string(feature.shape()));
  }
  if (gamma.pool == 0 || feature.dim(1) % gamma.pool != 0 || feature.dim(2) % gamma.pool != 0) {
    throw ConfigError("feature " + shape_string(feature.shape()) +
                      " not divisible by pooling factor " + std::to_string(gamma.pool));
  }
  Tensor projected = ops::conv2d(feature, gamma.weight, gamma.bias, 1, 0);
  if (gamma.pool == 1) return projected;
  return ops::avg_pool2d(projected, gamma.pool, gamma.pool);
}

TransformPlan plan_transforms(const ArchConfig& cfg) {
  cfg.validate();
  const StageShapes c = cnn_stage_shapes(cfg);
  const StageShapes v = vit_stage_shapes(cfg);
  TransformPlan plan;
  plan.first_cnn_pool = pool_factor(c.f1[1], v.f1[1], "first-layer CNN->ViT transform");
  pool_factor(c.f1[2], v.f1[2], "first-layer CNN->ViT transform");
  plan.first_vit_pool = pool_factor(v.f1[1], c.f1[1], "first-layer ViT->CNN transform");
  pool_factor(v.f1[2], c.f1[2], "first-layer ViT->CNN transform");
  const std::size_t rh = std::min(c.fl[1], v.fl[1]);
  const std::size_t rw = std::min(c.fl[2], v.fl[2]);
  plan.last_cnn_pool = pool_factor(c.fl[1], rh, "last-layer CNN transform");
  plan.last_vit_pool = pool_factor(v.fl[1], rh, "last-layer ViT transform");
  if (pool_factor(c.fl[2], rw, "last-layer CNN transform") != plan.last_cnn_pool ||
      pool_factor(v.fl[2], rw, "last-layer ViT transform") != plan.last_vit_pool) {
    throw ConfigError("last-layer transforms need equal pooling along both axes");
  }
  if (cfg.height % rh != 0 || cfg.width % rw != 0) {
    throw ConfigError("region grid does not tile the prediction map");
  }
  plan.region_shape = {cfg.region_dim, rh, rw};
  return plan;
}

std::string TransformPlan::describe() const {
  std::ostringstream os;
  os << "first-layer pools (cnn->vit " << first_cnn_pool << ", vit->cnn " << first_vit_pool
     << "), last-layer pools (cnn " << last_cnn_pool << ", vit " << last_vit_pool
     << "), region features " << shape_string(region_shape);
  return os.str();
}

DistillationTransforms DistillationTransforms::create(const ArchConfig& cfg, Rng& rng) {
  const TransformPlan plan = plan_transforms(cfg);
  DistillationTransforms t;
  t.cnn_first = GammaTransform::random(cfg.cnn_channels[0], cfg.vit_dims[0], plan.first_cnn_pool, rng);
  t.vit_first = GammaTransform::random(cfg.vit_dims[0], cfg.cnn_channels[0], plan.first_vit_pool, rng);
  t.cnn_last = GammaTransform::random(cfg.cnn_channels[2], cfg.region_dim, plan.last_cnn_pool, rng);
  t.vit_last = GammaTransform::random(cfg.vit_dims[2], cfg.region_dim, plan.last_vit_pool, rng);
  t.region_shape = plan.region_shape;
  return t;
}

StudentParams DistillationTransforms::cnn_side() const {
  StudentParams p;
  add_gamma(p, "gamma_cnn_first", cnn_first);
  add_gamma(p, "gamma_cnn_last", cnn_last);
  return p;
}

StudentParams DistillationTransforms::vit_side() const {
  StudentParams p;
  add_gamma(p, "gamma_vit_first", vit_first);
  add_gamma(p, "gamma_vit_last", vit_last);
  return p;
}

FrozenBlock::FrozenBlock(Kind kind, StudentParams params, ArchConfig cfg, Shape input_shape)
    : kind_(kind), params_(std::move(params)), cfg_(cfg), input_shape_(std::move(input_shape)) {}

FrozenBlock FrozenBlock::vit_second_stage(const StudentParams& vit, const ArchConfig& cfg) {
  return FrozenBlock(Kind::kVitSecondStage, vit.detached(), cfg, vit_stage_shapes(cfg).f1);
}

FrozenBlock FrozenBlock::cnn_second_layer(const StudentParams& cnn, const ArchConfig& cfg) {
  return FrozenBlock(Kind::kCnnSecondLayer, cnn.detached(), cfg, cnn_stage_shapes(cfg).f1);
}

Tensor FrozenBlock::operator()(const Tensor& feature) const {
  if (feature.shape() != input_shape_) {
    throw ConfigError("borrowed block expects " + shape_string(input_shape_) + ", got " +
                      shape_string(feature.shape()));
  }
  if (kind_ == Kind::kVitSecondStage) return vit_stage(feature, params_, cfg_, 2);
  return mlp_block(feature, params_, cfg_);
}

Tensor hfd_loss_cnn(const Tensor& f1_cnn, const GammaTransform& gamma_cnn,
                    const FrozenBlock& vit_block2, const Tensor& f2_vit) {
  if (vit_block2.kind() != FrozenBlock::Kind::kVitSecondStage) {
    throw ContractError("hfd_loss_cnn needs the ViT second-stage block");
  }
  Tensor aligned = vit_block2(apply_gamma(f1_cnn, gamma_cnn));
  if (aligned.shape() != f2_vit.shape()) {
    throw ConfigError("HFD output " + shape_string(aligned.shape()) + " vs ViT F2 " +
                      shape_string(f2_vit.shape()));
  }
  return mean_cosine_distance(aligned, ops::detach(f2_vit));
}

Tensor hfd_loss_vit(const Tensor& f1_vit, const GammaTransform& gamma_vit,
                    const FrozenBlock& cnn_block2, const Tensor& f2_cnn) {
  if (cnn_block2.kind() != FrozenBlock::Kind::kCnnSecondLayer) {
    throw ContractError("hfd_loss_vit needs the CNN second-layer block");
  }
  Tensor aligned = cnn_block2(apply_gamma(f1_vit, gamma_vit));
  if (aligned.shape() != f2_cnn.shape()) {
    throw ConfigError("HFD output " + shape_string(aligned.shape()) + " vs CNN F2 " +
                      shape_string(f2_cnn.shape()));
  }
  return mean_cosine_distance(aligned, ops::detach(f2_cnn));
}

}  // namespace hkd
