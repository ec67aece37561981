// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "hkd/errors.hpp"
#include "hkd/hfd.hpp"
#include "hkd/losses.hpp"
#include "hkd/ops.hpp"
#include "suites.hpp"

namespace hkd {
namespace {

using testing::random_tensor;

struct Pair {
  ArchConfig cfg;
  StudentParams cnn, vit;
  DistillationTransforms transforms;
  Tensor image;
};

Pair make_pair(std::uint64_t seed, const ArchConfig& cfg = ArchConfig{}) {
  Rng rng(seed);
  Pair p{cfg, init_cnn_params(cfg, rng), init_vit_params(cfg, rng), {}, {}};
  p.transforms = DistillationTransforms::create(cfg, rng);
  p.image = random_tensor({3, cfg.height, cfg.width}, rng, 0.0, 1.0);
  return p;
}

bool any_nonzero_grad(const StudentParams& params) {
  for (const auto& [_, t] : params) {
    for (double g : t.grad()) {
      if (g != 0.0) return true;
    }
  }
  return false;
}

TEST(Gamma, IdentityIsIdentity) {
  Rng rng(1);
  const Tensor f = random_tensor({5, 4, 4}, rng);
  const Tensor out = apply_gamma(f, GammaTransform::identity(5));
  ASSERT_EQ(out.shape(), f.shape());
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out.at(i), f.at(i));
}

TEST(Gamma, ChannelSumOfConstantInputPools) {
  const std::size_t c_in = 3, k = 2;
  GammaTransform g{Tensor::full({1, c_in, 1, 1}, 1.0), Tensor::zeros({1}), k};
  const Tensor out = apply_gamma(Tensor::full({c_in, 6, 4}, 0.7), g);
  ASSERT_EQ(out.shape(), (Shape{1, 3, 2}));
  for (double v : out.data()) EXPECT_NEAR(v, 3 * 0.7, 1e-15);
}

TEST(Gamma, GradientThroughFeatureAndWeights) {
  Rng rng(2);
  GammaTransform g = GammaTransform::random(4, 3, 2, rng);
  const Tensor f = random_tensor({4, 4, 6}, rng, -1.0, 1.0, true);
  const Tensor proj = random_tensor({3, 2, 3}, rng);
  const auto report = testing::check_gradients(
      [&] { return ops::sum(ops::mul(apply_gamma(f, g), proj)); }, {f, g.weight, g.bias});
  EXPECT_TRUE(testing::grad_case_ok(report)) << report.summary();
}

TEST(Gamma, Errors) {
  Rng rng(3);
  const GammaTransform g = GammaTransform::random(4, 3, 3, rng);
  EXPECT_THROW(apply_gamma(Tensor::zeros({5, 6, 6}), g), ConfigError);
  EXPECT_THROW(apply_gamma(Tensor::zeros({4, 4, 6}), g), ConfigError);
  EXPECT_THROW(GammaTransform::random(0, 3, 1, rng), ConfigError);
}

TEST(TransformPlan, DefaultGeometry) {
  const TransformPlan plan = plan_transforms(ArchConfig{});
  EXPECT_EQ(plan.first_cnn_pool, 1u);
  EXPECT_EQ(plan.first_vit_pool, 1u);
  EXPECT_EQ(plan.last_cnn_pool, 2u);
  EXPECT_EQ(plan.last_vit_pool, 1u);
  EXPECT_EQ(plan.region_shape, (Shape{24, 4, 4}));
  EXPECT_NE(plan.describe().find("[24x4x4]"), std::string::npos);
}

TEST(TransformPlan, ShapesAlignForEveryTransform) {
  const Pair p = make_pair(4);
  const StudentOutputs c = cnn_forward(p.image, p.cnn, p.cfg);
  const StudentOutputs v = vit_forward(p.image, p.vit, p.cfg);
  EXPECT_EQ(apply_gamma(c.f1, p.transforms.cnn_first).shape(), v.f1.shape());
  EXPECT_EQ(apply_gamma(v.f1, p.transforms.vit_first).shape(), c.f1.shape());
  EXPECT_EQ(apply_gamma(c.fl, p.transforms.cnn_last).shape(), p.transforms.region_shape);
  EXPECT_EQ(apply_gamma(v.fl, p.transforms.vit_last).shape(), p.transforms.region_shape);
}

TEST(TransformPlan, HoldsForEveryValidSize) {
  for (std::size_t h : {8, 16, 24, 32, 48}) {
    for (std::size_t w : {8, 16, 40}) {
      ArchConfig cfg;
      cfg.height = h;
      cfg.width = w;
      const TransformPlan plan = plan_transforms(cfg);
      EXPECT_EQ(plan.region_shape, (Shape{24, h / 8, w / 8}));
      EXPECT_EQ(plan.last_cnn_pool, 2u);
    }
  }
}

TEST(TransformPlan, RejectsTransformsThatWouldUpsample) {
  // Pooling-only transforms need equal first-stage sizes in both directions.
  for (std::size_t patch : {1, 4}) {
    ArchConfig cfg;
    cfg.patch_size = patch;
    EXPECT_THROW(plan_transforms(cfg), ConfigError) << patch;
  }
}

TEST(Hfd, OwnFeatureThroughSharedBlockGivesZero) {
  const Pair p = make_pair(5);
  const StudentOutputs c = cnn_forward(p.image, p.cnn, p.cfg);
  const StudentOutputs v = vit_forward(p.image, p.vit, p.cfg);
  const FrozenBlock vit_block = FrozenBlock::vit_second_stage(p.vit, p.cfg);
  const FrozenBlock cnn_block = FrozenBlock::cnn_second_layer(p.cnn, p.cfg);
  const Tensor routed_v = vit_block(v.f1);
  const Tensor routed_c = cnn_block(c.f1);
  EXPECT_TRUE(std::equal(routed_v.data().begin(), routed_v.data().end(), v.f2.data().begin()));
  EXPECT_TRUE(std::equal(routed_c.data().begin(), routed_c.data().end(), c.f2.data().begin()));
  // Only the eps guard of the cosine remains.
  EXPECT_NEAR(hfd_loss_cnn(v.f1, GammaTransform::identity(16), vit_block, v.f2).item(),
              testing::self_cosine_residual(v.f2), 1e-12);
  EXPECT_NEAR(hfd_loss_vit(c.f1, GammaTransform::identity(8), cnn_block, c.f2).item(),
              testing::self_cosine_residual(c.f2), 1e-12);
  EXPECT_LT(testing::self_cosine_residual(v.f2), 1e-6);
}

TEST(Hfd, MatchesComposedOracle) {
  const Pair p = make_pair(6);
  const StudentOutputs c = cnn_forward(p.image, p.cnn, p.cfg);
  const StudentOutputs v = vit_forward(p.image, p.vit, p.cfg);

  const double got_c = hfd_loss_cnn(c.f1, p.transforms.cnn_first,
                                    FrozenBlock::vit_second_stage(p.vit, p.cfg), v.f2).item();
  const double want_c = mean_cosine_distance(
      vit_stage(apply_gamma(c.f1, p.transforms.cnn_first), p.vit, p.cfg, 2), v.f2).item();
  EXPECT_NEAR(got_c, want_c, 1e-14);

  const double got_v = hfd_loss_vit(v.f1, p.transforms.vit_first,
                                    FrozenBlock::cnn_second_layer(p.cnn, p.cfg), c.f2).item();
  const double want_v = mean_cosine_distance(
      mlp_block(apply_gamma(v.f1, p.transforms.vit_first), p.cnn, p.cfg), c.f2).item();
  EXPECT_NEAR(got_v, want_v, 1e-14);

  for (double x : {got_c, got_v}) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 2.0);
  }
}

TEST(Hfd, GradientsReachOnlyTheSourceStudent) {
  const Pair p = make_pair(7);
  const StudentOutputs c = cnn_forward(p.image, p.cnn, p.cfg);
  const StudentOutputs v = vit_forward(p.image, p.vit, p.cfg);
  const StudentParams cnn_gamma = p.transforms.cnn_side();
  const StudentParams vit_gamma = p.transforms.vit_side();

  backward(hfd_loss_cnn(c.f1, p.transforms.cnn_first,
                        FrozenBlock::vit_second_stage(p.vit, p.cfg), v.f2));
  EXPECT_TRUE(any_nonzero_grad(p.cnn));
  EXPECT_TRUE(p.cnn.at("conv1.weight").has_grad());
  EXPECT_FALSE(p.cnn.at("conv2.weight").has_grad());
  EXPECT_TRUE(p.transforms.cnn_first.weight.has_grad());
  EXPECT_FALSE(any_nonzero_grad(p.vit));
  EXPECT_FALSE(any_nonzero_grad(vit_gamma));

  StudentParams(p.cnn).zero_grads();
  StudentParams(cnn_gamma).zero_grads();

  backward(hfd_loss_vit(v.f1, p.transforms.vit_first,
                        FrozenBlock::cnn_second_layer(p.cnn, p.cfg), c.f2));
  EXPECT_TRUE(any_nonzero_grad(p.vit));
  EXPECT_TRUE(p.transforms.vit_first.weight.has_grad());
  EXPECT_FALSE(any_nonzero_grad(p.cnn));
  EXPECT_FALSE(any_nonzero_grad(cnn_gamma));
}

TEST(Hfd, FrozenBlockRejectsWrongShapesAndKinds) {
  const Pair p = make_pair(8);
  const FrozenBlock vit_block = FrozenBlock::vit_second_stage(p.vit, p.cfg);
  const FrozenBlock cnn_block = FrozenBlock::cnn_second_layer(p.cnn, p.cfg);
  EXPECT_EQ(vit_block.input_shape(), (Shape{16, 16, 16}));
  EXPECT_EQ(cnn_block.input_shape(), (Shape{8, 16, 16}));
  EXPECT_THROW(vit_block(Tensor::zeros({16, 8, 8})), ConfigError);
  const Tensor f = Tensor::zeros({16, 16, 16});
  EXPECT_THROW(hfd_loss_cnn(f, GammaTransform::identity(16), cnn_block, f), ContractError);
  EXPECT_THROW(hfd_loss_vit(f, GammaTransform::identity(16), vit_block, f), ContractError);
}

TEST(Hfd, SideParameterNames) {
  const Pair p = make_pair(9);
  EXPECT_EQ(p.transforms.cnn_side().names(),
            (std::vector<std::string>{"gamma_cnn_first.bias", "gamma_cnn_first.weight",
                                      "gamma_cnn_last.bias", "gamma_cnn_last.weight"}));
  EXPECT_EQ(p.transforms.vit_side().size(), 4u);
}

}  // namespace
}  // namespace hkd
