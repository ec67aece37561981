// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "hkd/errors.hpp"
#include "hkd/losses.hpp"
#include "hkd/ops.hpp"
#include "hkd/students.hpp"
#include "suites.hpp"

namespace hkd {
namespace {

using testing::random_tensor;
using testing::tiny_arch;

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

TEST(Students, DefaultShapes) {
  const ArchConfig cfg;
  Rng rng(1);
  const Tensor image = random_tensor({3, 32, 32}, rng, 0.0, 1.0);
  const StudentParams cnn = init_cnn_params(cfg, rng);
  const StudentParams vit = init_vit_params(cfg, rng);

  const StudentOutputs c = cnn_forward(image, cnn, cfg);
  EXPECT_EQ(c.f1.shape(), (Shape{8, 16, 16}));
  EXPECT_EQ(c.f2.shape(), (Shape{16, 8, 8}));
  EXPECT_EQ(c.fl.shape(), (Shape{24, 8, 8}));
  EXPECT_EQ(c.prediction.shape(), (Shape{4, 32, 32}));

  const StudentOutputs v = vit_forward(image, vit, cfg);
  EXPECT_EQ(v.f1.shape(), (Shape{16, 16, 16}));
  EXPECT_EQ(v.f2.shape(), (Shape{32, 8, 8}));
  EXPECT_EQ(v.fl.shape(), (Shape{48, 4, 4}));
  EXPECT_EQ(v.prediction.shape(), (Shape{4, 32, 32}));
}

TEST(Students, ShapesHoldForRandomValidConfigs) {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    ArchConfig cfg;
    cfg.patch_size = rng.integer(1, 2);
    const std::size_t unit = 4 * cfg.patch_size;
    cfg.height = unit * rng.integer(1, 3);
    cfg.width = unit * rng.integer(1, 3);
    cfg.num_classes = rng.integer(2, 5);
    cfg.num_heads = rng.integer(1, 2);
    for (auto& c : cfg.cnn_channels) c = rng.integer(1, 6);
    for (auto& d : cfg.vit_dims) d = cfg.num_heads * rng.integer(1, 4);
    cfg.mlp_ratio = rng.integer(1, 2);
    ASSERT_NO_THROW(cfg.validate());

    const Tensor image = random_tensor({3, cfg.height, cfg.width}, rng);
    const StudentOutputs c = cnn_forward(image, init_cnn_params(cfg, rng), cfg);
    const StudentOutputs v = vit_forward(image, init_vit_params(cfg, rng), cfg);
    const StageShapes cs = cnn_stage_shapes(cfg);
    const StageShapes vs = vit_stage_shapes(cfg);
    EXPECT_EQ(c.f1.shape(), cs.f1);
    EXPECT_EQ(c.f2.shape(), cs.f2);
    EXPECT_EQ(c.fl.shape(), cs.fl);
    EXPECT_EQ(v.f1.shape(), vs.f1);
    EXPECT_EQ(v.f2.shape(), vs.f2);
    EXPECT_EQ(v.fl.shape(), vs.fl);
    const Shape pred{cfg.num_classes, cfg.height, cfg.width};
    EXPECT_EQ(c.prediction.shape(), pred);
    EXPECT_EQ(v.prediction.shape(), pred);
    // Spatial sizes never grow with depth.
    EXPECT_GE(c.f1.dim(1), c.f2.dim(1));
    EXPECT_GE(c.f2.dim(1), c.fl.dim(1));
    EXPECT_GE(v.f1.dim(1), v.f2.dim(1));
    EXPECT_GE(v.f2.dim(1), v.fl.dim(1));
  }
}

TEST(Students, ParameterBudget) {
  const ArchConfig cfg;
  Rng rng(0);
  EXPECT_LT(init_cnn_params(cfg, rng).parameter_count(), 50000u);
  EXPECT_LT(init_vit_params(cfg, rng).parameter_count(), 50000u);
}

TEST(Students, InitIsDeterministicAndBounded) {
  const ArchConfig cfg;
  Rng a(3), b(3);
  const StudentParams pa = init_cnn_params(cfg, a);
  const StudentParams pb = init_cnn_params(cfg, b);
  ASSERT_EQ(pa.names(), pb.names());
  for (const auto& [name, t] : pa) {
    EXPECT_TRUE(bitwise_equal(t, pb.at(name))) << name;
  }
  // conv1 fan-in is 3 * 4 * 4.
  const double bound = 1.0 / std::sqrt(48.0);
  for (double v : pa.at("conv1.weight").data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Students, MlpBlockReproducesSecondLayer) {
  const ArchConfig cfg;
  Rng rng(11);
  const StudentParams p = init_cnn_params(cfg, rng);
  const StudentOutputs out = cnn_forward(random_tensor({3, 32, 32}, rng), p, cfg);
  EXPECT_TRUE(bitwise_equal(mlp_block(out.f1, p, cfg), out.f2));
}

TEST(Students, VitStageReproducesSecondStage) {
  const ArchConfig cfg;
  Rng rng(12);
  const StudentParams p = init_vit_params(cfg, rng);
  const StudentOutputs out = vit_forward(random_tensor({3, 32, 32}, rng), p, cfg);
  EXPECT_TRUE(bitwise_equal(vit_stage(out.f1, p, cfg, 2), out.f2));
  EXPECT_TRUE(bitwise_equal(vit_stage(out.f2, p, cfg, 3), out.fl));
}

TEST(Students, MlpBlockZeroInputZeroBias) {
  const ArchConfig cfg;
  Rng rng(2);
  StudentParams p = init_cnn_params(cfg, rng);
  for (double& v : p.at("conv2.bias").mutable_data()) v = 0.0;
  const Tensor y = mlp_block(Tensor::zeros({8, 16, 16}), p, cfg);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Students, ZeroInputWithZeroHeadBiasIsUniform) {
  const ArchConfig cfg;
  Rng rng(5);
  StudentParams p = init_cnn_params(cfg, rng);
  for (const char* name : {"conv1.bias", "conv2.bias", "conv3.bias", "head.bias"}) {
    for (double& v : p.at(name).mutable_data()) v = 0.0;
  }
  const Tensor probs =
      ops::softmax(cnn_forward(Tensor::zeros({3, 32, 32}), p, cfg).prediction, 0);
  for (double v : probs.data()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Attention, SingleTokenIsIdentityMixing) {
  Rng rng(4);
  const Tensor q = random_tensor({1, 6}, rng);
  const Tensor k = random_tensor({1, 6}, rng);
  const Tensor v = random_tensor({1, 6}, rng);
  for (const Tensor& w : attention_weights(q, k, 2)) EXPECT_DOUBLE_EQ(w.item(), 1.0);
  const Tensor mixed = attention_mix(q, k, v, 2);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(mixed.at(i), v.at(i));
}

TEST(Attention, IdenticalTokensGiveUniformWeights) {
  Rng rng(6);
  const Tensor row = random_tensor({1, 8}, rng);
  std::vector<double> rows;
  for (int i = 0; i < 5; ++i) rows.insert(rows.end(), row.data().begin(), row.data().end());
  const Tensor tokens = Tensor::from_data({5, 8}, rows);
  for (const Tensor& w : attention_weights(tokens, tokens, 2)) {
    for (double x : w.data()) EXPECT_NEAR(x, 0.2, 1e-15);
  }
}

TEST(Attention, MatchesExplicitFormula) {
  Rng rng(8);
  const std::size_t n = 4, dim = 6, heads = 2, d = 3;
  const Tensor q = random_tensor({n, dim}, rng);
  const Tensor k = random_tensor({n, dim}, rng);
  const Tensor v = random_tensor({n, dim}, rng);
  const Tensor mixed = attention_mix(q, k, v, heads);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dot += q.at(i * dim + h * d + c) * k.at(j * dim + h * d + c);
        }
        s[j] = dot / std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& x : s) z += (x = std::exp(x - mx));
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += s[j] / z * v.at(j * dim + h * d + c);
        EXPECT_NEAR(mixed.at(i * dim + h * d + c), acc, 1e-14);
      }
    }
  }
}

TEST(Attention, AttnBlockGradient) {
  Rng rng(9);
  ArchConfig cfg;
  cfg.vit_dims = {8, 8, 8};
  const StudentParams p = init_vit_params(cfg, rng);
  const Tensor tokens = random_tensor({4, 8}, rng, -1.0, 1.0, true);
  const Tensor proj = random_tensor({4, 8}, rng);
  std::vector<Tensor> inputs{tokens};
  for (const auto& [name, t] : p) {
    if (name.rfind("stage1.", 0) == 0 && name.find("embed") == std::string::npos) {
      inputs.push_back(t);
    }
  }
  const auto report = testing::check_gradients(
      [&] { return ops::sum(ops::mul(attn_block(tokens, p, "stage1", 2), proj)); }, inputs);
  EXPECT_TRUE(testing::grad_case_ok(report)) << report.summary();
}

TEST(Students, CrossEntropyGradientOverEveryParameter) {
  const ArchConfig cfg = tiny_arch();
  Rng rng(10);
  const StudentParams cnn = init_cnn_params(cfg, rng);
  const StudentParams vit = init_vit_params(cfg, rng);
  const Tensor image = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
  const LabelMap labels = testing::random_labels(16, 16, cfg.num_classes, rng);
  testing::GradCheckOptions opts;
  opts.max_entries_per_input = 10;

  const auto rc = testing::check_gradients(
      [&] { return pixel_ce(cnn_forward(image, cnn, cfg).prediction, labels).loss; },
      cnn.tensors(), opts);
  EXPECT_TRUE(testing::grad_case_ok(rc)) << rc.summary();
  const auto rv = testing::check_gradients(
      [&] { return pixel_ce(vit_forward(image, vit, cfg).prediction, labels).loss; },
      vit.tensors(), opts);
  EXPECT_TRUE(testing::grad_case_ok(rv)) << rv.summary();
}

TEST(Students, Errors) {
  const ArchConfig cfg;
  Rng rng(0);
  const StudentParams cnn = init_cnn_params(cfg, rng);
  const StudentParams vit = init_vit_params(cfg, rng);
  EXPECT_THROW(cnn_forward(Tensor::zeros({3, 16, 16}), cnn, cfg), DimensionError);
  EXPECT_THROW(vit_forward(Tensor::zeros({1, 32, 32}), vit, cfg), DimensionError);
  EXPECT_THROW(mlp_block(Tensor::zeros({5, 16, 16}), cnn, cfg), DimensionError);
  EXPECT_THROW(vit_stage(Tensor::zeros({5, 16, 16}), vit, cfg, 2), DimensionError);
  EXPECT_THROW(attn_block(Tensor::zeros({4, 16}), vit, "stage1", 3), ConfigError);
  EXPECT_THROW(attention_mix(Tensor::zeros({2, 5}), Tensor::zeros({2, 5}), Tensor::zeros({2, 5}), 2),
               ConfigError);

  ArchConfig bad = cfg;
  bad.num_heads = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.height = 30;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.cnn_channels[1] = 0;
  EXPECT_THROW(init_cnn_params(bad, rng), ConfigError);
}

TEST(StudentParamsTest, NamedMapContract) {
  StudentParams p;
  p.add("b", Tensor::zeros({2}, true));
  p.add("a", Tensor::zeros({3}, true));
  EXPECT_EQ(p.names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(p.parameter_count(), 5u);
  EXPECT_THROW(p.add("a", Tensor::zeros({1})), ContractError);
  EXPECT_THROW(p.at("missing"), ContractError);
  const StudentParams d = p.detached();
  EXPECT_FALSE(d.at("a").requires_grad());
  EXPECT_TRUE(p.at("a").requires_grad());
}

}  // namespace
}  // namespace hkd
