// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "generators.hpp"
#include "gradcheck.hpp"
#include "hkd/archive.hpp"
#include "hkd/errors.hpp"
#include "hkd/ops.hpp"
#include "hkd/rng.hpp"
#include "hkd/tensor.hpp"
#include "suites.hpp"

namespace hkd {
namespace {

using testing::random_tensor;

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TEST(Tensor, FactoriesAndAccessors) {
  const Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at(4), 5.0);
  EXPECT_FALSE(t.requires_grad());
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_EQ(vals(Tensor::full({2}, 7.0)), (std::vector<double>{7.0, 7.0}));
  EXPECT_EQ(shape_string({2, 3}), "[2x3]");
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor::zeros({2, 0}), DimensionError);
  EXPECT_THROW(Tensor::zeros({2}).dim(1), DimensionError);
  EXPECT_THROW(Tensor::zeros({2}).item(), ContractError);
  EXPECT_THROW(Tensor().shape(), ContractError);
}

TEST(Tensor, OpOutputsAreImmutable) {
  Tensor a = Tensor::zeros({2}, true);
  Tensor b = ops::scale(a, 2.0);
  EXPECT_NO_THROW(a.mutable_data());
  EXPECT_THROW(b.mutable_data(), ContractError);
}

TEST(Autodiff, LeafGradientsAccumulateAcrossCalls) {
  Tensor x = Tensor::from_data({2}, {1.0, -2.0}, true);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
  backward(ops::sum(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -3.0);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad() && (x.grad()[0] != 0.0 || x.grad()[1] != 0.0));
}

TEST(Autodiff, SharedSubexpressionsSumTheirContributions) {
  Tensor x = Tensor::from_data({1}, {3.0}, true);
  Tensor y = ops::mul(x, x);              // x^2
  Tensor z = ops::add(ops::mul(y, x), y);  // x^3 + x^2
  backward(z);
  EXPECT_DOUBLE_EQ(x.grad()[0], 3 * 9.0 + 2 * 3.0);
}

TEST(Autodiff, BackwardContracts) {
  Tensor x = Tensor::zeros({3}, true);
  EXPECT_THROW(backward(ops::scale(x, 2.0)), ContractError);
  EXPECT_THROW(backward(Tensor::scalar(1.0)), ContractError);
}

TEST(Autodiff, NoGradGuardStopsRecording) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(ops::sum(x).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(ops::sum(x).requires_grad());
}

TEST(Autodiff, DetachSeversTheEdge) {
  Tensor x = Tensor::from_data({2}, {1.5, -0.5}, true);
  const Tensor w = Tensor::from_data({2}, {2.0, 3.0});
  // d/dx of sum(w * (x + stop(x^2))) is w alone.
  backward(ops::sum(ops::mul(w, ops::add(x, ops::detach(ops::mul(x, x))))));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 3.0);
  EXPECT_FALSE(ops::detach(x).requires_grad());
}

TEST(Ops, ShapeErrors) {
  const Tensor a = Tensor::zeros({2, 3});
  EXPECT_THROW(ops::add(a, Tensor::zeros({3, 2})), DimensionError);
  EXPECT_THROW(ops::matmul(a, a), DimensionError);
  EXPECT_THROW(ops::reshape(a, {4}), DimensionError);
  EXPECT_THROW(ops::slice_cols(a, 2, 4), DimensionError);
  EXPECT_THROW(ops::add_bias(a, Tensor::zeros({2}), 1), DimensionError);
  EXPECT_THROW(ops::log(Tensor::from_data({2}, {1.0, 0.0})), ContractError);
}

TEST(Ops, ConvMatchesDirectSum) {
  Rng rng(3);
  const Tensor x = random_tensor({2, 5, 5}, rng);
  const Tensor w = random_tensor({3, 2, 3, 3}, rng);
  const Tensor b = random_tensor({3}, rng);
  const Tensor y = ops::conv2d(x, w, b, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{3, 3, 3}));
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = b.at(o);
        for (std::size_t c = 0; c < 2; ++c) {
          for (std::size_t u = 0; u < 3; ++u) {
            for (std::size_t v = 0; v < 3; ++v) {
              const long r = static_cast<long>(2 * i + u) - 1;
              const long s = static_cast<long>(2 * j + v) - 1;
              if (r < 0 || s < 0 || r >= 5 || s >= 5) continue;
              acc += w.at(((o * 2 + c) * 3 + u) * 3 + v) * x.at((c * 5 + r) * 5 + s);
            }
          }
        }
        EXPECT_NEAR(y.at((o * 3 + i) * 3 + j), acc, 1e-12);
      }
    }
  }
}

TEST(Ops, ConvRejectsNonIntegralOutput) {
  EXPECT_THROW(ops::conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 2, 1),
               DimensionError);
  EXPECT_THROW(ops::conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 1, 1),
               DimensionError);
}

TEST(Ops, PoolingAndResize) {
  const Tensor x = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(ops::avg_pool2d(x, 2, 2).item(), 2.5);
  EXPECT_THROW(ops::avg_pool2d(Tensor::zeros({1, 3, 3}), 2, 2), DimensionError);
  EXPECT_EQ(vals(ops::upsample_bilinear(x, 2, 2)), vals(x));
  // A constant map stays constant under any resize.
  const Tensor c = Tensor::full({2, 3, 3}, 0.75);
  const Tensor resized = ops::upsample_bilinear(c, 7, 5);
  for (double v : resized.data()) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(Ops, SoftmaxRowsSumToOneAndAreShiftInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor x = random_tensor({4, 5}, rng, -30.0, 30.0);
    const Tensor p = ops::softmax(x, 1);
    const Tensor q = ops::softmax(ops::add_scalar(x, 100.0), 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        s += p.at(r * 5 + c);
        EXPECT_NEAR(p.at(r * 5 + c), q.at(r * 5 + c), 1e-12);
        EXPECT_NEAR(std::exp(ops::log_softmax(x, 1).at(r * 5 + c)), p.at(r * 5 + c), 1e-12);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Ops, LayerNormRowsAreStandardised) {
  Rng rng(5);
  const Tensor x = random_tensor({3, 8}, rng, -4.0, 4.0);
  const Tensor y = ops::layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0;
    double v = 0.0;
    for (std::size_t c = 0; c < 8; ++c) m += y.at(r * 8 + c) / 8;
    for (std::size_t c = 0; c < 8; ++c) v += (y.at(r * 8 + c) - m) * (y.at(r * 8 + c) - m) / 8;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(Ops, L2NormOfZeroVectorHasZeroGradient) {
  Tensor x = Tensor::zeros({3, 1}, true);
  backward(ops::sum(ops::l2_norm(x, 0)));
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Ops, TokenLayoutRoundTrips) {
  Rng rng(2);
  const Tensor m = random_tensor({3, 2, 4}, rng);
  const Tensor t = ops::map_to_tokens(m);
  EXPECT_EQ(t.shape(), (Shape{8, 3}));
  EXPECT_EQ(t.at(5 * 3 + 2), m.at(2 * 8 + 5));
  EXPECT_EQ(vals(ops::tokens_to_map(t, 2, 4)), vals(m));
}

TEST(Ops, GatherChannelSkipsIgnoredPixels) {
  const Tensor x = Tensor::from_data({2, 1, 2}, {1, 2, 3, 4});
  const std::vector<std::uint8_t> y{1, 255};
  EXPECT_EQ(vals(ops::gather_channel(x, y, 255)), (std::vector<double>{3.0, 0.0}));
  const std::vector<std::uint8_t> bad{2, 0};
  EXPECT_THROW(ops::gather_channel(x, bad, 255), DataError);
}

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const testing::GradCase c = testing::op_grad_cases().at(GetParam());
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const testing::GradCheckReport r = c.run(seed);
    EXPECT_TRUE(testing::grad_case_ok(r)) << c.name << " seed " << seed << ": " << r.summary();
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient,
                         ::testing::Range<std::size_t>(0, testing::op_grad_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           std::string n = testing::op_grad_cases().at(info.param).name;
                           for (char& ch : n) {
                             if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
                           }
                           return n;
                         });

TEST(Rng, SubstreamsAreDeterministicAndDistinct) {
  Rng a = Rng::substream(7, "init");
  Rng b = Rng::substream(7, "init");
  Rng c = Rng::substream(7, "data");
  const double x = a.uniform(0.0, 1.0);
  EXPECT_EQ(x, b.uniform(0.0, 1.0));
  EXPECT_NE(x, c.uniform(0.0, 1.0));
}

TEST(Rng, DrawsStayInRange) {
  Rng r(1);
  for (int i = 0; i < 2000; ++i) {
    const double u = r.uniform(-2.0, 3.0);
    EXPECT_GE(u, -2.0);
    EXPECT_LT(u, 3.0);
    const auto k = r.integer(4, 6);
    EXPECT_GE(k, 4u);
    EXPECT_LE(k, 6u);
  }
}

TEST(Archive, ByteExactRoundTrip) {
  std::vector<ArchiveRecord> recs{{"a", {2, 2}, {1.0, -0.0, 1e-300, std::nan("")}},
                                  {"weights/b", {3}, {0.1, 0.2, 0.3}}};
  const auto bytes = encode_archive(recs);
  const auto back = decode_archive(bytes);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(encode_archive(back), bytes);
  EXPECT_EQ(back[1], recs[1]);
  EXPECT_TRUE(std::signbit(back[0].values[1]));
}

TEST(Archive, RejectsCorruptInput) {
  std::vector<ArchiveRecord> recs{{"x", {2}, {1.0, 2.0}}};
  auto bytes = encode_archive(recs);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_archive(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_archive(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_archive(trailing), FormatError);
  auto version = bytes;
  version[8] = 9;
  EXPECT_THROW(decode_archive(version), FormatError);
  EXPECT_THROW(read_archive(std::filesystem::temp_directory_path() / "hkd-missing.bin"), FormatError);
}

}  // namespace
}  // namespace hkd
