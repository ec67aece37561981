// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hkd/tensor.hpp"

namespace hkd {

struct SgdConfig {
  double lr = 0.0025;
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

struct AdamWConfig {
  double lr = 0.00006;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// v <- mu * v + (g + wd * p);  p <- p - lr * v
void sgd_momentum_update(std::span<double> param, std::span<const double> grad,
                         std::span<double> velocity, const SgdConfig& cfg);

/// Decoupled weight decay with bias-corrected moments; `step` is 1-based.
/// p <- p - lr * (m1_hat / (sqrt(m2_hat) + eps) + wd * p)
void adamw_update(std::span<double> param, std::span<const double> grad,
                  std::span<double> first_moment, std::span<double> second_moment,
                  std::uint64_t step, const AdamWConfig& cfg);

/// Applies sgd_momentum_update to a fixed list of leaf tensors. A tensor with
/// no accumulated gradient is treated as having a zero gradient.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, SgdConfig cfg);
  void step();
  void zero_grad();
  const SgdConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  SgdConfig cfg_;
};

class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);
  void step();
  void zero_grad();
  std::uint64_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m1_;
  std::vector<std::vector<double>> m2_;
  std::uint64_t t_ = 0;
  AdamWConfig cfg_;
};

}  // namespace hkd
