// SPDX-License-Identifier: Apache-2.0
#include "hkd/optim.hpp"

#include <cmath>

#include "hkd/errors.hpp"

namespace hkd {

namespace {

void require_sizes(std::size_t n, std::initializer_list<std::size_t> others) {
  for (std::size_t m : others) {
    if (m != n) throw DimensionError("optimizer buffers differ in length");
  }
}

std::span<const double> grad_or_zeros(const Tensor& t, const std::vector<double>& zeros) {
  return t.has_grad() ? t.grad() : std::span<const double>(zeros);
}

}  // namespace

void sgd_momentum_update(std::span<double> param, std::span<const double> grad,
                         std::span<double> velocity, const SgdConfig& cfg) {
  require_sizes(param.size(), {grad.size(), velocity.size()});
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + cfg.weight_decay * param[i];
    velocity[i] = cfg.momentum * velocity[i] + g;
    param[i] -= cfg.lr * velocity[i];
  }
}

void adamw_update(std::span<double> param, std::span<const double> grad,
                  std::span<double> first_moment, std::span<double> second_moment,
                  std::uint64_t step, const AdamWConfig& cfg) {
  require_sizes(param.size(), {grad.size(), first_moment.size(), second_moment.size()});
  if (step == 0) throw ContractError("AdamW step counter is 1-based");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    first_moment[i] = cfg.beta1 * first_moment[i] + (1.0 - cfg.beta1) * g;
    second_moment[i] = cfg.beta2 * second_moment[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = first_moment[i] / c1;
    const double v_hat = second_moment[i] / c2;
    param[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * param[i]);
  }
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, SgdConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (const Tensor& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void SgdMomentum::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::vector<double> zeros = params_[i].has_grad() ? std::vector<double>{}
                                                            : std::vector<double>(params_[i].size(), 0.0);
    sgd_momentum_update(params_[i].mutable_data(), grad_or_zeros(params_[i], zeros), velocity_[i],
                        cfg_);
  }
}

void SgdMomentum::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Tensor& p : params_) {
    m1_.emplace_back(p.size(), 0.0);
    m2_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::vector<double> zeros = params_[i].has_grad() ? std::vector<double>{}
                                                            : std::vector<double>(params_[i].size(), 0.0);
    adamw_update(params_[i].mutable_data(), grad_or_zeros(params_[i], zeros), m1_[i], m2_[i], t_,
                 cfg_);
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace hkd
