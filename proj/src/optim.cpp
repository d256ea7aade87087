// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/optim.hpp"

#include <cmath>

namespace nmsls {

Optimizer::Optimizer(OptimizerKind kind, std::vector<Tensor*> params, float lr, AdamParams adam)
    : kind_(kind), params_(std::move(params)), lr_(lr), adam_(adam) {
  for (const Tensor* p : params_) require(p != nullptr, "optimizer: null parameter");
  if (kind_ == OptimizerKind::kAdam) {
    for (const Tensor* p : params_) {
      m_.emplace_back(p->data.size(), 0.0f);
      v_.emplace_back(p->data.size(), 0.0f);
    }
  }
}

void Optimizer::zero_grad() {
  for (Tensor* p : params_) p->zero_grad();
}

void Optimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(adam_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(adam_.beta2), static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = *params_[pi];
    if (!p.grad) continue;
    require(p.grad->size() == p.data.size(), "optimizer: gradient/parameter size mismatch");
    const auto& g = *p.grad;
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < g.size(); ++i) p.data[i] -= lr_ * g[i];
      continue;
    }
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = adam_.beta1 * m[i] + (1.0f - adam_.beta1) * g[i];
      v[i] = adam_.beta2 * v[i] + (1.0f - adam_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.data[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + adam_.eps));
    }
  }
}

}  // namespace nmsls
