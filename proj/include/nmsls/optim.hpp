// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "nmsls/tensor.hpp"

namespace nmsls {

enum class OptimizerKind { kSgd, kAdam };

struct AdamParams {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// In-place first-order optimizer over a fixed, ordered parameter list.
// Parameters without a gradient buffer are skipped.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<Tensor*> params, float lr, AdamParams adam = {});

  void step();
  void zero_grad();

  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }
  std::int64_t steps() const { return t_; }
  const std::vector<Tensor*>& params() const { return params_; }

 private:
  OptimizerKind kind_;
  std::vector<Tensor*> params_;
  float lr_;
  AdamParams adam_;
  std::int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

}  // namespace nmsls
