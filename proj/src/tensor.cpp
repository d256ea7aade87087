// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/tensor.hpp"

#include <stdexcept>

namespace nmsls {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    require(d >= 0, "negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

Tensor::Tensor(Shape s, float fill)
    : shape(std::move(s)), data(static_cast<std::size_t>(numel(shape)), fill) {}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {
  require(numel(shape) == static_cast<std::int64_t>(data.size()),
          "tensor data length " + std::to_string(data.size()) + " does not match shape " +
              shape_str(shape));
}

float Tensor::item() const {
  require(data.size() == 1, "item() on tensor of shape " + shape_str(shape));
  return data[0];
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0f);
}

std::vector<float>& Tensor::ensure_grad() {
  if (!grad || grad->size() != data.size()) grad = std::vector<float>(data.size(), 0.0f);
  return *grad;
}

}  // namespace nmsls
