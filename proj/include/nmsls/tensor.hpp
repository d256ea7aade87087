// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmsls {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major f32 tensor. `grad`, when present, has the same shape as
/// `data`; it is only populated for tensors that require gradients.
struct Tensor {
  Shape shape;
  std::vector<float> data;
  bool requires_grad = false;
  std::optional<std::vector<float>> grad;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f);
  Tensor(Shape s, std::vector<float> values);

  static Tensor scalar(float v) { return Tensor(Shape{}, std::vector<float>{v}); }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  std::span<float> values() { return data; }
  std::span<const float> values() const { return data; }

  float item() const;
  void zero_grad();
  std::vector<float>& ensure_grad();

  // 4-D accessor for NCHW / OIHW layouts.
  float& at(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
    return data[static_cast<std::size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
  float at(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) const {
    return data[static_cast<std::size_t>(((a * shape[1] + b) * shape[2] + c) * shape[3] + d)];
  }
};

// Throws std::invalid_argument with `what` when `cond` is false.
void require(bool cond, const std::string& what);

}  // namespace nmsls
