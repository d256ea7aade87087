// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nmsls/tensor.hpp"

// Tape-free tensor math shared by the autodiff ops and by read-only inference.
namespace nmsls::ops {

struct ConvGeometry {
  std::int64_t batch, c_in, h, w;
  std::int64_t c_out, k_h, k_w;
  int stride, padding;
  std::int64_t h_out, w_out;

  std::int64_t patch_len() const { return c_in * k_h * k_w; }
  std::int64_t out_pixels() const { return h_out * w_out; }
};

// Validates an NCHW input against an OIHW weight.
ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int padding);

// col is [c_in*k_h*k_w, h_out*w_out] for a single image.
void im2col(const ConvGeometry& g, const float* image, float* col);
// Accumulates col back into image (adjoint of im2col).
void col2im(const ConvGeometry& g, const float* col, float* image);

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding);
// Either gradient pointer may be null. Gradients are accumulated.
void conv2d_backward(const Tensor& input, const Tensor& weight, int stride, int padding,
                     std::span<const float> grad_out, float* grad_input, float* grad_weight);

// Adds a per-channel bias to an NCHW tensor in place.
void add_channel_bias(Tensor& x, const Tensor& bias);

Tensor pixel_shuffle(const Tensor& input, int r);
Tensor pixel_unshuffle(const Tensor& input, int r);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);

}  // namespace nmsls::ops
