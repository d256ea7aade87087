// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/tensor_ops.hpp"

#include <algorithm>
#include <string>

#include "nmsls/kernels.hpp"

namespace nmsls::ops {

ConvGeometry conv_geometry(const Shape& input, const Shape& weight, int stride, int padding) {
  require(input.size() == 4, "conv2d: input must be 4-D NCHW, got " + shape_str(input));
  require(weight.size() == 4, "conv2d: weight must be 4-D OIHW, got " + shape_str(weight));
  require(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
  require(padding >= 0, "conv2d: padding must be >= 0");
  require(input[1] == weight[1], "conv2d: input channels " + std::to_string(input[1]) +
                                     " do not match weight input channels " +
                                     std::to_string(weight[1]) + " (input " + shape_str(input) +
                                     ", weight " + shape_str(weight) + ")");
  ConvGeometry g{input[0], input[1], input[2], input[3], weight[0], weight[2], weight[3],
                 stride,   padding,  0,        0};
  g.h_out = (g.h + 2 * padding - g.k_h) / stride + 1;
  g.w_out = (g.w + 2 * padding - g.k_w) / stride + 1;
  require(g.h + 2 * padding >= g.k_h && g.w + 2 * padding >= g.k_w,
          "conv2d: kernel larger than padded input (input " + shape_str(input) + ", weight " +
              shape_str(weight) + ")");
  return g;
}

void im2col(const ConvGeometry& g, const float* image, float* col) {
  const std::int64_t npix = g.out_pixels();
  for (std::int64_t c = 0; c < g.c_in; ++c) {
    const float* plane = image + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.k_w; ++kx) {
        float* row = col + ((c * g.k_h + ky) * g.k_w + kx) * npix;
        for (std::int64_t oy = 0; oy < g.h_out; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          float* dst = row + oy * g.w_out;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.w_out, 0.0f);
            continue;
          }
          const float* src = plane + iy * g.w;
          for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* col, float* image) {
  const std::int64_t npix = g.out_pixels();
  for (std::int64_t c = 0; c < g.c_in; ++c) {
    float* plane = image + c * g.h * g.w;
    for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
      for (std::int64_t kx = 0; kx < g.k_w; ++kx) {
        const float* row = col + ((c * g.k_h + ky) * g.k_w + kx) * npix;
        for (std::int64_t oy = 0; oy < g.h_out; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.h) continue;
          float* dst = plane + iy * g.w;
          const float* src = row + oy * g.w_out;
          for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
            const std::int64_t ix = ox * g.stride - g.padding + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride, int padding) {
  const ConvGeometry g = conv_geometry(input.shape, weight.shape, stride, padding);
  Tensor out(Shape{g.batch, g.c_out, g.h_out, g.w_out});
  const auto& k = kernels::active();
  std::vector<float> col(static_cast<std::size_t>(g.patch_len() * g.out_pixels()));
  const std::int64_t in_stride = g.c_in * g.h * g.w;
  const std::int64_t out_stride = g.c_out * g.out_pixels();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    im2col(g, input.data.data() + b * in_stride, col.data());
    k.gemm_nn(static_cast<int>(g.c_out), static_cast<int>(g.out_pixels()),
              static_cast<int>(g.patch_len()), weight.data.data(), col.data(),
              out.data.data() + b * out_stride);
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weight, int stride, int padding,
                     std::span<const float> grad_out, float* grad_input, float* grad_weight) {
  const ConvGeometry g = conv_geometry(input.shape, weight.shape, stride, padding);
  const auto& k = kernels::active();
  const int m = static_cast<int>(g.c_out);
  const int kk = static_cast<int>(g.patch_len());
  const int npix = static_cast<int>(g.out_pixels());
  std::vector<float> col(static_cast<std::size_t>(kk) * npix);
  std::vector<float> weight_t;
  if (grad_input) {
    weight_t.resize(weight.data.size());
    for (int o = 0; o < m; ++o)
      for (int p = 0; p < kk; ++p)
        weight_t[static_cast<std::size_t>(p) * m + o] = weight.data[static_cast<std::size_t>(o) * kk + p];
  }
  const std::int64_t in_stride = g.c_in * g.h * g.w;
  const std::int64_t out_stride = g.c_out * g.out_pixels();
  for (std::int64_t b = 0; b < g.batch; ++b) {
    const float* gout = grad_out.data() + b * out_stride;
    if (grad_weight) {
      im2col(g, input.data.data() + b * in_stride, col.data());
      k.gemm_nt(m, kk, npix, gout, col.data(), grad_weight);
    }
    if (grad_input) {
      std::fill(col.begin(), col.end(), 0.0f);
      k.gemm_nn(kk, npix, m, weight_t.data(), gout, col.data());
      col2im(g, col.data(), grad_input + b * in_stride);
    }
  }
}

void add_channel_bias(Tensor& x, const Tensor& bias) {
  require(x.rank() == 4 && bias.size() == x.dim(1),
          "bias of shape " + shape_str(bias.shape) + " does not match channels of " + shape_str(x.shape));
  const std::int64_t plane = x.dim(2) * x.dim(3);
  for (std::int64_t b = 0; b < x.dim(0); ++b)
    for (std::int64_t c = 0; c < x.dim(1); ++c) {
      float* p = x.data.data() + (b * x.dim(1) + c) * plane;
      const float v = bias.data[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < plane; ++i) p[i] += v;
    }
}

Tensor pixel_shuffle(const Tensor& input, int r) {
  require(input.rank() == 4, "pixel_shuffle: input must be 4-D, got " + shape_str(input.shape));
  require(r >= 1, "pixel_shuffle: factor must be >= 1");
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  require(input.dim(1) % rr == 0, "pixel_shuffle: channels " + std::to_string(input.dim(1)) +
                                      " not divisible by r^2 = " + std::to_string(rr));
  const std::int64_t B = input.dim(0), C = input.dim(1) / rr, H = input.dim(2), W = input.dim(3);
  Tensor out(Shape{B, C, H * r, W * r});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t dy = 0; dy < r; ++dy)
        for (std::int64_t dx = 0; dx < r; ++dx) {
          const std::int64_t src_c = c * rr + dy * r + dx;
          for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x)
              out.at(b, c, y * r + dy, x * r + dx) = input.at(b, src_c, y, x);
        }
  return out;
}

Tensor pixel_unshuffle(const Tensor& input, int r) {
  require(input.rank() == 4, "pixel_unshuffle: input must be 4-D, got " + shape_str(input.shape));
  require(r >= 1 && input.dim(2) % r == 0 && input.dim(3) % r == 0,
          "pixel_unshuffle: spatial dims of " + shape_str(input.shape) + " not divisible by " +
              std::to_string(r));
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  const std::int64_t B = input.dim(0), C = input.dim(1), H = input.dim(2) / r, W = input.dim(3) / r;
  Tensor out(Shape{B, C * rr, H, W});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t c = 0; c < C; ++c)
      for (std::int64_t dy = 0; dy < r; ++dy)
        for (std::int64_t dx = 0; dx < r; ++dx)
          for (std::int64_t y = 0; y < H; ++y)
            for (std::int64_t x = 0; x < W; ++x)
              out.at(b, c * rr + dy * r + dx, y, x) = input.at(b, c, y * r + dy, x * r + dx);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape == b.shape, "add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

}  // namespace nmsls::ops
