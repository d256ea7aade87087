// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nmsls/tensor.hpp"

namespace nmsls {

// Planar (CHW) image with float samples on the [0, 255] scale.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  // Rounds and clamps every sample to an 8-bit value (still stored as float).
  Image quantized() const;
  Image crop(int y, int x, int h, int w) const;
};

enum class ResampleDirection { kDown, kUp };

// Separable bicubic resampling (a = -0.5) with half-sample symmetric border
// reflection. Downsampling widens the kernel by the factor (antialiased).
// factor 1 is the identity; downsampling requires dims divisible by factor.
Image bicubic_resample(const Image& image, int factor, ResampleDirection direction);

// Bicubic upsampling of every plane of an NCHW tensor.
Tensor bicubic_upsample(const Tensor& x, int factor);

// 10*log10(max^2 / MSE) over all samples; identical inputs give 99 dB.
double psnr(const Image& output, const Image& reference, double max_val = 255.0);
double mse(const Image& a, const Image& b);

// Binary 8-bit PPM (P6, 3 channels) and PGM (P5, 1 channel).
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const Image& image, const std::filesystem::path& path);

// [1,C,H,W] tensor with samples scaled to [0,1], and back.
Tensor to_tensor(const Image& image);
Tensor to_tensor(const std::vector<const Image*>& batch);
Image from_tensor(const Tensor& t, std::int64_t index = 0);

}  // namespace nmsls
