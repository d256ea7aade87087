// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace nmsls {
namespace {

double cubic(double x) {
  constexpr double a = -0.5;
  const double ax = std::fabs(x);
  if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
  if (ax < 2.0) return (((ax - 5.0) * ax + 8.0) * ax - 4.0) * a;
  return 0.0;
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

struct Contribution {
  std::vector<int> first;  // per output sample: offset into taps
  std::vector<int> index;
  std::vector<double> weight;
  int taps = 0;
};

// Kernel weights for resizing a length-n axis to length m.
Contribution contributions(int n, int m) {
  const double scale = static_cast<double>(m) / n;
  const double support = scale < 1.0 ? 2.0 / scale : 2.0;
  const double kscale = scale < 1.0 ? scale : 1.0;
  Contribution c;
  c.taps = static_cast<int>(std::ceil(2.0 * support)) + 2;
  for (int o = 0; o < m; ++o) {
    const double center = (o + 0.5) / scale - 0.5;
    const int left = static_cast<int>(std::floor(center - support));
    c.first.push_back(static_cast<int>(c.index.size()));
    double total = 0.0;
    std::vector<double> w(static_cast<std::size_t>(c.taps));
    for (int t = 0; t < c.taps; ++t) {
      w[static_cast<std::size_t>(t)] = kscale * cubic(kscale * (center - (left + t)));
      total += w[static_cast<std::size_t>(t)];
    }
    for (int t = 0; t < c.taps; ++t) {
      c.index.push_back(reflect(left + t, n));
      c.weight.push_back(w[static_cast<std::size_t>(t)] / total);
    }
  }
  return c;
}

void resize_plane(const float* src, int h, int w, float* dst, int oh, int ow) {
  const Contribution cx = contributions(w, ow);
  const Contribution cy = contributions(h, oh);
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      const int f = cx.first[static_cast<std::size_t>(x)];
      for (int t = 0; t < cx.taps; ++t)
        acc += cx.weight[static_cast<std::size_t>(f + t)] *
               src[static_cast<std::size_t>(y) * w + cx.index[static_cast<std::size_t>(f + t)]];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  for (int y = 0; y < oh; ++y) {
    const int f = cy.first[static_cast<std::size_t>(y)];
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < cy.taps; ++t)
        acc += cy.weight[static_cast<std::size_t>(f + t)] *
               tmp[static_cast<std::size_t>(cy.index[static_cast<std::size_t>(f + t)]) * ow + x];
      dst[static_cast<std::size_t>(y) * ow + x] = static_cast<float>(acc);
    }
  }
}

void skip_ws_and_comments(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

Image Image::quantized() const {
  Image out = *this;
  for (auto& v : out.data) v = std::clamp(std::nearbyint(v), 0.0f, 255.0f);
  return out;
}

Image Image::crop(int y, int x, int h, int w) const {
  require(y >= 0 && x >= 0 && h >= 0 && w >= 0 && y + h <= height && x + w <= width,
          "crop: region out of bounds");
  Image out(channels, h, w);
  for (int c = 0; c < channels; ++c)
    for (int r = 0; r < h; ++r)
      std::copy_n(&data[(static_cast<std::size_t>(c) * height + y + r) * width + x], w, &out.at(c, r, 0));
  return out;
}

Image bicubic_resample(const Image& image, int factor, ResampleDirection direction) {
  require(factor >= 1, "bicubic_resample: factor must be >= 1");
  if (factor == 1) return image;
  int oh = image.height * factor, ow = image.width * factor;
  if (direction == ResampleDirection::kDown) {
    require(image.height % factor == 0 && image.width % factor == 0,
            "bicubic_resample: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                " not divisible by factor " + std::to_string(factor));
    oh = image.height / factor;
    ow = image.width / factor;
  }
  Image out(image.channels, oh, ow);
  const std::size_t in_plane = static_cast<std::size_t>(image.height) * image.width;
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < image.channels; ++c)
    resize_plane(image.data.data() + c * in_plane, image.height, image.width, out.data.data() + c * out_plane,
                 oh, ow);
  return out;
}

Tensor bicubic_upsample(const Tensor& x, int factor) {
  require(x.rank() == 4, "bicubic_upsample: expected NCHW, got " + shape_str(x.shape));
  const int h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
  Tensor out(Shape{x.dim(0), x.dim(1), x.dim(2) * factor, x.dim(3) * factor});
  if (factor == 1) return Tensor(x.shape, x.data);
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = in_plane * factor * factor;
  for (std::int64_t p = 0; p < x.dim(0) * x.dim(1); ++p)
    resize_plane(x.data.data() + p * in_plane, h, w, out.data.data() + p * out_plane, h * factor, w * factor);
  return out;
}

double mse(const Image& a, const Image& b) {
  require(a.same_shape(b), "mse: image shapes differ");
  require(!a.data.empty(), "mse: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& output, const Image& reference, double max_val) {
  require(output.same_shape(reference),
          "psnr: shape mismatch " + std::to_string(output.channels) + "x" + std::to_string(output.height) + "x" +
              std::to_string(output.width) + " vs " + std::to_string(reference.channels) + "x" +
              std::to_string(reference.height) + "x" + std::to_string(reference.width));
  const double e = mse(output, reference);
  if (e <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(max_val * max_val / e));
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path.string());
  std::string magic;
  in >> magic;
  int channels = 0;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else throw std::runtime_error(path.string() + ": not a binary PPM/PGM (magic '" + magic + "')");
  int w = 0, h = 0, maxval = 0;
  skip_ws_and_comments(in);
  in >> w;
  skip_ws_and_comments(in);
  in >> h;
  skip_ws_and_comments(in);
  in >> maxval;
  in.get();
  if (!in || w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error(path.string() + ": unsupported header (need 8-bit maxval 255)");
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error(path.string() + ": truncated pixel data");
  Image img(channels, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * channels + c];
  return img;
}

void write_pnm(const Image& image, const std::filesystem::path& path) {
  require(image.channels == 1 || image.channels == 3, "write_pnm: need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << "\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.data.size());
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        raw[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] =
            static_cast<unsigned char>(std::clamp(std::nearbyint(image.at(c, y, x)), 0.0f, 255.0f));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Tensor to_tensor(const Image& image) { return to_tensor(std::vector<const Image*>{&image}); }

Tensor to_tensor(const std::vector<const Image*>& batch) {
  require(!batch.empty(), "to_tensor: empty batch");
  const Image& first = *batch.front();
  Tensor t(Shape{static_cast<std::int64_t>(batch.size()), first.channels, first.height, first.width});
  const std::size_t per = first.data.size();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    require(batch[b]->same_shape(first), "to_tensor: batch images differ in shape");
    for (std::size_t i = 0; i < per; ++i) t.data[b * per + i] = batch[b]->data[i] / 255.0f;
  }
  return t;
}

Image from_tensor(const Tensor& t, std::int64_t index) {
  require(t.rank() == 4 && index < t.dim(0), "from_tensor: expected NCHW with enough images");
  Image img(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)), static_cast<int>(t.dim(3)));
  const std::size_t per = img.data.size();
  for (std::size_t i = 0; i < per; ++i) img.data[i] = t.data[static_cast<std::size_t>(index) * per + i] * 255.0f;
  return img;
}

}  // namespace nmsls
