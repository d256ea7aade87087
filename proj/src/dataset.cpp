// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#include "nmsls/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

namespace nmsls {
namespace {

struct Polygon {
  std::vector<double> xs, ys;

  bool contains(double x, double y) const {
    bool inside = false;
    for (std::size_t i = 0, j = xs.size() - 1; i < xs.size(); j = i++) {
      if ((ys[i] > y) != (ys[j] > y) && x < (xs[j] - xs[i]) * (y - ys[i]) / (ys[j] - ys[i]) + xs[i])
        inside = !inside;
    }
    return inside;
  }
};

Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  require(img.channels == 1, "dataset images must have 1 or 3 channels");
  Image out(3, img.height, img.width);
  for (int c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * img.data.size());
  return out;
}

std::vector<std::filesystem::path> image_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) return files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

Image synth_texture(Rng& rng, int height, int width) {
  Image img(3, height, width);
  float base[3];
  for (float& b : base) b = rng.uniform(40.0f, 215.0f);
  for (int c = 0; c < 3; ++c)
    std::fill(img.data.begin() + static_cast<std::ptrdiff_t>(c) * height * width,
              img.data.begin() + static_cast<std::ptrdiff_t>(c + 1) * height * width, base[c]);

  const int n_waves = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < n_waves; ++k) {
    const double freq = rng.uniform(0.03f, 0.4f);
    const double theta = rng.uniform() * std::numbers::pi;
    const double phase = rng.uniform() * 2.0 * std::numbers::pi;
    const double amp = rng.uniform(10.0f, 45.0f);
    double tint[3];
    for (double& t : tint) t = rng.uniform(0.3f, 1.0f);
    const double cx = std::cos(theta), sy = std::sin(theta);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double v = amp * std::sin(2.0 * std::numbers::pi * freq * (x * cx + y * sy) + phase);
        for (int c = 0; c < 3; ++c) img.at(c, y, x) += static_cast<float>(v * tint[c]);
      }
  }

  const int n_polys = static_cast<int>(rng.below(4));
  for (int k = 0; k < n_polys; ++k) {
    Polygon poly;
    const double cx = rng.uniform() * width, cy = rng.uniform() * height;
    const double radius = (0.15 + 0.35 * rng.uniform()) * std::min(width, height);
    const int verts = 3 + static_cast<int>(rng.below(4));
    std::vector<double> angles(static_cast<std::size_t>(verts));
    for (double& a : angles) a = rng.uniform() * 2.0 * std::numbers::pi;
    std::sort(angles.begin(), angles.end());
    for (double a : angles) {
      const double r = radius * (0.6 + 0.4 * rng.uniform());
      poly.xs.push_back(cx + r * std::cos(a));
      poly.ys.push_back(cy + r * std::sin(a));
    }
    float colour[3];
    for (float& c : colour) c = rng.uniform(0.0f, 255.0f);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        int hits = 0;
        for (int sy2 = 0; sy2 < 2; ++sy2)
          for (int sx2 = 0; sx2 < 2; ++sx2) hits += poly.contains(x + 0.25 + 0.5 * sx2, y + 0.25 + 0.5 * sy2);
        if (hits == 0) continue;
        const float cov = hits / 4.0f;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1.0f - cov) * img.at(c, y, x) + cov * colour[c];
      }
  }

  // Box-filtered white noise, shared across channels.
  const float noise_amp = rng.uniform(2.0f, 10.0f);
  std::vector<float> noise(static_cast<std::size_t>(height) * width);
  for (auto& v : noise) v = static_cast<float>(rng.normal());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      float acc = 0.0f;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= height || xx < 0 || xx >= width) continue;
          acc += noise[static_cast<std::size_t>(yy) * width + xx];
          ++cnt;
        }
      const float v = noise_amp * acc / static_cast<float>(cnt) * 3.0f;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) += v;
    }
  return img.quantized();
}

Sample make_sample(const Image& hr, int scale) {
  Sample s;
  s.hr = hr.quantized();
  s.lr = bicubic_resample(s.hr, scale, ResampleDirection::kDown).quantized();
  return s;
}

PatchDataset synth_dataset(const SynthSpec& spec) {
  require(spec.scale >= 1, "synth_dataset: scale must be >= 1");
  require(spec.patch_size % spec.scale == 0 && spec.test_image_size % spec.scale == 0,
          "synth_dataset: patch size must be divisible by scale");
  PatchDataset d;
  d.scale = spec.scale;
  Rng rng(spec.seed);
  for (int i = 0; i < spec.train_count; ++i)
    d.train.push_back(make_sample(synth_texture(rng, spec.patch_size, spec.patch_size), spec.scale));
  for (int i = 0; i < spec.val_count; ++i)
    d.val.push_back(make_sample(synth_texture(rng, spec.patch_size, spec.patch_size), spec.scale));
  for (int i = 0; i < spec.test_count; ++i)
    d.test.push_back(make_sample(synth_texture(rng, spec.test_image_size, spec.test_image_size), spec.scale));
  return d;
}

PatchDataset load_dataset_dir(const std::filesystem::path& dir, int scale, int patch_size) {
  require(patch_size % scale == 0, "load_dataset_dir: patch size must be divisible by scale");
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("dataset directory not found: " + dir.string());
  PatchDataset d;
  d.scale = scale;
  for (const auto& f : image_files(dir / "train")) {
    const Image img = to_rgb(read_pnm(f));
    for (int y = 0; y + patch_size <= img.height; y += patch_size)
      for (int x = 0; x + patch_size <= img.width; x += patch_size)
        d.train.push_back(make_sample(img.crop(y, x, patch_size, patch_size), scale));
  }
  auto whole = [&](const char* split, std::vector<Sample>& out) {
    for (const auto& f : image_files(dir / split)) {
      const Image img = to_rgb(read_pnm(f));
      const int h = img.height - img.height % scale, w = img.width - img.width % scale;
      if (h == 0 || w == 0) continue;
      out.push_back(make_sample(img.crop(0, 0, h, w), scale));
    }
  };
  whole("val", d.val);
  whole("test", d.test);
  if (d.train.empty() && d.test.empty())
    throw std::runtime_error("dataset directory " + dir.string() + " holds no usable PPM/PGM images");
  return d;
}

void save_dataset_dir(const PatchDataset& data, const std::filesystem::path& dir) {
  auto dump = [&](const char* split, const std::vector<Sample>& samples) {
    const auto sub = dir / split;
    std::filesystem::create_directories(sub);
    char name[32];
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::snprintf(name, sizeof name, "%04zu.ppm", i);
      write_pnm(samples[i].hr, sub / name);
    }
  };
  dump("train", data.train);
  dump("val", data.val);
  dump("test", data.test);
}

}  // namespace nmsls
