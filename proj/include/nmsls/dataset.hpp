// Copyright 2026 The nmsls Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nmsls/image.hpp"
#include "nmsls/rng.hpp"

namespace nmsls {

struct Sample {
  Image hr;
  Image lr;  // bicubic-downsampled hr, quantized to 8 bits
};

// HR/LR pairs grouped by split. Training entries are fixed-size patches;
// validation and test entries may be whole images.
struct PatchDataset {
  int scale = 2;
  std::vector<Sample> train, val, test;
};

struct SynthSpec {
  std::uint64_t seed = 0;
  int train_count = 64;
  int val_count = 8;
  int test_count = 8;
  int patch_size = 32;       // HR side of train/val patches
  int test_image_size = 96;  // HR side of test images
  int scale = 2;
};

// Procedural RGB texture: oriented sinusoids, filled polygons and filtered
// noise over a random base colour. Samples are 8-bit values.
Image synth_texture(Rng& rng, int height, int width);

Sample make_sample(const Image& hr, int scale);

// Bit-identical for a fixed spec.
PatchDataset synth_dataset(const SynthSpec& spec);

// Reads {train,val,test}/*.ppm|*.pgm. Training images are tiled into
// patch_size squares; other splits are cropped to a multiple of scale.
// Grayscale inputs are replicated to three channels.
PatchDataset load_dataset_dir(const std::filesystem::path& dir, int scale, int patch_size);
void save_dataset_dir(const PatchDataset& data, const std::filesystem::path& dir);

}  // namespace nmsls
