// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural ten-class glyph images written as IDX files.
//
// Each class is a seven-segment digit. Samples are drawn through a random
// affine distortion with variable stroke width, dropped strokes, a stray
// stroke and pixel noise, so the task is learnable but not saturated by a
// small MLP.

#pragma once

#include <cstdint>
#include <filesystem>

#include "forge/dataset.hpp"

namespace forge::trainer {

struct GlyphOptions {
  std::int64_t size = 12;
  std::int64_t train_samples = 10000;
  std::int64_t test_samples = 2000;
  double pixel_noise = 0.25;
  double stroke_dropout = 0.1;
  double stray_stroke = 0.5;
  std::uint64_t seed = 0;
};

struct GlyphSet {
  IdxArray train_images, train_labels, test_images, test_labels;
};

GlyphSet make_glyphs(const GlyphOptions& options);

/// Writes train-images-idx3-ubyte, train-labels-idx1-ubyte,
/// test-images-idx3-ubyte and test-labels-idx1-ubyte into `dir`.
void write_glyph_files(const GlyphSet& set, const std::filesystem::path& dir);

}  // namespace forge::trainer
