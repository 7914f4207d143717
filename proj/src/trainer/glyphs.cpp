// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/glyphs.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge::trainer {

namespace {

struct Segment {
  double x0, y0, x1, y1;
};

// Seven segments in glyph space [0,1]^2, y pointing down: top, upper right,
// lower right, bottom, lower left, upper left, middle.
constexpr std::array<Segment, 7> kSegments = {{
    {0.3, 0.15, 0.7, 0.15},
    {0.7, 0.15, 0.7, 0.5},
    {0.7, 0.5, 0.7, 0.85},
    {0.3, 0.85, 0.7, 0.85},
    {0.3, 0.5, 0.3, 0.85},
    {0.3, 0.15, 0.3, 0.5},
    {0.3, 0.5, 0.7, 0.5},
}};

// Segment bits (top = bit 0) lit for each digit.
constexpr std::array<std::uint8_t, 10> kDigits = {0x3f, 0x06, 0x5b, 0x4f, 0x66,
                                                  0x6d, 0x7d, 0x07, 0x7f, 0x6f};

double segment_distance(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (s.x0 + t * dx), ey = py - (s.y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

void render(const GlyphOptions& o, int digit, CounterRng& rng, std::uint8_t* out) {
  const double size = static_cast<double>(o.size);
  std::vector<Segment> strokes;
  for (int k = 0; k < 7; ++k) {
    if (!((kDigits[digit] >> k) & 1)) continue;
    if (rng.uniform() < o.stroke_dropout) continue;
    strokes.push_back(kSegments[k]);
  }
  if (rng.uniform() < o.stray_stroke) {
    strokes.push_back({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
  }
  // Glyph-to-pixel affine map: rotation, anisotropic scale, shear, shift.
  const double angle = (rng.uniform() - 0.5) * 0.5;
  const double sx = 0.8 + 0.35 * rng.uniform();
  const double sy = 0.8 + 0.35 * rng.uniform();
  const double shear = (rng.uniform() - 0.5) * 0.4;
  const double tx = (rng.uniform() - 0.5) * 3.0 / size;
  const double ty = (rng.uniform() - 0.5) * 3.0 / size;
  const double width_px = 0.45 + 0.6 * rng.uniform();
  const double c = std::cos(angle), s = std::sin(angle);
  // Forward matrix A = R * Shear * Scale; invert to sample glyph space.
  const double a00 = c * sx, a01 = (c * shear - s) * sy;
  const double a10 = s * sx, a11 = (s * shear + c) * sy;
  const double det = a00 * a11 - a01 * a10;
  for (std::int64_t y = 0; y < o.size; ++y) {
    for (std::int64_t x = 0; x < o.size; ++x) {
      // Pixel centre relative to the image centre, in glyph units.
      const double u = (static_cast<double>(x) + 0.5) / size - 0.5 - tx;
      const double v = (static_cast<double>(y) + 0.5) / size - 0.5 - ty;
      const double gx = (a11 * u - a01 * v) / det + 0.5;
      const double gy = (-a10 * u + a00 * v) / det + 0.5;
      double d = 1e9;
      for (const auto& seg : strokes) d = std::min(d, segment_distance(gx, gy, seg));
      const double d_px = d * size;
      double ink = std::clamp((width_px - d_px) / 0.75 + 0.5, 0.0, 1.0);
      ink += o.pixel_noise * rng.normal();
      out[y * o.size + x] =
          static_cast<std::uint8_t>(std::lround(std::clamp(ink, 0.0, 1.0) * 255.0));
    }
  }
}

void make_split(const GlyphOptions& o, std::int64_t n, std::uint64_t key, IdxArray& images,
                IdxArray& labels) {
  const auto pixels = static_cast<std::size_t>(o.size * o.size);
  images.dims = {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(o.size),
                 static_cast<std::uint32_t>(o.size)};
  images.data.assign(static_cast<std::size_t>(n) * pixels, 0);
  labels.dims = {static_cast<std::uint32_t>(n)};
  labels.data.assign(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    // One stream per sample keeps samples independent of the split size.
    CounterRng rng(derive_key(key, static_cast<std::uint64_t>(i)));
    const int digit = static_cast<int>(rng.bounded(10));
    labels.data[i] = static_cast<std::uint8_t>(digit);
    render(o, digit, rng, images.data.data() + i * pixels);
  }
}

}  // namespace

GlyphSet make_glyphs(const GlyphOptions& o) {
  if (o.size < 4) throw ValidationError("glyph size must be at least 4");
  if (o.train_samples < 1 || o.test_samples < 1) {
    throw ValidationError("glyph splits need at least one sample");
  }
  GlyphSet set;
  make_split(o, o.train_samples, derive_key(o.seed, "glyph-train"), set.train_images,
             set.train_labels);
  make_split(o, o.test_samples, derive_key(o.seed, "glyph-test"), set.test_images,
             set.test_labels);
  return set;
}

void write_glyph_files(const GlyphSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_idx(dir / "train-images-idx3-ubyte", set.train_images);
  write_idx(dir / "train-labels-idx1-ubyte", set.train_labels);
  write_idx(dir / "test-images-idx3-ubyte", set.test_images);
  write_idx(dir / "test-labels-idx1-ubyte", set.test_labels);
}

}  // namespace forge::trainer
