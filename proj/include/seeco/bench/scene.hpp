#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "seeco/error.hpp"
#include "seeco/numerics/rng.hpp"
#include "seeco/types.hpp"

namespace seeco::bench {

enum class ShapeKind { kAxisRect, kRotatedRect, kDisc };

/// One painted region. Rectangles use half extents and an angle (zero for
/// axis-aligned); discs use `half_w` as the radius.
struct Region {
  ShapeKind kind = ShapeKind::kDisc;
  std::uint8_t label = 1;
  double center_row = 0.0;
  double center_col = 0.0;
  double half_h = 0.0;
  double half_w = 0.0;
  double angle = 0.0;

  /// Membership of the point (row, col), measured at pixel centres.
  bool contains(double row, double col) const {
    const double dr = row - center_row, dc = col - center_col;
    if (kind == ShapeKind::kDisc) return dr * dr + dc * dc <= half_w * half_w;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dc + s * dr;
    const double v = -s * dc + c * dr;
    return std::abs(u) <= half_w && std::abs(v) <= half_h;
  }

  double area() const {
    return kind == ShapeKind::kDisc ? std::numbers::pi * half_w * half_w : 4.0 * half_w * half_h;
  }

  double perimeter() const {
    return kind == ShapeKind::kDisc ? 2.0 * std::numbers::pi * half_w : 4.0 * (half_w + half_h);
  }
};

struct SyntheticScene {
  Tensor image;  // [H x W x 3], values k/255
  LabelMap gt;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  std::vector<Region> regions;
  std::vector<std::array<double, 3>> palette;
};

/// Base colours spread over the RGB cube; classes past the table get
/// seeded colours.
inline std::vector<std::array<double, 3>> class_palette(std::size_t classes, RandomStream& rng) {
  static constexpr std::array<std::array<double, 3>, 10> kBase = {{
      {0.55, 0.50, 0.42},
      {0.85, 0.20, 0.20},
      {0.35, 0.35, 0.38},
      {0.10, 0.30, 0.80},
      {0.10, 0.55, 0.15},
      {0.60, 0.85, 0.35},
      {0.95, 0.85, 0.10},
      {0.90, 0.45, 0.85},
      {0.10, 0.85, 0.85},
      {0.95, 0.95, 0.95},
  }};
  std::vector<std::array<double, 3>> out;
  for (std::size_t j = 0; j < classes; ++j)
    out.push_back(j < kBase.size() ? kBase[j] : std::array<double, 3>{rng.uniform(), rng.uniform(), rng.uniform()});
  return out;
}

inline double quantize_unit(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

/// Paints regions(list) onto a background of class 0; later regions
/// overwrite earlier ones.
inline SyntheticScene render_scene(std::size_t height, std::size_t width, std::size_t classes,
                                   std::vector<Region> regions, double texture_noise, RandomStream& rng,
                                   std::uint64_t seed) {
  SyntheticScene scene;
  scene.classes = classes;
  scene.seed = seed;
  scene.palette = class_palette(classes, rng);
  scene.regions = std::move(regions);
  scene.gt = LabelMap{height, width, std::vector<std::uint8_t>(height * width, 0)};
  for (const Region& reg : scene.regions)
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c)
        if (reg.contains(static_cast<double>(r) + 0.5, static_cast<double>(c) + 0.5))
          scene.gt.labels[r * width + c] = reg.label;
  scene.image = Tensor({height, width, 3});
  for (std::size_t p = 0; p < height * width; ++p)
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double noise = texture_noise > 0.0 ? texture_noise * (2.0 * rng.uniform() - 1.0) : 0.0;
      scene.image[p * 3 + ch] = quantize_unit(scene.palette[scene.gt.labels[p]][ch] + noise);
    }
  return scene;
}

/// J-1 geometric regions (axis-aligned rectangles, rotated rectangles and
/// discs) over a background class, with additive uniform noise.
inline SyntheticScene gen_scene(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t classes,
                                double texture_noise) {
  require(classes >= 2, ErrorCode::kConfigError, "a scene needs at least two classes");
  require(classes <= 256, ErrorCode::kConfigError, "at most 256 classes fit a byte label map");
  require(height >= 224 && width >= 224, ErrorCode::kConfigError, "scenes must be at least 224x224");
  require(texture_noise >= 0.0, ErrorCode::kConfigError, "texture noise must be non-negative");
  RandomStream rng = seeded_rng(seed);
  const double short_side = static_cast<double>(std::min(height, width));
  std::vector<Region> regions;
  for (std::size_t j = 1; j < classes; ++j) {
    Region reg;
    reg.label = static_cast<std::uint8_t>(j);
    reg.kind = static_cast<ShapeKind>(rng.below(3));
    reg.center_row = rng.uniform(0.1, 0.9) * static_cast<double>(height);
    reg.center_col = rng.uniform(0.1, 0.9) * static_cast<double>(width);
    reg.half_h = rng.uniform(0.08, 0.25) * short_side;
    reg.half_w = rng.uniform(0.08, 0.25) * short_side;
    if (reg.kind == ShapeKind::kRotatedRect) reg.angle = rng.uniform(0.1, std::numbers::pi / 2 - 0.1);
    regions.push_back(reg);
  }
  return render_scene(height, width, classes, std::move(regions), texture_noise, rng, seed);
}

}  // namespace seeco::bench
