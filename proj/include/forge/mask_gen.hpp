#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "forge/image.hpp"

namespace forge {

/// Parameters of the eraser-like brush used to synthesize training holes.
/// Lengths and widths are in pixels for a `target_size` x `target_size` canvas.
struct BrushConfig {
  int min_strokes = 1;
  int max_strokes = 4;
  int min_vertices = 4;
  int max_vertices = 12;
  double min_length = 10.0;
  double max_length = 40.0;
  double angle_jitter = 0.35;  // radians around the reversed heading
  double min_width = 12.0;
  double max_width = 40.0;
  int target_size = 256;

  /// Same brush proportions on a different canvas size.
  BrushConfig scaled_to(int size) const;
  void validate() const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Polyline painted with a round brush of diameter `width`.
struct Stroke {
  std::vector<Point> points;
  double width = 1.0;
};

/// Axis-aligned filled rectangle.
struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

/// Random back-and-forth strokes; vertices are clamped to the canvas.
std::vector<Stroke> generate_strokes(const BrushConfig& cfg, std::uint64_t seed);

/// Paints strokes onto a new width x height mask. A pixel at integer coordinate
/// (x, y) is a hole when its distance to some stroke segment is at most width / 2.
Mask rasterize_strokes(std::span<const Stroke> strokes, int width, int height);
/// Adds strokes onto an existing mask.
void paint_strokes(Mask& mask, std::span<const Stroke> strokes);
void paint_rect(Mask& mask, const Rect& rect);

Mask generate_mask(const BrushConfig& cfg, std::uint64_t seed);

/// Single random rectangle covering 5% to 30% of the canvas.
Mask generate_rect_mask(int size, std::uint64_t seed);

struct HoleStats {
  double fraction = 0.0;
  int components = 0;
  /// Bounding box of all hole pixels; width = height = 0 when there are none.
  Rect bbox;
};

/// Hole fraction, 4-connected component count and bounding box.
HoleStats hole_stats(const Mask& mask);

}  // namespace forge
