#include "forge/mask_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "forge/errors.hpp"
#include "forge/rng.hpp"

namespace forge {
namespace {

double segment_distance2(double px, double py, const Point& a, const Point& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
  const double cx = a.x + t * dx - px;
  const double cy = a.y + t * dy - py;
  return cx * cx + cy * cy;
}

void paint_segment(Mask& mask, const Point& a, const Point& b, double radius) {
  const double r2 = radius * radius;
  const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius)));
  const int x1 = std::min(mask.width() - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius)));
  const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius)));
  const int y1 = std::min(mask.height() - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      if (segment_distance2(x, y, a, b) <= r2) mask.at(y, x) = 1;
    }
  }
}

}  // namespace

BrushConfig BrushConfig::scaled_to(int size) const {
  const double s = static_cast<double>(size) / static_cast<double>(target_size);
  BrushConfig out = *this;
  out.min_length = min_length * s;
  out.max_length = max_length * s;
  out.min_width = std::max(1.0, min_width * s);
  out.max_width = std::max(out.min_width, max_width * s);
  out.target_size = size;
  return out;
}

void BrushConfig::validate() const {
  if (target_size < 16) throw ConfigError("brush target_size must be >= 16");
  if (min_strokes < 0 || max_strokes < min_strokes) throw ConfigError("invalid stroke count range");
  if (min_vertices < 1 || max_vertices < min_vertices) throw ConfigError("invalid vertex count range");
  if (min_length < 0.0 || max_length < min_length) throw ConfigError("invalid segment length range");
  if (min_width < 1.0 || max_width < min_width) throw ConfigError("invalid brush width range");
  if (angle_jitter < 0.0) throw ConfigError("angle jitter must be non-negative");
}

std::vector<Stroke> generate_strokes(const BrushConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double limit = cfg.target_size - 1;
  const int count = static_cast<int>(rng.uniform_int(cfg.min_strokes, cfg.max_strokes));
  std::vector<Stroke> strokes;
  strokes.reserve(count);
  for (int s = 0; s < count; ++s) {
    Stroke stroke;
    const int vertices = static_cast<int>(rng.uniform_int(cfg.min_vertices, cfg.max_vertices));
    stroke.width = rng.uniform(cfg.min_width, cfg.max_width);
    Point p{rng.uniform(0.0, limit), rng.uniform(0.0, limit)};
    stroke.points.push_back(p);
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int v = 1; v < vertices; ++v) {
      // eraser motion: every new segment turns back on the previous one
      if (v > 1) heading += std::numbers::pi + rng.uniform(-cfg.angle_jitter, cfg.angle_jitter);
      const double length = rng.uniform(cfg.min_length, cfg.max_length);
      p.x = std::clamp(p.x + length * std::cos(heading), 0.0, limit);
      p.y = std::clamp(p.y + length * std::sin(heading), 0.0, limit);
      stroke.points.push_back(p);
    }
    strokes.push_back(std::move(stroke));
  }
  return strokes;
}

void paint_strokes(Mask& mask, std::span<const Stroke> strokes) {
  for (const Stroke& stroke : strokes) {
    if (stroke.points.empty()) continue;
    const double radius = stroke.width * 0.5;
    if (stroke.points.size() == 1) {
      paint_segment(mask, stroke.points[0], stroke.points[0], radius);
      continue;
    }
    for (std::size_t i = 0; i + 1 < stroke.points.size(); ++i) {
      paint_segment(mask, stroke.points[i], stroke.points[i + 1], radius);
    }
  }
}

Mask rasterize_strokes(std::span<const Stroke> strokes, int width, int height) {
  Mask mask(height, width);
  paint_strokes(mask, strokes);
  return mask;
}

void paint_rect(Mask& mask, const Rect& rect) {
  const int x0 = std::max(0, rect.x);
  const int y0 = std::max(0, rect.y);
  const int x1 = std::min(mask.width(), rect.x + rect.width);
  const int y1 = std::min(mask.height(), rect.y + rect.height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) mask.at(y, x) = 1;
  }
}

Mask generate_mask(const BrushConfig& cfg, std::uint64_t seed) {
  const auto strokes = generate_strokes(cfg, seed);
  return rasterize_strokes(strokes, cfg.target_size, cfg.target_size);
}

Mask generate_rect_mask(int size, std::uint64_t seed) {
  if (size < 4) throw ConfigError("rectangle mask canvas too small");
  Rng rng(seed);
  const double area = rng.uniform(0.05, 0.30) * size * size;
  const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  const int w = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, size);
  const int h = std::clamp(static_cast<int>(std::lround(area / w)), 1, size);
  const Rect rect{static_cast<int>(rng.uniform_int(0, size - w)), static_cast<int>(rng.uniform_int(0, size - h)), w, h};
  Mask mask(size, size);
  paint_rect(mask, rect);
  return mask;
}

HoleStats hole_stats(const Mask& mask) {
  HoleStats stats;
  stats.fraction = mask.hole_fraction();
  const int h = mask.height();
  const int w = mask.width();
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<int> stack;
  int min_x = w, min_y = h, max_x = -1, max_y = -1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
      const int start = y * w + x;
      if (seen[start]) continue;
      ++stats.components;
      seen[start] = 1;
      stack.push_back(start);
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int cy = idx / w;
        const int cx = idx % w;
        const int neighbours[4][2] = {{cx - 1, cy}, {cx + 1, cy}, {cx, cy - 1}, {cx, cy + 1}};
        for (const auto& n : neighbours) {
          if (n[0] < 0 || n[0] >= w || n[1] < 0 || n[1] >= h) continue;
          const int j = n[1] * w + n[0];
          if (!seen[j] && mask.at(n[1], n[0])) {
            seen[j] = 1;
            stack.push_back(j);
          }
        }
      }
    }
  }
  if (max_x >= 0) stats.bbox = Rect{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
  return stats;
}

}  // namespace forge
