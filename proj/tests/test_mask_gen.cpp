#include <doctest.h>

#include <cmath>
#include <queue>

#include "forge/errors.hpp"
#include "forge/mask_gen.hpp"
#include "support.hpp"

using namespace forge;

namespace {

// Component sizes by 4-connected breadth-first fill.
std::vector<int> component_sizes(const Mask& m) {
  const int h = m.height(), w = m.width();
  std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
  std::vector<int> sizes;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m.at(y, x) || label[y * w + x] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      std::queue<std::pair<int, int>> q;
      q.push({y, x});
      label[y * w + x] = id;
      while (!q.empty()) {
        const auto [cy, cx] = q.front();
        q.pop();
        ++sizes[id];
        const int dy[] = {1, -1, 0, 0};
        const int dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
          if (!m.at(ny, nx) || label[ny * w + nx] >= 0) continue;
          label[ny * w + nx] = id;
          q.push({ny, nx});
        }
      }
    }
  }
  return sizes;
}

double segment_distance(Point p, Point a, Point b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx), dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

TEST_CASE("zero strokes give an empty mask") {
  BrushConfig cfg;
  cfg.min_strokes = 0;
  cfg.max_strokes = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mask m = generate_mask(cfg, seed);
    CHECK(m.height() == 256);
    CHECK(m.hole_count() == 0);
  }
}

TEST_CASE("masks are a pure function of config and seed") {
  const BrushConfig cfg;
  for (std::uint64_t seed : {0ull, 1ull, 12345ull, ~0ull}) CHECK(generate_mask(cfg, seed) == generate_mask(cfg, seed));
  CHECK(generate_mask(cfg, 1) != generate_mask(cfg, 2));
  CHECK(generate_rect_mask(64, 3) == generate_rect_mask(64, 3));
}

TEST_CASE("config validation") {
  BrushConfig cfg;
  cfg.target_size = 8;
  CHECK_THROWS_AS(generate_mask(cfg, 0), ConfigError);
  cfg = BrushConfig{};
  cfg.min_width = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BrushConfig{};
  cfg.max_strokes = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BrushConfig{};
  cfg.max_length = 5.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("scaling keeps proportions") {
  const BrushConfig base;
  const BrushConfig half = base.scaled_to(128);
  CHECK(half.target_size == 128);
  CHECK(half.min_width == doctest::Approx(base.min_width / 2));
  CHECK(half.max_length == doctest::Approx(base.max_length / 2));
  CHECK(half.min_strokes == base.min_strokes);
  CHECK(half.min_width >= 1.0);
}

TEST_CASE("Monte Carlo statistics over 1000 seeds") {
  const BrushConfig cfg;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto strokes = generate_strokes(cfg, seed);
    const Mask m = rasterize_strokes(strokes, cfg.target_size, cfg.target_size);
    REQUIRE(m == generate_mask(cfg, seed));
    const HoleStats stats = hole_stats(m);
    total += stats.fraction;
    CHECK(stats.fraction < 1.0);
    CHECK(stats.fraction > 0.0);
    const auto sizes = component_sizes(m);
    CHECK(static_cast<int>(sizes.size()) == stats.components);
    CHECK(stats.components <= static_cast<int>(strokes.size()));
    // Round brushes at least 12 px wide never leave isolated pixels.
    for (int s : sizes) CHECK(s > 1);
    for (auto v : m.data()) REQUIRE((v == 0 || v == 1));
    for (const Stroke& s : strokes) {
      CHECK(s.points.size() >= static_cast<std::size_t>(cfg.min_vertices));
      CHECK(s.points.size() <= static_cast<std::size_t>(cfg.max_vertices));
      CHECK(s.width >= cfg.min_width);
      CHECK(s.width <= cfg.max_width);
    }
  }
  const double mean = total / 1000.0;
  MESSAGE("mean hole fraction " << mean);
  CHECK(mean >= 0.05);
  CHECK(mean <= 0.40);
}

TEST_CASE("strokes move back and forth") {
  const BrushConfig cfg;
  int reversals = 0, turns = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (const Stroke& s : generate_strokes(cfg, seed)) {
      for (std::size_t i = 2; i < s.points.size(); ++i) {
        const double ax = s.points[i - 1].x - s.points[i - 2].x, ay = s.points[i - 1].y - s.points[i - 2].y;
        const double bx = s.points[i].x - s.points[i - 1].x, by = s.points[i].y - s.points[i - 1].y;
        if (std::hypot(ax, ay) < 1.0 || std::hypot(bx, by) < 1.0) continue;
        ++turns;
        if (ax * bx + ay * by < 0.0) ++reversals;
      }
    }
  }
  REQUIRE(turns > 100);
  CHECK(static_cast<double>(reversals) / turns > 0.9);
}

TEST_CASE("rasterization matches a distance oracle") {
  const std::vector<Stroke> strokes{{{{5.0, 5.0}, {30.0, 12.5}, {8.0, 20.0}}, 6.0}, {{{40.0, 40.0}}, 9.0}};
  const Mask m = rasterize_strokes(strokes, 48, 48);
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) {
      bool hole = false;
      for (const Stroke& s : strokes) {
        if (s.points.size() == 1) hole |= segment_distance({double(x), double(y)}, s.points[0], s.points[0]) <= s.width / 2;
        for (std::size_t i = 1; i < s.points.size(); ++i) {
          hole |= segment_distance({double(x), double(y)}, s.points[i - 1], s.points[i]) <= s.width / 2;
        }
      }
      CHECK_MESSAGE(m.at(y, x) == (hole ? 1 : 0), "x=" << x << " y=" << y);
    }
  }
  Mask painted(48, 48);
  paint_strokes(painted, strokes);
  CHECK(painted == m);
}

TEST_CASE("rectangles") {
  Mask m(20, 30);
  paint_rect(m, Rect{-5, 18, 10, 10});
  CHECK(m.hole_count() == 5 * 2);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const HoleStats s = hole_stats(generate_rect_mask(64, seed));
    CHECK(s.components == 1);
    CHECK(s.fraction >= 0.03);
    CHECK(s.fraction <= 0.34);
    CHECK(s.bbox.width * s.bbox.height == doctest::Approx(s.fraction * 64 * 64));
  }
}

TEST_CASE("hole_stats examples") {
  const HoleStats empty = hole_stats(Mask(100, 100));
  CHECK(empty.fraction == 0.0);
  CHECK(empty.components == 0);
  CHECK(empty.bbox.width == 0);
  CHECK(empty.bbox.height == 0);

  Mask square(100, 100);
  paint_rect(square, Rect{45, 45, 10, 10});
  const HoleStats s = hole_stats(square);
  CHECK(s.fraction == doctest::Approx(0.01));
  CHECK(s.components == 1);
  CHECK(s.bbox.x == 45);
  CHECK(s.bbox.y == 45);
  CHECK(s.bbox.width == 10);
  CHECK(s.bbox.height == 10);

  // Diagonal neighbours are separate 4-connected components.
  const Mask diag(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(hole_stats(diag).components == 2);
  const HoleStats full = hole_stats(Mask(3, 4, 1));
  CHECK(full.fraction == 1.0);
  CHECK(full.components == 1);
  CHECK(full.bbox.width == 4);
}
