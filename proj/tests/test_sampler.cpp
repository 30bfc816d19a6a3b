#include <doctest.h>

#include <cmath>
#include <limits>

#include "forge/errors.hpp"
#include "forge/png_io.hpp"
#include "forge/sampler.hpp"
#include "forge/svbrdf.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace forge;

namespace {

Mask centre_hole(int h, int w, double fraction) {
  const int side_w = static_cast<int>(std::lround(w * std::sqrt(fraction)));
  const int side_h = static_cast<int>(std::lround(h * std::sqrt(fraction)));
  Mask m(h, w);
  paint_rect(m, Rect{(w - side_w) / 2, (h - side_h) / 2, side_w, side_h});
  return m;
}

double region_mad(const ImageTensor& a, const ImageTensor& b, const Mask& m, bool inside) {
  double s = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if ((m.at(y, x) != 0) != inside) continue;
        s += std::abs(a.at(c, y, x) - b.at(c, y, x));
        ++n;
      }
    }
  }
  return n ? s / n : 0.0;
}

bool known_region_equal(const ImageTensor& out, const ImageTensor& in, const Mask& m) {
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < in.height(); ++y) {
      for (int x = 0; x < in.width(); ++x) {
        if (!m.at(y, x) && out.at(c, y, x) != in.at(c, y, x)) return false;
      }
    }
  }
  return true;
}

class NanPredictor final : public X0Predictor {
 public:
  explicit NanPredictor(int bad_step) : bad_step_(bad_step) {}
  int channels() const override { return 3; }
  ImageTensor predict(const ImageTensor& x_t, const ImageTensor&, const Mask&, int step) const override {
    ImageTensor out(x_t.channels(), x_t.height(), x_t.width(), 0.0f);
    if (step == bad_step_) out.at(0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
    return out;
  }

 private:
  int bad_step_;
};

// Records the shapes and steps the sampler hands to the model.
class RecordingPredictor final : public X0Predictor {
 public:
  int channels() const override { return 3; }
  int size_multiple() const override { return 8; }
  ImageTensor predict(const ImageTensor& x_t, const ImageTensor& y, const Mask& m, int step) const override {
    steps.push_back(step);
    heights.push_back(x_t.height());
    widths.push_back(x_t.width());
    last_y = y;
    last_mask = m;
    return ImageTensor(x_t.channels(), x_t.height(), x_t.width(), 5.0f);
  }
  mutable std::vector<int> steps, heights, widths;
  mutable ImageTensor last_y;
  mutable Mask last_mask;
};

}  // namespace

TEST_CASE("an empty hole returns the input bit-exact") {
  const ImageTensor img = forge::test::random_image(3, 24, 24, 1);
  const test::EchoPredictor model(3);
  const NoiseSchedule schedule(100);
  Rng rng(3);
  CHECK(inpaint(model, schedule, img, Mask(24, 24, 0), rng) == img);
}

TEST_CASE("fixed seed reproduces the sample") {
  const ImageTensor img = forge::test::random_image(3, 16, 16, 2);
  const Mask m = centre_hole(16, 16, 0.25);
  const test::EchoPredictor model(3);
  const NoiseSchedule schedule(200);
  Rng a(42), b(42);
  CHECK(inpaint(model, schedule, img, m, a) == inpaint(model, schedule, img, m, b));
}

TEST_CASE("two seeds give different hole content") {
  const ImageTensor img = crop(load_image(forge::test::fixture("texture.png")), 0, 0, 64);
  const Mask m = centre_hole(64, 64, 0.25);
  CHECK(m.hole_fraction() == doctest::Approx(0.25).epsilon(0.01));
  const test::EchoPredictor model(3);
  const NoiseSchedule schedule(1000);
  Rng a(1), b(2);
  const ImageTensor s1 = inpaint(model, schedule, img, m, a);
  const ImageTensor s2 = inpaint(model, schedule, img, m, b);
  const double inside = region_mad(s1, s2, m, true);
  const double outside = region_mad(s1, s2, m, false);
  CHECK(inside > 0.0);
  CHECK(outside == 0.0);
  CHECK(inside > 10.0 * outside);
  CHECK(known_region_equal(s1, img, m));
}

TEST_CASE("batch samples use seed + i") {
  const ImageTensor img = forge::test::random_image(3, 16, 16, 4);
  const Mask m = centre_hole(16, 16, 0.3);
  const test::EchoPredictor model(3);
  const NoiseSchedule schedule(100);
  const BatchResult batch = inpaint_batch(model, schedule, img, m, 4, 500);
  REQUIRE(batch.samples.size() == 4);
  CHECK(batch.seeds == std::vector<std::uint64_t>{500, 501, 502, 503});
  CHECK(batch.model_calls == 400);
  for (int i = 0; i < 4; ++i) {
    Rng rng(500 + i);
    CHECK(batch.samples[i] == inpaint(model, schedule, img, m, rng));
    CHECK(known_region_equal(batch.samples[i], img, m));
    for (int j = 0; j < i; ++j) CHECK(region_mad(batch.samples[i], batch.samples[j], m, true) > 0.0);
  }
  const BatchResult single = inpaint_batch(model, schedule, img, m, 1, 500);
  CHECK(single.samples[0] == batch.samples[0]);
  CHECK_THROWS_AS(inpaint_batch(model, schedule, img, m, 0, 1), ConfigError);
}

TEST_CASE("exactly T model calls per sample with progress events") {
  const ImageTensor img = forge::test::random_image(3, 16, 16, 5);
  const Mask m = centre_hole(16, 16, 0.25);
  test::OraclePredictor model(img);
  const NoiseSchedule schedule(1000);
  Rng rng(6);
  SampleStats stats;
  int events = 0, last_done = 0;
  inpaint(model, schedule, img, m, rng, {}, &stats, [&](int sample, int done, int total) {
    CHECK(sample == 3);
    CHECK(total == 1000);
    CHECK(done == last_done + 1);
    last_done = done;
    ++events;
  }, 3);
  CHECK(model.calls == 1000);
  CHECK(stats.model_calls == 1000);
  CHECK(events == 1000);
  CHECK(stats.seconds >= 0.0);
}

TEST_CASE("oracle model converges inside the hole") {
  const ImageTensor truth = crop(load_image(forge::test::fixture("texture.png")), 32, 16, 64);
  const Mask m = centre_hole(64, 64, 0.25);
  const test::OraclePredictor model(truth);
  const NoiseSchedule schedule(1000);
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    SamplerOptions raw;
    raw.composite = false;
    const ImageTensor out = inpaint(model, schedule, truth, m, rng, raw);
    const double mae = test::hole_mae(out, truth, m);
    MESSAGE("seed " << seed << " hole MAE " << mae);
    CHECK(mae < 0.05);
  }
}

TEST_CASE("odd sizes are reflect-padded and cropped back") {
  const ImageTensor img = forge::test::random_image(3, 21, 30, 7);
  Mask m(21, 30);
  paint_rect(m, Rect{3, 3, 5, 5});
  const RecordingPredictor model;
  const NoiseSchedule schedule(20);
  Rng rng(8);
  SamplerOptions opts;
  opts.clamp = false;
  const ImageTensor out = inpaint(model, schedule, img, m, rng, opts);
  CHECK(out.height() == 21);
  CHECK(out.width() == 30);
  CHECK(model.heights.front() == 24);
  CHECK(model.widths.front() == 32);
  CHECK(model.steps.size() == 20);
  CHECK(model.steps.front() == 20);
  CHECK(model.steps.back() == 1);
  // The model sees y with the hole zeroed.
  CHECK(model.last_y.at(0, 4, 4) == 0.0f);
  CHECK(model.last_y.at(0, 0, 0) == img.at(0, 0, 0));
  CHECK(model.last_mask.at(4, 4) == 1);
  // The last step returns x0_hat itself, so the unclamped hole holds 5.
  CHECK(out.at(1, 5, 5) == doctest::Approx(5.0f));
  CHECK(known_region_equal(out, img, m));
}

TEST_CASE("clamping bounds every estimate") {
  const ImageTensor img = forge::test::random_image(3, 16, 16, 9);
  const Mask m = centre_hole(16, 16, 0.4);
  const RecordingPredictor model;
  const NoiseSchedule schedule(30);
  Rng rng(10);
  const ImageTensor out = inpaint(model, schedule, img, m, rng);
  CHECK(out.max_value() <= 1.0f);
  CHECK(out.min_value() >= -1.0f);
  CHECK(out.at(0, 8, 8) == doctest::Approx(1.0f));
}

TEST_CASE("composite off keeps model pixels outside the hole") {
  const ImageTensor img = forge::test::random_image(3, 16, 16, 11);
  const Mask m = centre_hole(16, 16, 0.25);
  const RecordingPredictor model;
  const NoiseSchedule schedule(10);
  Rng rng(12);
  SamplerOptions opts;
  opts.composite = false;
  const ImageTensor out = inpaint(model, schedule, img, m, rng, opts);
  CHECK(out.at(0, 0, 0) == doctest::Approx(1.0f));
}

TEST_CASE("per-step replacement keeps the known region on track") {
  const ImageTensor img = forge::test::random_image(3, 16, 16, 13);
  const Mask m = centre_hole(16, 16, 0.25);
  const test::EchoPredictor model(3);
  const NoiseSchedule schedule(100);
  Rng rng(14);
  SamplerOptions opts;
  opts.replace_each_step = true;
  opts.composite = false;
  const ImageTensor out = inpaint(model, schedule, img, m, rng, opts);
  // At the final step the known pixels are the input diffused to t = 0, i.e. the input.
  CHECK(known_region_equal(out, img, m));
}

TEST_CASE("errors") {
  const ImageTensor img = forge::test::random_image(3, 16, 16, 15);
  const NoiseSchedule schedule(1000);
  Rng rng(1);
  const test::EchoPredictor ten(10);
  CHECK_THROWS_AS(inpaint(ten, schedule, img, Mask(16, 16, 1), rng), ChannelMismatchError);
  const test::EchoPredictor three(3);
  CHECK_THROWS_AS(inpaint(three, schedule, img, Mask(16, 15, 1), rng), ShapeError);
  const NanPredictor nan(637);
  try {
    inpaint(nan, schedule, img, Mask(16, 16, 1), rng);
    FAIL("non-finite state accepted");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("637") != std::string::npos);
  }
}

TEST_CASE("material maps are inpainted jointly") {
  const MapStack maps = load_svbrdf(forge::test::fixture("material"));
  const test::OraclePredictor oracle(stack_maps(maps));
  const NoiseSchedule schedule(1000);
  CHECK(inpaint_svbrdf(oracle, schedule, maps, Mask(64, 64, 0), 1) == maps);

  const Mask m = centre_hole(64, 64, 0.2);
  SampleStats stats;
  const MapStack out = inpaint_svbrdf(oracle, schedule, maps, m, 2, {}, &stats);
  CHECK(stats.model_calls == 1000);
  for (int i = 0; i < 4; ++i) CHECK(known_region_equal(map_at(out, i), map_at(maps, i), m));
  CHECK(out.roughness.max_value() <= 1.0f);
  CHECK(out.roughness.min_value() >= -1.0f);
  const NormalStats before = normal_stats(maps.normals, 0.1, &m);
  const NormalStats after = normal_stats(out.normals, 0.1, &m);
  CHECK(before.fraction_outside == 0.0);
  CHECK(after.mean_deviation < 0.1);

  const test::EchoPredictor rgb(3);
  CHECK_THROWS_AS(inpaint_svbrdf(rgb, schedule, maps, m, 1), ChannelMismatchError);
}

TEST_CASE("trained-model adapter pads to the model multiple") {
  DenoiserConfig cfg;
  cfg.base_width = 8;
  cfg.depth = 3;
  const Denoiser<float> model(cfg, 1);
  const DenoiserPredictor predictor(model);
  CHECK(predictor.channels() == 3);
  CHECK(predictor.size_multiple() == 4);
  const ImageTensor img = forge::test::random_image(3, 18, 22, 16);
  Mask m(18, 22);
  paint_rect(m, Rect{5, 5, 6, 6});
  const NoiseSchedule schedule(20);
  Rng a(3), b(3);
  const ImageTensor out = inpaint(predictor, schedule, img, m, a);
  CHECK(out == inpaint(predictor, schedule, img, m, b));
  CHECK(out.all_finite());
  CHECK(known_region_equal(out, img, m));
}
