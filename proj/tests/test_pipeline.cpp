#include <doctest.h>

#include <fstream>

#include "forge/checkpoint.hpp"
#include "forge/errors.hpp"
#include "forge/pipeline.hpp"
#include "forge/png_io.hpp"
#include "support.hpp"

using namespace forge;
using forge::test::TempDir;

namespace {

void write_small_checkpoint(const std::filesystem::path& path, int channels = 3) {
  DenoiserConfig cfg;
  cfg.image_channels = channels;
  cfg.base_width = 8;
  cfg.depth = 2;
  save_checkpoint(path, Denoiser<float>(cfg, 1), NoiseSchedule(10));
}

}  // namespace

TEST_CASE("sample names") {
  CHECK(sample_name(0) == "sample_000.png");
  CHECK(sample_name(12) == "sample_012.png");
  CHECK(sample_name(3, true) == "sample_003");
}

TEST_CASE("request validation") {
  SampleRequest req{"c.ckpt", "i.png", "m.png"};
  CHECK_NOTHROW(req.validate());
  req.num_samples = 0;
  CHECK_THROWS_AS(req.validate(), ConfigError);
  req = SampleRequest{"", "i.png", "m.png"};
  CHECK_THROWS_AS(req.validate(), ConfigError);
  const SamplerOptions o = SampleRequest{"c", "i", "m", 1, 0, false, true, true}.options();
  CHECK_FALSE(o.composite);
  CHECK(o.clamp);
  CHECK(o.replace_each_step);
}

TEST_CASE("sampling run writes samples and a manifest") {
  TempDir dir;
  write_small_checkpoint(dir / "m.ckpt");
  const ImageTensor img = forge::test::random_levels(3, 20, 18, 1);
  save_image(img, dir / "img.png");
  Mask m(20, 18);
  paint_rect(m, Rect{4, 4, 6, 6});
  save_mask(m, dir / "mask.png");

  SampleRequest req{dir / "m.ckpt", dir / "img.png", dir / "mask.png"};
  req.num_samples = 3;
  req.seed = 9;
  int events = 0;
  const SampleOutcome out = run_sampling(req, dir / "out", [&](int, int, int) { ++events; });
  CHECK(events == 30);
  REQUIRE(out.outputs.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(out.outputs[k].filename() == sample_name(k));
    const ImageTensor s = load_image(out.outputs[k]);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < 20; ++y) {
        for (int x = 0; x < 18; ++x) {
          if (!m.at(y, x)) REQUIRE(s.at(c, y, x) == img.at(c, y, x));
        }
      }
    }
  }
  std::ifstream in(dir / "out" / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  CHECK(manifest == out.manifest);
  CHECK(manifest["seeds"] == nlohmann::json({9, 10, 11}));
  CHECK(manifest["diffusion_steps"] == 10);
  CHECK(manifest["model_calls"] == 30);
  CHECK(manifest["outputs"].size() == 3);
  CHECK(manifest["hole_fraction"].get<double>() == doctest::Approx(36.0 / 360.0));
  CHECK(manifest.contains("timings"));

  // Same request, same files.
  run_sampling(req, dir / "again");
  CHECK(read_file_bytes(dir / "again" / "sample_001.png") == read_file_bytes(dir / "out" / "sample_001.png"));
}

TEST_CASE("sampling rejects mismatched inputs") {
  TempDir dir;
  write_small_checkpoint(dir / "m.ckpt");
  save_image(forge::test::random_levels(1, 16, 16, 2), dir / "gray.png");
  save_image(forge::test::random_levels(3, 16, 16, 3), dir / "rgb.png");
  save_mask(Mask(16, 16, 1), dir / "mask.png");
  save_mask(Mask(8, 8, 1), dir / "small.png");
  CHECK_THROWS_AS(run_sampling({dir / "m.ckpt", dir / "gray.png", dir / "mask.png"}, dir / "o1"), ChannelMismatchError);
  CHECK_THROWS_AS(run_sampling({dir / "m.ckpt", dir / "rgb.png", dir / "small.png"}, dir / "o2"), ShapeError);
  CHECK_THROWS_AS(run_sampling({dir / "none.ckpt", dir / "rgb.png", dir / "mask.png"}, dir / "o3"), IoError);
}

TEST_CASE("material sampling writes map directories") {
  TempDir dir;
  write_small_checkpoint(dir / "mat.ckpt", 10);
  Mask m(64, 64);
  paint_rect(m, Rect{20, 20, 16, 16});
  save_mask(m, dir / "mask.png");
  SampleRequest req{dir / "mat.ckpt", forge::test::fixture("material"), dir / "mask.png"};
  req.svbrdf = true;
  const SampleOutcome out = run_sampling(req, dir / "out");
  REQUIRE(out.outputs.size() == 1);
  const MapStack maps = load_svbrdf(out.outputs[0]);
  const MapStack src = load_svbrdf(forge::test::fixture("material"));
  CHECK(maps.diffuse.at(0, 2, 2) == src.diffuse.at(0, 2, 2));
  CHECK(maps.roughness.channels() == 1);
}

TEST_CASE("mask payloads") {
  const auto j = nlohmann::json::parse(R"({
    "width": 20, "height": 10,
    "rects": [{"x": 1, "y": 1, "width": 3, "height": 2}],
    "strokes": [{"points": [[10, 5], {"x": 14, "y": 5}], "width": 3}],
    "runs": [[190, 5]]
  })");
  const MaskPayload p = mask_payload_from_json(j);
  CHECK(p.rects.size() == 1);
  CHECK(p.strokes[0].points[1].x == 14.0);
  const Mask m = rasterize_payload(p);
  CHECK(m.at(1, 1) == 1);
  CHECK(m.at(2, 3) == 1);
  CHECK(m.at(3, 1) == 0);
  CHECK(m.at(5, 12) == 1);
  CHECK(m.at(9, 10) == 1);
  CHECK(m.at(9, 14) == 1);
  CHECK(m.at(9, 15) == 0);
  CHECK(mask_payload_from_json(to_json(p)).strokes[0].width == 3.0);
  CHECK(rasterize_payload(mask_payload_from_json(to_json(p))) == m);

  // Runs reproduce any mask exactly.
  const Mask r = forge::test::random_mask(13, 17, 5);
  MaskPayload runs{17, 13, {}, {}, {}};
  runs.runs = mask_runs(r);
  CHECK(rasterize_payload(runs) == r);
  CHECK(mask_runs(Mask(4, 4)).empty());

  MaskPayload bad{10, 10, {}, {}, {}};
  bad.rects.push_back({8, 8, 5, 5});
  CHECK_THROWS_AS(rasterize_payload(bad), ShapeError);
  bad = MaskPayload{10, 10, {}, {}, {}};
  bad.runs.push_back({95, 10});
  CHECK_THROWS_AS(rasterize_payload(bad), ShapeError);
  bad = MaskPayload{10, 10, {}, {}, {}};
  bad.strokes.push_back({{{3, 3}, {12, 3}}, 2.0});
  CHECK_THROWS_AS(rasterize_payload(bad), ShapeError);
  CHECK_THROWS_AS(mask_payload_from_json({{"width", 10}}), ConfigError);
  CHECK_THROWS_AS(mask_payload_from_json({{"width", 0}, {"height", 4}}), ShapeError);
}

TEST_CASE("atomic text writes") {
  TempDir dir;
  write_text_atomic(dir / "a.txt", "one");
  write_text_atomic(dir / "a.txt", "two");
  std::ifstream in(dir / "a.txt");
  std::string s;
  in >> s;
  CHECK(s == "two");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++entries;
  CHECK(entries == 1);
}
