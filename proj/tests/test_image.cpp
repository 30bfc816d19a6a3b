#include <doctest.h>

#include <cmath>

#include "forge/errors.hpp"
#include "forge/png_io.hpp"
#include "forge/svbrdf.hpp"
#include "support.hpp"

using namespace forge;
using forge::test::TempDir;

namespace {

ImageTensor gray(int h, int w, std::uint32_t level, std::uint32_t max_level) {
  return ImageTensor(1, h, w, normalize_level(level, max_level));
}

}  // namespace

TEST_CASE("8-bit levels map linearly onto [-1, 1]") {
  CHECK(normalize_level(255, 255) == 1.0f);
  CHECK(normalize_level(0, 255) == -1.0f);
  CHECK(normalize_level(127, 255) == doctest::Approx(2.0 * 127 / 255 - 1.0).epsilon(1e-7));
  CHECK(normalize_level(127, 255) == doctest::Approx(-0.00392).epsilon(1e-3));

  for (std::uint32_t level : {0u, 127u, 255u}) {
    const auto bytes = encode_png(gray(2, 3, level, 255));
    const DecodedPng raw = decode_png(bytes);
    CHECK(raw.bit_depth == 8);
    CHECK(raw.samples[0] == level);
    const ImageTensor img = image_from_png(bytes);
    CHECK(img.channels() == 1);
    CHECK(img.at(0, 1, 2) == normalize_level(level, 255));
  }
}

TEST_CASE("16-bit maximum maps to 1") {
  const auto bytes = encode_png(gray(4, 4, 65535, 65535), 16);
  const DecodedPng raw = decode_png(bytes);
  CHECK(raw.bit_depth == 16);
  CHECK(raw.samples[5] == 65535);
  CHECK(image_from_png(bytes).at(0, 2, 3) == 1.0f);
  CHECK(image_from_png(encode_png(gray(1, 1, 0, 65535), 16)).at(0, 0, 0) == -1.0f);
}

TEST_CASE("normalization inverts within half a level") {
  for (std::uint32_t max : {255u, 65535u}) {
    for (std::uint32_t v = 0; v <= max; v += (max == 255 ? 1 : 97)) {
      const auto back = denormalize_level(normalize_level(v, max), max);
      CHECK(std::abs(static_cast<double>(back) - v) <= 0.5);
    }
  }
  CHECK(denormalize_level(3.0f, 255) == 255);
  CHECK(denormalize_level(-3.0f, 255) == 0);
}

TEST_CASE("8-bit save and load round-trips exactly") {
  TempDir dir;
  const ImageTensor fixture_img = load_image(forge::test::fixture("texture.png"));
  REQUIRE(fixture_img.channels() == 3);
  save_image(fixture_img, dir / "copy.png");
  CHECK(load_image(dir / "copy.png") == fixture_img);
  CHECK(read_file_bytes(dir / "copy.png") == encode_png(fixture_img));

  const ImageTensor levels = forge::test::random_levels(3, 17, 23, 4);
  save_image(levels, dir / "levels.png");
  CHECK(load_image(dir / "levels.png") == levels);
}

TEST_CASE("PNG errors") {
  TempDir dir;
  CHECK_THROWS_AS(load_image(dir / "missing.png"), IoError);
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK_THROWS_AS(image_from_png(junk), FormatError);
  auto bytes = encode_png(gray(8, 8, 10, 255));
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(image_from_png(bytes), FormatError);
  CHECK_THROWS_AS(encode_png(ImageTensor(2, 4, 4)), FormatError);
  CHECK_THROWS_AS(encode_png(ImageTensor(3, 4, 4), 12), FormatError);
}

TEST_CASE("mask thresholds") {
  const Mask white = mask_from_png(encode_png(gray(5, 6, 255, 255)));
  CHECK(white.hole_fraction() == 1.0);
  const Mask black = mask_from_png(encode_png(gray(5, 6, 0, 255)));
  CHECK(black.hole_fraction() == 0.0);
  CHECK(black.hole_count() == 0);

  const Mask checker(2, 2, std::vector<std::uint8_t>{1, 0, 0, 1});
  const Mask decoded = mask_from_png(encode_mask_png(checker));
  CHECK(decoded == checker);
  CHECK(decoded.hole_fraction() == 0.5);

  // Mid gray sits on either side of the threshold.
  const auto mid = encode_png(gray(2, 2, 128, 255));
  CHECK(mask_from_png(mid, 0.5).hole_fraction() == 1.0);
  CHECK(mask_from_png(mid, 0.6).hole_fraction() == 0.0);

  // RGB masks threshold on luminance.
  ImageTensor rgb(3, 1, 2, -1.0f);
  rgb.at(0, 0, 0) = rgb.at(1, 0, 0) = rgb.at(2, 0, 0) = 1.0f;
  rgb.at(2, 0, 1) = 1.0f;  // pure blue is dark
  const Mask lum = mask_from_png(encode_png(rgb));
  CHECK(lum.at(0, 0) == 1);
  CHECK(lum.at(0, 1) == 0);
}

TEST_CASE("shape assertions") {
  CHECK_NOTHROW(assert_same_shape(ImageTensor(3, 4, 5), Mask(4, 5)));
  CHECK_THROWS_AS(assert_same_shape(ImageTensor(3, 4, 5), Mask(5, 4)), ShapeError);
  CHECK_THROWS_AS(assert_same_shape(ImageTensor(3, 4, 5), ImageTensor(1, 4, 5)), ShapeError);
  CHECK_THROWS_AS(assert_same_shape(Mask(4, 5), Mask(4, 6)), ShapeError);
}

TEST_CASE("crop") {
  const ImageTensor img = forge::test::random_image(3, 40, 32, 11);
  CHECK(crop(img, 0, 0, 32) == crop_region(img, 0, 0, 32, 32));
  const ImageTensor square = forge::test::random_image(2, 24, 24, 12);
  CHECK(crop(square, 0, 0, 24) == square);

  const ImageTensor flat(3, 20, 20, 0.25f);
  CHECK(crop(flat, 2, 3, 10) == ImageTensor(3, 10, 10, 0.25f));

  const ImageTensor c = crop(img, 3, 5, 16);
  REQUIRE(c.channels() == 3);
  REQUIRE(c.height() == 16);
  Rng rng(99);
  for (int probe = 0; probe < 500; ++probe) {
    const int ch = static_cast<int>(rng.uniform_int(0, 2));
    const int i = static_cast<int>(rng.uniform_int(0, 15));
    const int j = static_cast<int>(rng.uniform_int(0, 15));
    CHECK(c.at(ch, i, j) == img.at(ch, 5 + i, 3 + j));
  }

  // Composition of offsets.
  CHECK(crop(crop(img, 4, 6, 20), 2, 3, 10) == crop(img, 6, 9, 10));

  CHECK_THROWS_AS(crop(img, 20, 0, 16), ShapeError);
  CHECK_THROWS_AS(crop(img, -1, 0, 8), ShapeError);
  CHECK_THROWS_AS(crop(img, 0, 30, 16), ShapeError);

  const Mask m = forge::test::random_mask(40, 32, 5);
  const Mask mc = crop(m, 3, 5, 16);
  CHECK(mc.at(7, 9) == m.at(12, 12));
}

TEST_CASE("apply_mask") {
  const ImageTensor x0 = forge::test::random_image(3, 12, 14, 21);
  CHECK(apply_mask(x0, Mask(12, 14, 0)) == x0);
  CHECK(apply_mask(x0, Mask(12, 14, 1)) == ImageTensor(3, 12, 14, 0.0f));

  const Mask m = forge::test::random_mask(12, 14, 22);
  const ImageTensor y = apply_mask(x0, m);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 14; ++j) {
        const float keep = 1.0f - m.at(i, j);
        CHECK(y.at(c, i, j) * static_cast<float>(m.at(i, j)) == 0.0f);
        CHECK(y.at(c, i, j) * keep == x0.at(c, i, j) * keep);
      }
    }
  }
  CHECK(apply_mask(y, m) == y);
  CHECK_THROWS_AS(apply_mask(x0, Mask(12, 13)), ShapeError);
}

TEST_CASE("composite and union") {
  const ImageTensor known = forge::test::random_image(3, 8, 8, 31);
  const ImageTensor filled = forge::test::random_image(3, 8, 8, 32);
  const Mask m = forge::test::random_mask(8, 8, 33);
  const ImageTensor out = composite(known, filled, m);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) CHECK(out.at(c, i, j) == (m.at(i, j) ? filled : known).at(c, i, j));
    }
  }
  const Mask a = forge::test::random_mask(8, 8, 34);
  const Mask u = mask_union(a, m);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) CHECK(u.at(i, j) == (a.at(i, j) | m.at(i, j)));
  }
}

TEST_CASE("reflect padding") {
  const ImageTensor img = forge::test::random_image(2, 10, 13, 41);
  const ImageTensor p = pad_to_multiple(img, 8);
  CHECK(p.height() == 16);
  CHECK(p.width() == 16);
  CHECK(crop_region(p, 0, 0, 13, 10) == img);
  // Reflection without repeating the edge row.
  CHECK(p.at(1, 10, 4) == img.at(1, 8, 4));
  CHECK(p.at(0, 3, 13) == img.at(0, 3, 11));
  CHECK(pad_to_multiple(crop_region(p, 0, 0, 16, 16), 8) == p);
  const Mask m = forge::test::random_mask(10, 13, 42);
  CHECK(crop_region(pad_to_multiple(m, 8), 0, 0, 13, 10) == m);
}

TEST_CASE("material stacking") {
  const MapStack maps{forge::test::random_image(3, 9, 7, 1), forge::test::random_image(3, 9, 7, 2),
                      forge::test::random_image(1, 9, 7, 3), forge::test::random_image(3, 9, 7, 4)};
  const ImageTensor stacked = stack_maps(maps);
  CHECK(stacked.channels() == 10);
  CHECK(kStackedChannels == 3 + 3 + 1 + 3);
  CHECK(unstack_maps(stacked) == maps);
  CHECK(stacked.at(6, 4, 4) == maps.roughness.at(0, 4, 4));
  CHECK(stacked.at(9, 1, 2) == maps.specular.at(2, 1, 2));

  const MapStack flat{ImageTensor(3, 4, 4, 0.1f), ImageTensor(3, 4, 4, 0.2f), ImageTensor(1, 4, 4, 0.3f),
                      ImageTensor(3, 4, 4, 0.4f)};
  const ImageTensor fs = stack_maps(flat);
  const float expect[10] = {0.1f, 0.1f, 0.1f, 0.2f, 0.2f, 0.2f, 0.3f, 0.4f, 0.4f, 0.4f};
  for (int c = 0; c < 10; ++c) {
    for (float v : fs.plane(c)) CHECK(v == expect[c]);
  }

  MapStack bad = maps;
  bad.roughness = ImageTensor(1, 9, 8);
  CHECK_THROWS_AS(stack_maps(bad), ShapeError);
  bad = maps;
  bad.normals = ImageTensor(1, 9, 7);
  CHECK_THROWS_AS(stack_maps(bad), ShapeError);
  CHECK_THROWS_AS(unstack_maps(ImageTensor(9, 4, 4)), ShapeError);
}

TEST_CASE("material directory round-trip") {
  const MapStack maps = load_svbrdf(forge::test::fixture("material"));
  CHECK(maps.diffuse.channels() == 3);
  CHECK(maps.roughness.channels() == 1);
  CHECK(maps.specular.channels() == 3);
  TempDir dir;
  save_svbrdf(maps, dir / "copy");
  CHECK(load_svbrdf(dir / "copy") == maps);

  const NormalStats stats = normal_stats(maps.normals);
  CHECK(stats.max_deviation < 0.05);
  CHECK(stats.fraction_outside == 0.0);
  const NormalStats flat = normal_stats(ImageTensor(3, 4, 4, 0.0f));
  CHECK(flat.mean_deviation == doctest::Approx(1.0));
  CHECK(flat.fraction_outside == 1.0);
}
