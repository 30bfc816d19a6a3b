#include "forge/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "forge/errors.hpp"

namespace forge {
namespace {

void check_dims(int channels, int height, int width) {
  if (channels < 1 || channels > ImageTensor::kMaxChannels) {
    throw ShapeError("channel count must be in [1, 16], got " + std::to_string(channels));
  }
  if (height < 1 || width < 1) {
    throw ShapeError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
}

std::string shape_str(int h, int w) { return std::to_string(h) + "x" + std::to_string(w); }

// Mirror index into [0, n) without repeating the edge sample; folds repeatedly for large offsets.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

int round_up(int v, int multiple) { return (v + multiple - 1) / multiple * multiple; }

void check_region(int x, int y, int width, int height, int full_w, int full_h) {
  if (width < 1 || height < 1 || x < 0 || y < 0 || x + width > full_w || y + height > full_h) {
    throw ShapeError("crop " + shape_str(height, width) + " at (" + std::to_string(x) + ", " +
                     std::to_string(y) + ") exceeds " + shape_str(full_h, full_w));
  }
}

}  // namespace

ImageTensor::ImageTensor(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  check_dims(channels, height, width);
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

ImageTensor::ImageTensor(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  check_dims(channels, height, width);
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw ShapeError("data length does not match C x H x W");
  }
}

bool ImageTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float ImageTensor::min_value() const { return *std::min_element(data_.begin(), data_.end()); }
float ImageTensor::max_value() const { return *std::max_element(data_.begin(), data_.end()); }

Mask::Mask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw ShapeError("mask dimensions must be positive");
  if (fill > 1) throw ShapeError("mask values must be 0 or 1");
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

Mask::Mask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 1 || width < 1) throw ShapeError("mask dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("mask data length does not match H x W");
  }
  if (std::any_of(data_.begin(), data_.end(), [](std::uint8_t v) { return v > 1; })) {
    throw ShapeError("mask values must be 0 or 1");
  }
}

std::size_t Mask::hole_count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

double Mask::hole_fraction() const {
  if (data_.empty()) return 0.0;
  return static_cast<double>(hole_count()) / static_cast<double>(data_.size());
}

void assert_same_shape(const ImageTensor& img, const Mask& mask) {
  if (img.height() != mask.height() || img.width() != mask.width()) {
    throw ShapeError("mask " + shape_str(mask.height(), mask.width()) + " does not match image " +
                     shape_str(img.height(), img.width()));
  }
}

void assert_same_shape(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("image shapes differ: " + std::to_string(a.channels()) + "x" +
                     shape_str(a.height(), a.width()) + " vs " + std::to_string(b.channels()) + "x" +
                     shape_str(b.height(), b.width()));
  }
}

void assert_same_shape(const Mask& a, const Mask& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("mask shapes differ: " + shape_str(a.height(), a.width()) + " vs " +
                     shape_str(b.height(), b.width()));
  }
}

ImageTensor crop_region(const ImageTensor& img, int x, int y, int width, int height) {
  check_region(x, y, width, height, img.width(), img.height());
  ImageTensor out(img.channels(), height, width);
  for (int c = 0; c < img.channels(); ++c) {
    for (int i = 0; i < height; ++i) {
      const float* src = img.plane(c).data() + static_cast<std::size_t>(y + i) * img.width() + x;
      std::copy(src, src + width, &out.at(c, i, 0));
    }
  }
  return out;
}

Mask crop_region(const Mask& mask, int x, int y, int width, int height) {
  check_region(x, y, width, height, mask.width(), mask.height());
  Mask out(height, width);
  for (int i = 0; i < height; ++i) {
    const std::uint8_t* src = mask.data().data() + static_cast<std::size_t>(y + i) * mask.width() + x;
    std::copy(src, src + width, &out.at(i, 0));
  }
  return out;
}

ImageTensor crop(const ImageTensor& img, int x, int y, int size) { return crop_region(img, x, y, size, size); }
Mask crop(const Mask& mask, int x, int y, int size) { return crop_region(mask, x, y, size, size); }

ImageTensor apply_mask(const ImageTensor& x0, const Mask& mask) {
  assert_same_shape(x0, mask);
  ImageTensor out = x0;
  const auto m = mask.data();
  for (int c = 0; c < out.channels(); ++c) {
    auto plane = out.plane(c);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      if (m[i]) plane[i] = 0.0f;
    }
  }
  return out;
}

ImageTensor composite(const ImageTensor& known, const ImageTensor& filled, const Mask& mask) {
  assert_same_shape(known, filled);
  assert_same_shape(known, mask);
  ImageTensor out = known;
  const auto m = mask.data();
  for (int c = 0; c < out.channels(); ++c) {
    auto dst = out.plane(c);
    const auto src = filled.plane(c);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (m[i]) dst[i] = src[i];
    }
  }
  return out;
}

Mask mask_union(const Mask& a, const Mask& b) {
  assert_same_shape(a, b);
  Mask out = a;
  auto d = out.data();
  const auto s = b.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<std::uint8_t>(d[i] | s[i]);
  return out;
}

ImageTensor pad_to_multiple(const ImageTensor& img, int multiple) {
  const int h = round_up(img.height(), multiple);
  const int w = round_up(img.width(), multiple);
  if (h == img.height() && w == img.width()) return img;
  ImageTensor out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      const int sy = reflect_index(y, img.height());
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, sy, reflect_index(x, img.width()));
    }
  }
  return out;
}

Mask pad_to_multiple(const Mask& mask, int multiple) {
  const int h = round_up(mask.height(), multiple);
  const int w = round_up(mask.width(), multiple);
  if (h == mask.height() && w == mask.width()) return mask;
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = reflect_index(y, mask.height());
    for (int x = 0; x < w; ++x) out.at(y, x) = mask.at(sy, reflect_index(x, mask.width()));
  }
  return out;
}

std::uint32_t denormalize_level(float value, std::uint32_t max_level) {
  const double scaled = (static_cast<double>(value) + 1.0) * 0.5 * max_level;
  const double rounded = std::nearbyint(std::clamp(scaled, 0.0, static_cast<double>(max_level)));
  return static_cast<std::uint32_t>(rounded);
}

ImageTensor mask_as_image(const Mask& mask) {
  ImageTensor out(1, mask.height(), mask.width());
  auto dst = out.data();
  const auto src = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
  return out;
}

}  // namespace forge
