#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace forge {

/// Multi-channel float image stored planar (C x H x W, row-major inside a plane).
///
/// Pixel values live in [-1, 1] by convention: 8/16-bit sources are mapped
/// linearly from [0, maxval]. The same type carries clean images, noisy
/// diffusion states and masked observations.
class ImageTensor {
 public:
  static constexpr int kMaxChannels = 16;

  ImageTensor() = default;
  ImageTensor(int channels, int height, int width, float fill = 0.0f);
  ImageTensor(int channels, int height, int width, std::vector<float> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::span<float> plane(int c) { return std::span<float>(data_).subspan(c * plane_size(), plane_size()); }
  std::span<const float> plane(int c) const {
    return std::span<const float>(data_).subspan(c * plane_size(), plane_size());
  }

  bool same_shape(const ImageTensor& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const;
  float min_value() const;
  float max_value() const;

  friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Binary hole map: 1 = unknown (to inpaint), 0 = known.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);
  Mask(int height, int width, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<std::uint8_t> data() { return data_; }
  std::span<const std::uint8_t> data() const { return data_; }

  /// Mean of the mask, i.e. fraction of pixels that are holes.
  double hole_fraction() const;
  std::size_t hole_count() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Throws ShapeError unless the mask covers the image plane exactly.
void assert_same_shape(const ImageTensor& img, const Mask& mask);
void assert_same_shape(const ImageTensor& a, const ImageTensor& b);
void assert_same_shape(const Mask& a, const Mask& b);

/// size x size window whose top-left corner is (x, y). Throws ShapeError when out of bounds.
ImageTensor crop(const ImageTensor& img, int x, int y, int size);
Mask crop(const Mask& mask, int x, int y, int size);

/// y = x0 * (1 - M), mask broadcast over channels.
ImageTensor apply_mask(const ImageTensor& x0, const Mask& mask);

/// out = known * (1 - M) + filled * M.
ImageTensor composite(const ImageTensor& known, const ImageTensor& filled, const Mask& mask);

Mask mask_union(const Mask& a, const Mask& b);

/// Reflect-pads (no edge repeat) on the bottom/right so both sides become multiples of `multiple`.
ImageTensor pad_to_multiple(const ImageTensor& img, int multiple);
Mask pad_to_multiple(const Mask& mask, int multiple);
ImageTensor crop_region(const ImageTensor& img, int x, int y, int width, int height);
Mask crop_region(const Mask& mask, int x, int y, int width, int height);

/// Integer level -> [-1, 1].
inline float normalize_level(std::uint32_t level, std::uint32_t max_level) {
  return static_cast<float>(2.0 * static_cast<double>(level) / static_cast<double>(max_level) - 1.0);
}

/// [-1, 1] -> nearest integer level, clamped to [0, max_level].
std::uint32_t denormalize_level(float value, std::uint32_t max_level);

/// [-1, 1] -> [0, 1].
inline double to_unit(float v) { return (static_cast<double>(v) + 1.0) * 0.5; }

/// Broadcasts the mask as a 1-channel tensor with values 0 / 1.
ImageTensor mask_as_image(const Mask& mask);

}  // namespace forge
