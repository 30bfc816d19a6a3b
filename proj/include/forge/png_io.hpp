#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "forge/image.hpp"

namespace forge {

/// Raw decoded PNG: interleaved samples, alpha already removed.
struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;  // 8 or 16
  bool had_alpha = false;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

/// Decodes an in-memory PNG. Palette and sub-8-bit grayscale are expanded to 8 bit.
DecodedPng decode_png(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Loads a PNG into [-1, 1]; alpha is dropped with a logged warning.
ImageTensor load_image(const std::filesystem::path& path);
ImageTensor image_from_png(std::span<const std::uint8_t> bytes);

/// Encodes with 1 or 3 channels kept as-is; other channel counts are rejected.
std::vector<std::uint8_t> encode_png(const ImageTensor& img, int bit_depth = 8);
void save_image(const ImageTensor& img, const std::filesystem::path& path, int bit_depth = 8);

/// Pixel is a hole when its luminance exceeds threshold * maxval.
Mask load_mask(const std::filesystem::path& path, double threshold = 0.5);
Mask mask_from_png(std::span<const std::uint8_t> bytes, double threshold = 0.5);
std::vector<std::uint8_t> encode_mask_png(const Mask& mask);
void save_mask(const Mask& mask, const std::filesystem::path& path);

}  // namespace forge
