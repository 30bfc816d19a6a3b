#include "forge/png_io.hpp"

#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "forge/errors.hpp"

namespace forge {
namespace {

struct ReadCursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + length > cursor->size) {
    png_error(png, "unexpected end of PNG data");
  }
  std::memcpy(out, cursor->data + cursor->offset, length);
  cursor->offset += length;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

void warn_quiet(png_structp, png_const_charp) {}

std::uint32_t max_level(int bit_depth) { return bit_depth == 16 ? 65535u : 255u; }

ImageTensor to_tensor(const DecodedPng& png) {
  ImageTensor img(png.channels, png.height, png.width);
  const std::uint32_t maxval = max_level(png.bit_depth);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * png.width + x) * png.channels;
      for (int c = 0; c < png.channels; ++c) img.at(c, y, x) = normalize_level(png.samples[base + c], maxval);
    }
  }
  return img;
}

Mask to_mask(const DecodedPng& png, double threshold) {
  Mask mask(png.height, png.width);
  const double cutoff = threshold * max_level(png.bit_depth);
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * png.width + x) * png.channels;
      double luminance = png.samples[base];
      if (png.channels == 3) {
        luminance = 0.299 * png.samples[base] + 0.587 * png.samples[base + 1] + 0.114 * png.samples[base + 2];
      }
      mask.at(y, x) = luminance > cutoff ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace

DecodedPng decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw FormatError("not a PNG file");
  }
  DecodedPng result;
  std::vector<png_byte> raw;
  std::vector<png_bytep> rows;
  ReadCursor cursor{bytes.data(), bytes.size(), 0};

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warn_quiet);
  if (png == nullptr) throw FormatError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt or unsupported PNG data");
  }
  png_set_read_fn(png, &cursor, read_from_memory);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);  // native little-endian 16-bit samples
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t row_bytes = png_get_rowbytes(png, info);

  raw.resize(row_bytes * static_cast<std::size_t>(height));
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + row_bytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (out_depth != 8 && out_depth != 16) throw FormatError("unsupported PNG bit depth");
  const bool has_alpha = channels == 2 || channels == 4;
  const int kept = has_alpha ? channels - 1 : channels;

  result.width = width;
  result.height = height;
  result.channels = kept;
  result.bit_depth = out_depth;
  result.had_alpha = has_alpha;
  result.samples.resize(static_cast<std::size_t>(width) * height * kept);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < kept; ++c) {
        const std::size_t src = static_cast<std::size_t>(x) * channels + c;
        std::uint16_t v;
        if (out_depth == 16) {
          std::memcpy(&v, rows[y] + 2 * src, 2);
        } else {
          v = rows[y][src];
        }
        result.samples[(static_cast<std::size_t>(y) * width + x) * kept + c] = v;
      }
    }
  }
  return result;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ImageTensor image_from_png(std::span<const std::uint8_t> bytes) {
  const DecodedPng png = decode_png(bytes);
  if (png.had_alpha) spdlog::warn("PNG alpha channel dropped");
  return to_tensor(png);
}

ImageTensor load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return image_from_png(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw FormatError("PNG bit depth must be 8 or 16");
  if (img.channels() != 1 && img.channels() != 3) {
    throw FormatError("PNG export supports 1 or 3 channels, got " + std::to_string(img.channels()));
  }
  const int channels = img.channels();
  const std::uint32_t maxval = max_level(bit_depth);
  const std::size_t bytes_per_sample = bit_depth / 8;
  const std::size_t row_bytes = static_cast<std::size_t>(img.width()) * channels * bytes_per_sample;
  std::vector<png_byte> raw(row_bytes * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::uint32_t level = denormalize_level(img.at(c, y, x), maxval);
        const std::size_t pos = y * row_bytes + (static_cast<std::size_t>(x) * channels + c) * bytes_per_sample;
        if (bit_depth == 16) {
          raw[pos] = static_cast<png_byte>(level >> 8);  // PNG stores big-endian
          raw[pos + 1] = static_cast<png_byte>(level & 0xff);
        } else {
          raw[pos] = static_cast<png_byte>(level);
        }
      }
    }
  }

  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows(img.height());
  for (int y = 0; y < img.height(); ++y) rows[y] = raw.data() + y * row_bytes;

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, warn_quiet);
  if (png == nullptr) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encoding failed");
  }
  png_set_write_fn(png, &out, write_to_vector, flush_noop);
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void save_image(const ImageTensor& img, const std::filesystem::path& path, int bit_depth) {
  write_file_bytes(path, encode_png(img, bit_depth));
}

Mask mask_from_png(std::span<const std::uint8_t> bytes, double threshold) {
  return to_mask(decode_png(bytes), threshold);
}

Mask load_mask(const std::filesystem::path& path, double threshold) {
  const auto bytes = read_file_bytes(path);
  try {
    return mask_from_png(bytes, threshold);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_mask_png(const Mask& mask) {
  ImageTensor img(1, mask.height(), mask.width());
  auto dst = img.data();
  const auto src = mask.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 1.0f : -1.0f;
  return encode_png(img, 8);
}

void save_mask(const Mask& mask, const std::filesystem::path& path) { write_file_bytes(path, encode_mask_png(mask)); }

}  // namespace forge
