#include "forge/svbrdf.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <string>

#include "forge/errors.hpp"
#include "forge/png_io.hpp"

namespace forge {
namespace {

void copy_channels(const ImageTensor& src, ImageTensor& dst, int dst_offset) {
  for (int c = 0; c < src.channels(); ++c) {
    const auto from = src.plane(c);
    auto to = dst.plane(dst_offset + c);
    std::copy(from.begin(), from.end(), to.begin());
  }
}

ImageTensor extract_channels(const ImageTensor& src, int offset, int count) {
  ImageTensor out(count, src.height(), src.width());
  for (int c = 0; c < count; ++c) {
    const auto from = src.plane(offset + c);
    std::copy(from.begin(), from.end(), out.plane(c).begin());
  }
  return out;
}

ImageTensor to_channels(ImageTensor img, int wanted, std::string_view name) {
  if (img.channels() == wanted) return img;
  ImageTensor out(wanted, img.height(), img.width());
  if (img.channels() == 1) {
    for (int c = 0; c < wanted; ++c) copy_channels(img, out, c);
    return out;
  }
  if (wanted == 1) {
    spdlog::warn("{} map has {} channels; averaging to one", name, img.channels());
    auto dst = out.plane(0);
    for (int c = 0; c < img.channels(); ++c) {
      const auto src = img.plane(c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] / static_cast<float>(img.channels());
    }
    return out;
  }
  throw FormatError(std::string(name) + " map must have " + std::to_string(wanted) + " channels");
}

}  // namespace

ImageTensor stack_maps(const MapStack& maps) {
  const int h = maps.diffuse.height();
  const int w = maps.diffuse.width();
  for (int i = 0; i < 4; ++i) {
    const ImageTensor& m = map_at(maps, i);
    if (m.channels() != kMapChannels[i]) {
      throw ShapeError(std::string(kMapNames[i]) + " map must have " + std::to_string(kMapChannels[i]) +
                       " channels, got " + std::to_string(m.channels()));
    }
    if (m.height() != h || m.width() != w) {
      throw ShapeError(std::string(kMapNames[i]) + " map size differs from diffuse map");
    }
  }
  ImageTensor out(kStackedChannels, h, w);
  for (int i = 0; i < 4; ++i) copy_channels(map_at(maps, i), out, kMapOffsets[i]);
  return out;
}

MapStack unstack_maps(const ImageTensor& stacked) {
  if (stacked.channels() != kStackedChannels) {
    throw ShapeError("stacked material must have 10 channels, got " + std::to_string(stacked.channels()));
  }
  return MapStack{extract_channels(stacked, kMapOffsets[0], 3), extract_channels(stacked, kMapOffsets[1], 3),
                  extract_channels(stacked, kMapOffsets[2], 1), extract_channels(stacked, kMapOffsets[3], 3)};
}

const ImageTensor& map_at(const MapStack& maps, int index) {
  switch (index) {
    case 0: return maps.diffuse;
    case 1: return maps.normals;
    case 2: return maps.roughness;
    case 3: return maps.specular;
    default: throw std::out_of_range("map index");
  }
}

MapStack load_svbrdf(const std::filesystem::path& dir) {
  MapStack maps;
  ImageTensor* slots[4] = {&maps.diffuse, &maps.normals, &maps.roughness, &maps.specular};
  for (int i = 0; i < 4; ++i) {
    const auto path = dir / (std::string(kMapNames[i]) + ".png");
    *slots[i] = to_channels(load_image(path), kMapChannels[i], kMapNames[i]);
  }
  stack_maps(maps);  // validates sizes
  const NormalStats stats = normal_stats(maps.normals);
  if (stats.mean_deviation > 0.05) {
    spdlog::warn("normal map of {} deviates from unit length (mean {:.3f})", dir.string(), stats.mean_deviation);
  }
  return maps;
}

void save_svbrdf(const MapStack& maps, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (int i = 0; i < 4; ++i) save_image(map_at(maps, i), dir / (std::string(kMapNames[i]) + ".png"));
}

NormalStats normal_stats(const ImageTensor& normals, double tolerance, const Mask* region) {
  if (normals.channels() != 3) throw ShapeError("normal map must have 3 channels");
  if (region != nullptr) assert_same_shape(normals, *region);
  NormalStats stats;
  std::size_t count = 0;
  std::size_t outside = 0;
  for (int y = 0; y < normals.height(); ++y) {
    for (int x = 0; x < normals.width(); ++x) {
      if (region != nullptr && !region->at(y, x)) continue;
      double n2 = 0.0;
      for (int c = 0; c < 3; ++c) n2 += static_cast<double>(normals.at(c, y, x)) * normals.at(c, y, x);
      const double dev = std::abs(std::sqrt(n2) - 1.0);
      stats.mean_deviation += dev;
      stats.max_deviation = std::max(stats.max_deviation, dev);
      if (dev > tolerance) ++outside;
      ++count;
    }
  }
  if (count > 0) {
    stats.mean_deviation /= static_cast<double>(count);
    stats.fraction_outside = static_cast<double>(outside) / static_cast<double>(count);
  }
  return stats;
}

}  // namespace forge
