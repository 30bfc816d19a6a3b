#pragma once

#include <array>
#include <filesystem>
#include <string_view>

#include "forge/image.hpp"

namespace forge {

/// Four material maps sharing one H x W grid.
///
/// Stacked channel order is fixed: diffuse(3), normals(3), roughness(1), specular(3).
struct MapStack {
  ImageTensor diffuse;    // 3 channels
  ImageTensor normals;    // 3 channels, components in [-1, 1]
  ImageTensor roughness;  // 1 channel
  ImageTensor specular;   // 3 channels

  friend bool operator==(const MapStack&, const MapStack&) = default;
};

inline constexpr int kStackedChannels = 10;
inline constexpr std::array<std::string_view, 4> kMapNames{"diffuse", "normals", "roughness", "specular"};
inline constexpr std::array<int, 4> kMapChannels{3, 3, 1, 3};
inline constexpr std::array<int, 4> kMapOffsets{0, 3, 6, 7};

ImageTensor stack_maps(const MapStack& maps);
MapStack unstack_maps(const ImageTensor& stacked);

/// Per-map view by index in kMapNames order.
const ImageTensor& map_at(const MapStack& maps, int index);

/// Reads `<dir>/{diffuse,normals,roughness,specular}.png`. Gray specular is replicated
/// to 3 channels; multi-channel roughness is averaged to one.
MapStack load_svbrdf(const std::filesystem::path& dir);
void save_svbrdf(const MapStack& maps, const std::filesystem::path& dir);

struct NormalStats {
  double mean_deviation = 0.0;  // mean | ||n|| - 1 |
  double max_deviation = 0.0;
  double fraction_outside = 0.0;  // share of pixels deviating more than the tolerance
};

/// Unit-norm statistics of the normal map, optionally restricted to `region` pixels.
NormalStats normal_stats(const ImageTensor& normals, double tolerance = 0.05, const Mask* region = nullptr);

}  // namespace forge
