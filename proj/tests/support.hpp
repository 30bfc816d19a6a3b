#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "forge/image.hpp"
#include "forge/rng.hpp"

namespace forge::test {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(FORGE_FIXTURE_DIR) / name;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "forge") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ImageTensor random_image(int c, int h, int w, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Rng rng(seed);
  ImageTensor img(c, h, w);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

inline Mask random_mask(int h, int w, std::uint64_t seed, double p = 0.5) {
  Rng rng(seed);
  Mask m(h, w);
  for (auto& v : m.data()) v = rng.bernoulli(p) ? 1 : 0;
  return m;
}

/// Image whose 8-bit quantization is exact: every value is a level of 255.
inline ImageTensor random_levels(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageTensor img(c, h, w);
  for (float& v : img.data()) v = normalize_level(static_cast<std::uint32_t>(rng.uniform_int(0, 255)), 255);
  return img;
}

}  // namespace forge::test
