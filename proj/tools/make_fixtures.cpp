// Writes the deterministic test fixtures: a stationary 256x256 texture and a 64x64 material.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>

#include "forge/png_io.hpp"
#include "forge/svbrdf.hpp"

namespace fs = std::filesystem;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

float to_signed(double unit) { return static_cast<float>(2.0 * unit - 1.0); }

// Woven pattern with a 32 px period on both axes; values stay inside [0.1, 0.9].
forge::ImageTensor texture(int size) {
  forge::ImageTensor img(3, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = kTwoPi * x / 32.0;
      const double v = kTwoPi * y / 32.0;
      img.at(0, y, x) = to_signed(0.5 + 0.22 * std::sin(u) + 0.16 * std::cos(v));
      img.at(1, y, x) = to_signed(0.5 + 0.2 * std::sin(u + v) + 0.1 * std::cos(2.0 * u));
      img.at(2, y, x) = to_signed(0.45 + 0.18 * std::cos(u - v) + 0.12 * std::sin(v));
    }
  }
  return img;
}

// Tiled bumps: normals come from the analytic gradient of the height field.
forge::MapStack material(int size) {
  forge::MapStack m{forge::ImageTensor(3, size, size), forge::ImageTensor(3, size, size),
                    forge::ImageTensor(1, size, size), forge::ImageTensor(3, size, size)};
  const double k = kTwoPi / 16.0;
  const double amp = 1.5;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double h = std::sin(k * x) * std::sin(k * y);
      const double dx = amp * k * std::cos(k * x) * std::sin(k * y);
      const double dy = amp * k * std::sin(k * x) * std::cos(k * y);
      const double len = std::sqrt(dx * dx + dy * dy + 1.0);
      m.normals.at(0, y, x) = static_cast<float>(-dx / len);
      m.normals.at(1, y, x) = static_cast<float>(-dy / len);
      m.normals.at(2, y, x) = static_cast<float>(1.0 / len);
      m.diffuse.at(0, y, x) = to_signed(0.55 + 0.2 * h);
      m.diffuse.at(1, y, x) = to_signed(0.4 + 0.15 * h);
      m.diffuse.at(2, y, x) = to_signed(0.3 + 0.1 * h);
      m.roughness.at(0, y, x) = to_signed(0.6 - 0.25 * h);
      for (int c = 0; c < 3; ++c) m.specular.at(c, y, x) = to_signed(0.2 + 0.1 * h);
    }
  }
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("tests/fixtures");
  fs::create_directories(out);
  forge::save_image(texture(256), out / "texture.png");
  forge::save_svbrdf(material(64), out / "material");
  std::cout << "wrote " << (out / "texture.png").string() << " and " << (out / "material").string() << "\n";
  return 0;
}
