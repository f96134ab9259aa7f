#include "fishdreamer/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

namespace fd {

namespace {

constexpr std::array<std::array<int, 3>, kSyntheticClasses> kColors{{
    {90, 150, 230},   // sky
    {105, 105, 110},  // road
    {220, 70, 50},    // disc / ring
    {60, 175, 85},    // box
}};

void paint(SyntheticScene& s, std::size_t x, std::size_t y, std::uint8_t cls, int shade) {
  for (std::size_t c = 0; c < 3; ++c) {
    s.rgb.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(kColors[cls][c] + shade, 0, 255));
  }
  s.label.at(x, y) = cls;
}

}  // namespace

std::vector<SyntheticScene> make_scenes(std::size_t count, std::size_t width, std::size_t height,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double w = static_cast<double>(width);
  const double h = static_cast<double>(height);
  std::vector<SyntheticScene> scenes;
  for (std::size_t n = 0; n < count; ++n) {
    SyntheticScene s{Image(width, height, 3), Image(width, height, 1)};
    const double horizon = uniform(0.35, 0.65) * h;
    const double tilt = uniform(-0.25, 0.25);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double line = horizon + tilt * (static_cast<double>(x) - w / 2);
        if (static_cast<double>(y) < line) {
          paint(s, x, y, kSky, static_cast<int>(30.0 * y / h) - 10);
        } else {
          paint(s, x, y, kRoad, 0);
        }
      }
    }
    const int shapes = 2 + static_cast<int>(rng() % 2);
    for (int k = 0; k < shapes; ++k) {
      const int kind = static_cast<int>(rng() % 3);
      const double cx = uniform(0.3, 0.7) * w;
      const double cy = uniform(0.3, 0.7) * h;
      const double r = uniform(0.12, 0.22) * std::min(w, h);
      const double half_w = uniform(0.1, 0.25) * w;
      const double half_h = uniform(0.1, 0.25) * h;
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const double dx = static_cast<double>(x) - cx;
          const double dy = static_cast<double>(y) - cy;
          const double d = std::hypot(dx, dy);
          if (kind == 0 && d <= r) paint(s, x, y, kDisc, 0);
          if (kind == 1 && d <= r && d >= 0.55 * r) paint(s, x, y, kDisc, 0);
          if (kind == 2 && std::abs(dx) <= half_w && std::abs(dy) <= half_h) paint(s, x, y, kBox, 0);
        }
      }
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace fd
