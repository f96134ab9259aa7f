#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fd {

/// Interleaved 8-bit raster, row-major, `channels` values per pixel.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool same_size(const Image& o) const { return width == o.width && height == o.height; }
  bool operator==(const Image&) const = default;
};

}  // namespace fd
