#pragma once

#include <filesystem>

#include "fishdreamer/image.hpp"

namespace fd {

/// 8-bit PNG with 1 (gray) or 3 (RGB) channels, chosen from the file's color
/// type. Alpha, if any, is dropped.
Image read_png(const std::filesystem::path& path);
/// Writes 1-channel images as gray and 3-channel images as RGB.
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace fd
