#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fishdreamer/image.hpp"

namespace fd {

/// Class ids of the synthetic scenes.
enum SyntheticClass : std::uint8_t { kSky = 0, kRoad = 1, kDisc = 2, kBox = 3 };
inline constexpr std::size_t kSyntheticClasses = 4;

struct SyntheticScene {
  Image rgb;    // 3 channels
  Image label;  // 1 channel, SyntheticClass ids
};

/// Street-like toy scenes: a sky band over a road band split by a random
/// horizon, plus large discs, rings and boxes. Every class has a fixed color.
std::vector<SyntheticScene> make_scenes(std::size_t count, std::size_t width, std::size_t height,
                                        std::uint64_t seed);

}  // namespace fd
