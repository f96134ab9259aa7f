#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fishdreamer/model.hpp"

namespace fd {

/// Little-endian layout: "FDW1", u32 tensor count, then per tensor a u16 name
/// length, the UTF-8 name, u8 rank, rank x u32 dims and the raw f32 values.
std::vector<std::uint8_t> serialize_weights(const ModelWeights& w);

/// With a configuration, names outside its layout are a FormatError and a
/// well-formed file that misses tensors or has wrong shapes is a
/// StructuralError. FormatErrors carry the byte offset where parsing stopped.
ModelWeights deserialize_weights(std::span<const std::uint8_t> bytes,
                                 const DreamerConfig* cfg = nullptr);

void save_weights(const ModelWeights& w, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path, const DreamerConfig* cfg = nullptr);

}  // namespace fd
