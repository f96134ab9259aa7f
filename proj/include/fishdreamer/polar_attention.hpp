#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fishdreamer/attention.hpp"
#include "fishdreamer/geometry.hpp"
#include "fishdreamer/tensor.hpp"

namespace fd {

/// S2P: segmentation features attend into the completion branch.
/// P2S: completion features attend into the segmentation branch.
enum class PcaDirection { S2P, P2S, Bi };

std::string to_string(PcaDirection d);
/// Accepts "S2P", "P2S", "Bi" (case-insensitive); throws ContractError.
PcaDirection parse_direction(std::string_view s);

/// Concentric equal-width annuli over a token grid. Token (x, y) sits at
/// (x + 0.5, y + 0.5); the rings are centered on (W / 2, H / 2).
struct PolarMaskSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t n_mask = 0;
  Point center;
  std::vector<double> radii;  // r_0 = 0 < r_1 < ... < r_n
  std::vector<int> ring;      // per token: ring index in [0, n_mask) or -1
  std::vector<std::vector<std::int64_t>> ring_tokens;

  double token_radius(std::size_t token) const;
  /// Binary map of ring i (0-based), row-major over the grid.
  std::vector<std::uint8_t> mask(std::size_t i) const;
  std::size_t valid_count() const;
};

/// Ring i (1-based) covers r_{i-1} < r <= r_i with r_i = i / n_mask * r_max;
/// the first ring includes the center. Tokens beyond r_max belong to no ring.
PolarMaskSet generate_polar_masks(std::size_t height, std::size_t width, std::size_t n_mask,
                                  double r_max);

/// One attention direction. The receiving branch supplies queries and the
/// residual; the other branch supplies keys and values.
struct PcaBranchParams {
  Tensor ls_w, ls_b;  // segmentation branch projection
  Tensor lc_w, lc_b;  // completion branch projection
  AttentionParams attn;  // P_Q, P_K, P_V; no output projection
  Tensor bn1_w, bn1_b, bn2_w, bn2_b;  // C -> C/2 -> C bottleneck
};

struct PcaParams {
  PcaDirection direction = PcaDirection::Bi;
  PcaBranchParams p2s;  // used by P2S and Bi
  PcaBranchParams s2p;  // used by S2P and Bi
};

struct PcaOutput {
  Tensor z_s;
  Tensor z_c;
};

/// z_s, z_c: [H, W, C] over the grid of `masks`. Within every ring the
/// receiving branch's projected tokens attend to the other branch's projected
/// tokens of the same ring; a branch that receives nothing is returned as is,
/// and tokens outside all rings keep their input values.
PcaOutput pca_forward(const Tensor& z_s, const Tensor& z_c, const PolarMaskSet& masks,
                      const PcaParams& params);

}  // namespace fd
