#include "fishdreamer/polar_attention.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "fishdreamer/errors.hpp"
#include "fishdreamer/ops.hpp"

namespace fd {

std::string to_string(PcaDirection d) {
  switch (d) {
    case PcaDirection::S2P: return "S2P";
    case PcaDirection::P2S: return "P2S";
    case PcaDirection::Bi: return "Bi";
  }
  return "?";
}

PcaDirection parse_direction(std::string_view s) {
  std::string u(s);
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  if (u == "S2P") return PcaDirection::S2P;
  if (u == "P2S") return PcaDirection::P2S;
  if (u == "BI") return PcaDirection::Bi;
  throw ContractError("unknown pca direction '" + std::string(s) + "' (expected S2P, P2S or Bi)");
}

double PolarMaskSet::token_radius(std::size_t token) const {
  const double x = static_cast<double>(token % width) + 0.5;
  const double y = static_cast<double>(token / width) + 0.5;
  return std::hypot(x - center.x, y - center.y);
}

std::vector<std::uint8_t> PolarMaskSet::mask(std::size_t i) const {
  std::vector<std::uint8_t> m(ring.size(), 0);
  for (std::size_t t = 0; t < ring.size(); ++t) m[t] = ring[t] == static_cast<int>(i);
  return m;
}

std::size_t PolarMaskSet::valid_count() const {
  return static_cast<std::size_t>(std::count_if(ring.begin(), ring.end(), [](int r) { return r >= 0; }));
}

PolarMaskSet generate_polar_masks(std::size_t height, std::size_t width, std::size_t n_mask,
                                  double r_max) {
  if (n_mask == 0) throw ContractError("polar masks: n_mask must be at least 1");
  if (!(r_max > 0.0)) throw ContractError("polar masks: r_max must be positive");
  if (n_mask > height * width) {
    throw ContractError("polar masks: " + std::to_string(n_mask) + " masks for only " +
                        std::to_string(height * width) + " tokens");
  }
  PolarMaskSet s;
  s.height = height;
  s.width = width;
  s.n_mask = n_mask;
  s.center = {static_cast<double>(width) / 2.0, static_cast<double>(height) / 2.0};
  s.radii.resize(n_mask + 1);
  for (std::size_t i = 0; i <= n_mask; ++i) s.radii[i] = r_max * static_cast<double>(i) / n_mask;
  s.ring.assign(height * width, -1);
  s.ring_tokens.resize(n_mask);
  for (std::size_t t = 0; t < height * width; ++t) {
    const double r = s.token_radius(t);
    for (std::size_t i = 1; i <= n_mask; ++i) {
      if (r <= s.radii[i]) {
        s.ring[t] = static_cast<int>(i - 1);
        s.ring_tokens[i - 1].push_back(static_cast<std::int64_t>(t));
        break;
      }
    }
  }
  return s;
}

namespace {

// Updated [H*W, C] map of the receiving branch.
Tensor attend_rings(const Tensor& target, const Tensor& source, const Tensor& lt_w,
                    const Tensor& lt_b, const Tensor& ls_w, const Tensor& ls_b,
                    const PcaBranchParams& p, const PolarMaskSet& masks) {
  const std::size_t tokens = target.dim(0);
  std::vector<std::int64_t> valid;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // per non-empty ring
  for (const auto& ring : masks.ring_tokens) {
    if (ring.empty()) continue;
    spans.emplace_back(valid.size(), ring.size());
    valid.insert(valid.end(), ring.begin(), ring.end());
  }
  if (valid.empty()) return target;

  auto valid_idx = ops::make_row_index(valid);
  const Tensor t_star = ops::linear(ops::gather_rows(target, valid_idx), lt_w, lt_b);
  const Tensor s_star = ops::linear(ops::gather_rows(source, valid_idx), ls_w, ls_b);

  std::vector<Tensor> rings;
  for (auto [start, count] : spans) {
    std::vector<std::int64_t> local(count);
    for (std::size_t k = 0; k < count; ++k) local[k] = static_cast<std::int64_t>(start + k);
    auto idx = ops::make_row_index(std::move(local));
    const Tensor q = ops::gather_rows(t_star, idx);
    const Tensor kv = ops::gather_rows(s_star, idx);
    const Tensor attended = multi_head_attention(q, kv, p.attn);
    const Tensor bn = ops::linear(ops::gelu(ops::linear(attended, p.bn1_w, p.bn1_b)), p.bn2_w,
                                  p.bn2_b);
    rings.push_back(ops::add(q, bn));
  }
  const Tensor updated = rings.size() == 1 ? rings[0] : ops::concat(rings, 0);

  // Scatter back: row p reads the updated row when p is valid, else itself.
  std::vector<std::int64_t> scatter(tokens);
  for (std::size_t p = 0; p < tokens; ++p) scatter[p] = static_cast<std::int64_t>(p);
  for (std::size_t k = 0; k < valid.size(); ++k) {
    scatter[static_cast<std::size_t>(valid[k])] = static_cast<std::int64_t>(tokens + k);
  }
  return ops::gather_rows(ops::concat({target, updated}, 0),
                          ops::make_row_index(std::move(scatter)));
}

}  // namespace

PcaOutput pca_forward(const Tensor& z_s, const Tensor& z_c, const PolarMaskSet& masks,
                      const PcaParams& params) {
  if (z_s.shape() != z_c.shape() || z_s.rank() != 3) {
    throw DimensionError("pca: branch maps " + shape_str(z_s.shape()) + " and " +
                         shape_str(z_c.shape()) + " differ");
  }
  if (z_s.dim(0) != masks.height || z_s.dim(1) != masks.width) {
    throw DimensionError("pca: map " + shape_str(z_s.shape()) + " vs mask grid " +
                         std::to_string(masks.height) + "x" + std::to_string(masks.width));
  }
  const Shape shape = z_s.shape();
  const Shape flat{shape[0] * shape[1], shape[2]};
  const Tensor s = ops::reshape(z_s, flat);
  const Tensor c = ops::reshape(z_c, flat);

  PcaOutput out{z_s, z_c};
  const auto dir = params.direction;
  if (dir == PcaDirection::P2S || dir == PcaDirection::Bi) {
    const auto& p = params.p2s;
    out.z_s = ops::reshape(attend_rings(s, c, p.ls_w, p.ls_b, p.lc_w, p.lc_b, p, masks), shape);
  }
  if (dir == PcaDirection::S2P || dir == PcaDirection::Bi) {
    const auto& p = params.s2p;
    out.z_c = ops::reshape(attend_rings(c, s, p.lc_w, p.lc_b, p.ls_w, p.ls_b, p, masks), shape);
  }
  return out;
}

}  // namespace fd
