#include "fishdreamer/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fishdreamer/attention.hpp"
#include "fishdreamer/errors.hpp"

namespace fd {

namespace {

constexpr std::array<std::size_t, 3> kPoolSizes{1, 2, 4};
constexpr std::size_t kDownsample = 8;  // three 2x merges

std::string stage_prefix(std::size_t i) { return "stage" + std::to_string(i + 1); }

}  // namespace

void DreamerConfig::validate() const {
  auto fail = [](const std::string& m) { throw ContractError("config: " + m); };
  if (patch == 0 || height == 0 || width == 0) fail("zero-sized input or patch");
  if (height % (patch * kDownsample) != 0 || width % (patch * kDownsample) != 0) {
    fail("input " + std::to_string(height) + "x" + std::to_string(width) +
         " must be divisible by patch*8 = " + std::to_string(patch * kDownsample));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (widths[i] == 0 || heads[i] == 0 || depths[i] == 0) fail("zero width, depth or heads");
    if (widths[i] % heads[i] != 0) {
      fail("stage " + std::to_string(i + 1) + " width " + std::to_string(widths[i]) +
           " not divisible by " + std::to_string(heads[i]) + " heads");
    }
    if (i > 0 && widths[i] != 2 * widths[i - 1]) fail("stage widths must double");
    const std::size_t n = std::min({window, grid_height(i), grid_width(i)});
    if (grid_height(i) % n != 0 || grid_width(i) % n != 0) {
      fail("stage " + std::to_string(i + 1) + " grid not divisible by window");
    }
  }
  if (window == 0) fail("window must be positive");
  if (widths[3] % 2 != 0) fail("deepest width must be even");
  if (num_classes == 0 || num_classes > 255) fail("num_classes must be in [1, 255]");
  if (decoder_width == 0) fail("decoder_width must be positive");
  if (n_mask == 0 || n_mask > grid_height(3) * grid_width(3)) {
    fail("n_mask " + std::to_string(n_mask) + " exceeds the " +
         std::to_string(grid_height(3) * grid_width(3)) + " deepest tokens");
  }
  if (!(ring_radius() > 0.0)) fail("ring radius must be positive");
}

std::size_t DreamerConfig::grid_height(std::size_t stage) const { return height / patch >> stage; }
std::size_t DreamerConfig::grid_width(std::size_t stage) const { return width / patch >> stage; }

double DreamerConfig::ring_radius() const {
  if (pca_radius > 0.0) return pca_radius;
  return fov_radius / static_cast<double>(patch * kDownsample);
}

void ModelWeights::add(std::string name, Tensor t) {
  if (contains(name)) throw StructuralError("duplicate tensor name " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(t));
}

const Tensor& ModelWeights::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw StructuralError("missing tensor " + name);
  return entries_[it->second].second;
}

Tensor& ModelWeights::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw StructuralError("missing tensor " + name);
  return entries_[it->second].second;
}

void ModelWeights::set(const std::string& name, Tensor t) { get(name) = std::move(t); }

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

std::vector<ParamSpec> weight_layout(const DreamerConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> out;
  auto linear = [&](const std::string& name, std::size_t in, std::size_t o, bool bias = true,
                    Init init = Init::TruncNormal) {
    out.push_back({name + ".w", {in, o}, init});
    if (bias) out.push_back({name + ".b", {o}, Init::Zeros});
  };
  auto norm = [&](const std::string& name, std::size_t c) {
    out.push_back({name + ".gamma", {c}, Init::Ones});
    out.push_back({name + ".beta", {c}, Init::Zeros});
  };
  auto attention = [&](const std::string& name, std::size_t c, bool output) {
    linear(name + ".q", c, c);
    linear(name + ".k", c, c);
    linear(name + ".v", c, c);
    if (output) linear(name + ".o", c, c, true, Init::Zeros);
  };

  const std::size_t in_ch = cfg.patch * cfg.patch * 4;
  linear("patch_embed.proj", in_ch, cfg.widths[0]);
  norm("patch_embed.norm", cfg.widths[0]);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t c = cfg.widths[i];
    for (std::size_t j = 0; j < cfg.depths[i]; ++j) {
      const std::string b = stage_prefix(i) + ".block" + std::to_string(j + 1);
      norm(b + ".norm1", c);
      attention(b + ".attn", c, true);
      norm(b + ".norm2", c);
      linear(b + ".mlp.fc1", c, 4 * c);
      linear(b + ".mlp.fc2", 4 * c, c, true, Init::Zeros);
    }
    if (i < 3) {
      norm(stage_prefix(i) + ".merge.norm", 4 * c);
      linear(stage_prefix(i) + ".merge.proj", 4 * c, 2 * c, false);
    }
  }

  const std::size_t c4 = cfg.widths[3];
  linear("branch.seg", c4, c4, true, Init::Identity);
  linear("branch.comp", c4, c4, true, Init::Identity);
  auto pca_branch = [&](const std::string& name) {
    linear(name + ".ls", c4, c4, true, Init::Identity);
    linear(name + ".lc", c4, c4, true, Init::Identity);
    attention(name + ".attn", c4, false);
    linear(name + ".bn1", c4, c4 / 2);
    linear(name + ".bn2", c4 / 2, c4, true, Init::Zeros);
  };
  if (cfg.direction != PcaDirection::S2P) pca_branch("pca.p2s");
  if (cfg.direction != PcaDirection::P2S) pca_branch("pca.s2p");

  const std::size_t d = cfg.decoder_width;
  for (std::size_t i = 0; i < 4; ++i) linear("outpaint.lateral" + std::to_string(i + 1), cfg.widths[i], d);
  linear("outpaint.conv1", 9 * d, d);
  linear("outpaint.conv2", 9 * d, d);
  linear("outpaint.head", d, 3 * cfg.patch * cfg.patch);

  for (std::size_t k = 0; k < kPoolSizes.size(); ++k) {
    linear("seg.ppm" + std::to_string(kPoolSizes[k]), c4, d);
  }
  linear("seg.bottleneck", c4 + kPoolSizes.size() * d, d);
  for (std::size_t i = 0; i < 3; ++i) linear("seg.lateral" + std::to_string(i + 1), cfg.widths[i], d);
  linear("seg.fuse", 4 * d, d);
  linear("seg.classifier", d, cfg.num_classes);
  return out;
}

ModelWeights init_weights(const DreamerConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  constexpr float kStd = 0.02f;
  ModelWeights w;
  for (const auto& spec : weight_layout(cfg)) {
    Tensor t(spec.shape, 0.0f);
    auto v = t.mutable_data();
    switch (spec.init) {
      case Init::Zeros: break;
      case Init::Ones: std::fill(v.begin(), v.end(), 1.0f); break;
      case Init::Identity:
        for (std::size_t i = 0; i < std::min(spec.shape[0], spec.shape[1]); ++i) v[i * spec.shape[1] + i] = 1.0f;
        break;
      case Init::TruncNormal:
        for (auto& x : v) {
          float s;
          do {
            s = normal(rng);
          } while (std::abs(s) > 2.0f);
          x = s * kStd;
        }
        break;
    }
    w.add(spec.name, std::move(t));
  }
  return w;
}

void validate_weights(const DreamerConfig& cfg, const ModelWeights& w) {
  const auto layout = weight_layout(cfg);
  std::vector<std::string> missing, shape_errors, extra;
  std::unordered_map<std::string, bool> expected;
  for (const auto& spec : layout) {
    expected[spec.name] = true;
    if (!w.contains(spec.name)) {
      missing.push_back(spec.name);
    } else if (w.get(spec.name).shape() != spec.shape) {
      shape_errors.push_back(spec.name + " " + shape_str(w.get(spec.name).shape()) + " != " +
                             shape_str(spec.shape));
    }
  }
  for (const auto& [name, t] : w.entries()) {
    if (!expected.count(name)) extra.push_back(name);
  }
  if (missing.empty() && extra.empty() && shape_errors.empty()) return;
  std::ostringstream msg;
  msg << "weights do not match configuration";
  auto list = [&](const char* label, const std::vector<std::string>& names) {
    if (names.empty()) return;
    msg << "; " << label << ":";
    for (const auto& n : names) msg << " " << n;
  };
  list("missing", missing);
  list("unexpected", extra);
  list("shape", shape_errors);
  throw StructuralError(msg.str());
}

// Index tables shared by every forward pass of one configuration.
class ModelPlan {
 public:
  explicit ModelPlan(const DreamerConfig& cfg);

  std::array<WindowGrid, 4> grids{};  // channels filled per stage; shift set per block
  std::array<ops::RowIndex, 3> upsample;  // stage i+1 -> stage i, nearest 2x
  ops::RowIndex conv3x3;                  // stage 1, zero-padded 3x3 neighborhood
  std::array<ops::RowMixPtr, 3> pool;     // deepest grid -> s x s average
  std::array<ops::RowMixPtr, 3> unpool;   // s x s -> deepest grid, bilinear
  ops::RowMixPtr to_pixels;               // stage 1 -> full resolution, bilinear
  std::array<ops::RowIndex, 3> to_stage1;  // stage i+1 -> stage 1, nearest
  PolarMaskSet masks;
};

namespace {

ops::RowIndex nearest_index(std::size_t gh, std::size_t gw, std::size_t factor) {
  const std::size_t oh = gh * factor;
  const std::size_t ow = gw * factor;
  std::vector<std::int64_t> idx(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) idx[y * ow + x] = static_cast<std::int64_t>((y / factor) * gw + x / factor);
  }
  return ops::make_row_index(std::move(idx));
}

// 1-D interpolation taps, half-pixel aligned.
std::vector<std::pair<std::size_t, std::size_t>> bilinear_taps(std::size_t in, std::size_t out,
                                                               std::vector<double>& frac) {
  std::vector<std::pair<std::size_t, std::size_t>> taps(out);
  frac.assign(out, 0.0);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1};
    frac[o] = src - static_cast<double>(i0);
  }
  return taps;
}

ops::RowMixPtr bilinear_mix(std::size_t ih, std::size_t iw, std::size_t oh, std::size_t ow) {
  std::vector<double> fy, fx;
  const auto ty = bilinear_taps(ih, oh, fy);
  const auto tx = bilinear_taps(iw, ow, fx);
  auto mix = std::make_shared<ops::RowMix>();
  mix->in_rows = ih * iw;
  mix->offsets.push_back(0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const std::pair<std::size_t, double> ys[2] = {{ty[y].first, 1.0 - fy[y]}, {ty[y].second, fy[y]}};
      const std::pair<std::size_t, double> xs[2] = {{tx[x].first, 1.0 - fx[x]}, {tx[x].second, fx[x]}};
      for (const auto& [yy, wy] : ys) {
        for (const auto& [xx, wx] : xs) {
          if (wy * wx == 0.0) continue;
          mix->cols.push_back(static_cast<std::int64_t>(yy * iw + xx));
          mix->weights.push_back(static_cast<float>(wy * wx));
        }
      }
      mix->offsets.push_back(mix->cols.size());
    }
  }
  return mix;
}

// Adaptive average pooling to s x s: cell o covers [floor(o*in/s), ceil((o+1)*in/s)).
ops::RowMixPtr average_pool_mix(std::size_t ih, std::size_t iw, std::size_t s) {
  auto mix = std::make_shared<ops::RowMix>();
  mix->in_rows = ih * iw;
  mix->offsets.push_back(0);
  for (std::size_t oy = 0; oy < s; ++oy) {
    const std::size_t y0 = oy * ih / s;
    const std::size_t y1 = ((oy + 1) * ih + s - 1) / s;
    for (std::size_t ox = 0; ox < s; ++ox) {
      const std::size_t x0 = ox * iw / s;
      const std::size_t x1 = ((ox + 1) * iw + s - 1) / s;
      const float w = 1.0f / static_cast<float>((y1 - y0) * (x1 - x0));
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          mix->cols.push_back(static_cast<std::int64_t>(y * iw + x));
          mix->weights.push_back(w);
        }
      }
      mix->offsets.push_back(mix->cols.size());
    }
  }
  return mix;
}

ops::RowIndex conv_index(std::size_t gh, std::size_t gw) {
  std::vector<std::int64_t> idx;
  idx.reserve(gh * gw * 9);
  for (std::size_t y = 0; y < gh; ++y) {
    for (std::size_t x = 0; x < gw; ++x) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const long yy = static_cast<long>(y) + dy;
          const long xx = static_cast<long>(x) + dx;
          const bool in = yy >= 0 && xx >= 0 && yy < static_cast<long>(gh) && xx < static_cast<long>(gw);
          idx.push_back(in ? yy * static_cast<long>(gw) + xx : -1);
        }
      }
    }
  }
  return ops::make_row_index(std::move(idx));
}

}  // namespace

ModelPlan::ModelPlan(const DreamerConfig& cfg) {
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t gh = cfg.grid_height(i);
    const std::size_t gw = cfg.grid_width(i);
    grids[i] = {gh, gw, cfg.widths[i], std::min({cfg.window, gh, gw}), 0};
    if (i < 3) upsample[i] = nearest_index(cfg.grid_height(i + 1), cfg.grid_width(i + 1), 2);
    if (i > 0) to_stage1[i - 1] = nearest_index(gh, gw, std::size_t{1} << i);
  }
  conv3x3 = conv_index(cfg.grid_height(0), cfg.grid_width(0));
  const std::size_t dh = cfg.grid_height(3);
  const std::size_t dw = cfg.grid_width(3);
  for (std::size_t k = 0; k < kPoolSizes.size(); ++k) {
    pool[k] = average_pool_mix(dh, dw, kPoolSizes[k]);
    unpool[k] = bilinear_mix(kPoolSizes[k], kPoolSizes[k], dh, dw);
  }
  to_pixels = bilinear_mix(cfg.grid_height(0), cfg.grid_width(0), cfg.height, cfg.width);
  masks = generate_polar_masks(dh, dw, cfg.n_mask, cfg.ring_radius());
}

Dreamer::Dreamer(DreamerConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  plan_ = std::make_unique<ModelPlan>(cfg_);
}

Dreamer::~Dreamer() = default;
Dreamer::Dreamer(Dreamer&&) noexcept = default;
Dreamer& Dreamer::operator=(Dreamer&&) noexcept = default;

namespace {

Tensor lin(const ModelWeights& w, const std::string& name, const Tensor& x) {
  const std::string b = name + ".b";
  return ops::linear(x, w.get(name + ".w"), w.contains(b) ? w.get(b) : Tensor());
}

Tensor norm(const ModelWeights& w, const std::string& name, const Tensor& x) {
  return ops::layer_norm(x, w.get(name + ".gamma"), w.get(name + ".beta"));
}

AttentionParams attention_params(const ModelWeights& w, const std::string& name,
                                 std::size_t heads, bool output) {
  AttentionParams p;
  p.heads = heads;
  p.wq = w.get(name + ".q.w");
  p.bq = w.get(name + ".q.b");
  p.wk = w.get(name + ".k.w");
  p.bk = w.get(name + ".k.b");
  p.wv = w.get(name + ".v.w");
  p.bv = w.get(name + ".v.b");
  if (output) {
    p.wo = w.get(name + ".o.w");
    p.bo = w.get(name + ".o.b");
  }
  return p;
}

PcaBranchParams pca_branch(const ModelWeights& w, const std::string& name, std::size_t heads) {
  PcaBranchParams p;
  p.ls_w = w.get(name + ".ls.w");
  p.ls_b = w.get(name + ".ls.b");
  p.lc_w = w.get(name + ".lc.w");
  p.lc_b = w.get(name + ".lc.b");
  p.attn = attention_params(w, name + ".attn", heads, false);
  p.bn1_w = w.get(name + ".bn1.w");
  p.bn1_b = w.get(name + ".bn1.b");
  p.bn2_w = w.get(name + ".bn2.w");
  p.bn2_b = w.get(name + ".bn2.b");
  return p;
}

// [gh, gw, c] -> [gh/2, gw/2, 4c] with the 2x2 neighborhood along channels.
Tensor space_to_depth(const Tensor& x) {
  const std::size_t gh = x.dim(0), gw = x.dim(1), c = x.dim(2);
  Tensor t = ops::reshape(x, {gh / 2, 2, gw / 2, 2, c});
  t = ops::permute(t, {0, 2, 1, 3, 4});
  return ops::reshape(t, {gh / 2, gw / 2, 4 * c});
}

Tensor conv3x3(const ModelWeights& w, const std::string& name, const Tensor& x,
               const ops::RowIndex& idx) {
  const std::size_t rows = x.dim(0);
  const std::size_t c = x.dim(1);
  Tensor cols = ops::reshape(ops::gather_rows(x, idx), {rows, 9 * c});
  return lin(w, name, cols);
}

}  // namespace

ForwardOutput Dreamer::forward(const Tensor& x, const Tensor& fov, const ModelWeights& w) const {
  const auto& cfg = cfg_;
  const auto& plan = *plan_;
  const std::size_t h = cfg.height, wd = cfg.width, p = cfg.patch;
  if (x.shape() != Shape{h, wd, 3} || fov.shape() != Shape{h, wd, 1}) {
    throw StructuralError("forward: expected image [" + std::to_string(h) + "," +
                          std::to_string(wd) + ",3] and mask [..,1], got " +
                          shape_str(x.shape()) + " and " + shape_str(fov.shape()));
  }
  validate_weights(cfg, w);

  // Patch embedding over image and mask channels.
  const std::size_t gh = cfg.grid_height(0), gw = cfg.grid_width(0);
  Tensor pix = ops::concat({x, fov}, 2);
  pix = ops::permute(ops::reshape(pix, {gh, p, gw, p, 4}), {0, 2, 1, 3, 4});
  pix = ops::reshape(pix, {gh * gw, p * p * 4});
  Tensor z = norm(w, "patch_embed.norm", lin(w, "patch_embed.proj", pix));
  z = ops::reshape(z, {gh, gw, cfg.widths[0]});

  std::array<Tensor, 4> feats;
  for (std::size_t i = 0; i < 4; ++i) {
    WindowGrid grid = plan.grids[i];
    const bool can_shift = grid.window < std::min(grid.height, grid.width);
    for (std::size_t j = 0; j < cfg.depths[i]; ++j) {
      const std::string b = stage_prefix(i) + ".block" + std::to_string(j + 1);
      SwinBlockParams sp;
      sp.ln1_gamma = w.get(b + ".norm1.gamma");
      sp.ln1_beta = w.get(b + ".norm1.beta");
      sp.attn = attention_params(w, b + ".attn", cfg.heads[i], true);
      sp.ln2_gamma = w.get(b + ".norm2.gamma");
      sp.ln2_beta = w.get(b + ".norm2.beta");
      sp.fc1_w = w.get(b + ".mlp.fc1.w");
      sp.fc1_b = w.get(b + ".mlp.fc1.b");
      sp.fc2_w = w.get(b + ".mlp.fc2.w");
      sp.fc2_b = w.get(b + ".mlp.fc2.b");
      grid.shift = (can_shift && j % 2 == 1) ? grid.window / 2 : 0;
      z = swin_block(z, sp, grid);
    }
    feats[i] = z;
    if (i < 3) {
      const std::string m = stage_prefix(i) + ".merge";
      z = lin(w, m + ".proj", norm(w, m + ".norm", space_to_depth(z)));
    }
  }

  // Polar-aware fusion between the two branches.
  PcaParams pp;
  pp.direction = cfg.direction;
  if (cfg.direction != PcaDirection::S2P) pp.p2s = pca_branch(w, "pca.p2s", cfg.heads[3]);
  if (cfg.direction != PcaDirection::P2S) pp.s2p = pca_branch(w, "pca.s2p", cfg.heads[3]);
  const PcaOutput fused = pca_forward(lin(w, "branch.seg", feats[3]),
                                      lin(w, "branch.comp", feats[3]), plan.masks, pp);

  auto flat = [](const Tensor& t) { return ops::reshape(t, {t.dim(0) * t.dim(1), t.dim(2)}); };

  // Outpainting: top-down pyramid, two 3x3 convs, per-token pixel blocks.
  Tensor top = lin(w, "outpaint.lateral4", flat(fused.z_c));
  for (std::size_t i = 3; i-- > 0;) {
    top = ops::add(lin(w, "outpaint.lateral" + std::to_string(i + 1), flat(feats[i])),
                   ops::gather_rows(top, plan.upsample[i]));
  }
  Tensor dec = ops::gelu(conv3x3(w, "outpaint.conv1", top, plan.conv3x3));
  dec = ops::gelu(conv3x3(w, "outpaint.conv2", dec, plan.conv3x3));
  Tensor blocks = ops::reshape(lin(w, "outpaint.head", dec), {gh, gw, p, p, 3});
  Tensor pred = ops::reshape(ops::permute(blocks, {0, 2, 1, 3, 4}), {h, wd, 3});
  // Copy mode: observed pixels pass through, the head fills the blind area.
  std::vector<float> keep(h * wd * 3);
  std::vector<float> blind(h * wd * 3);
  auto fv = fov.data();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    keep[i] = fv[i / 3];
    blind[i] = 1.0f - fv[i / 3];
  }
  Tensor rgb = ops::add(ops::mul(pred, Tensor({h, wd, 3}, std::move(blind))),
                        ops::mul(x, Tensor({h, wd, 3}, std::move(keep))));

  // Segmentation: pyramid pooling on the fused deepest map, lateral fusion.
  const Tensor deep = flat(fused.z_s);
  std::vector<Tensor> ppm{deep};
  for (std::size_t k = 0; k < kPoolSizes.size(); ++k) {
    Tensor pooled = ops::gelu(lin(w, "seg.ppm" + std::to_string(kPoolSizes[k]),
                                  ops::mix_rows(deep, plan.pool[k])));
    ppm.push_back(ops::mix_rows(pooled, plan.unpool[k]));
  }
  Tensor sp = ops::gelu(lin(w, "seg.bottleneck", ops::concat(ppm, 1)));
  std::array<Tensor, 4> pyr;
  pyr[3] = sp;
  for (std::size_t i = 3; i-- > 0;) {
    pyr[i] = ops::add(lin(w, "seg.lateral" + std::to_string(i + 1), flat(feats[i])),
                      ops::gather_rows(pyr[i + 1], plan.upsample[i]));
  }
  std::vector<Tensor> levels{pyr[0]};
  for (std::size_t i = 1; i < 4; ++i) levels.push_back(ops::gather_rows(pyr[i], plan.to_stage1[i - 1]));
  Tensor seg = ops::gelu(lin(w, "seg.fuse", ops::concat(levels, 1)));
  Tensor logits = ops::mix_rows(lin(w, "seg.classifier", seg), plan.to_pixels);
  return {rgb, ops::reshape(logits, {h, wd, cfg.num_classes})};
}

ForwardOutput forward(const Tensor& x, const Tensor& fov, const DreamerConfig& cfg,
                      const ModelWeights& w) {
  return Dreamer(cfg).forward(x, fov, w);
}

LossTerms dreamer_loss(const ForwardOutput& out, const Tensor& rgb_gt,
                       std::span<const std::int32_t> labels, std::int32_t ignore_index) {
  if (out.rgb.shape() != rgb_gt.shape()) {
    throw DimensionError("loss: prediction " + shape_str(out.rgb.shape()) + " vs target " +
                         shape_str(rgb_gt.shape()));
  }
  const std::size_t k = out.logits.dim(2);
  const std::size_t pixels = out.logits.dim(0) * out.logits.dim(1);
  if (labels.size() != pixels) {
    throw DimensionError("loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(pixels) + " pixels");
  }
  LossTerms t;
  t.l1 = ops::l1_loss(out.rgb, rgb_gt);
  t.ce = ops::cross_entropy(ops::reshape(out.logits, {pixels, k}), labels, ignore_index);
  t.total = ops::add(t.l1, t.ce);
  return t;
}

}  // namespace fd
