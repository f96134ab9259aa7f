#include "fishdreamer/attention.hpp"

#include <cmath>
#include <string>

#include "fishdreamer/errors.hpp"
#include "fishdreamer/ops.hpp"

namespace fd {

void WindowGrid::validate() const {
  if (window == 0 || height == 0 || width == 0 || channels == 0) {
    throw ContractError("window grid: zero extent");
  }
  if (height % window != 0 || width % window != 0) {
    throw ContractError("window grid: " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible by window " + std::to_string(window));
  }
  if (shift >= window) throw ContractError("window grid: shift must be smaller than the window");
}

namespace {

// Row of the unrolled map feeding position (window w, token t).
std::vector<std::int64_t> partition_index(const WindowGrid& g) {
  const std::size_t n = g.window;
  const std::size_t wx = g.width / n;
  std::vector<std::int64_t> idx(g.height * g.width);
  std::size_t k = 0;
  for (std::size_t w = 0; w < g.num_windows(); ++w) {
    const std::size_t oy = (w / wx) * n;
    const std::size_t ox = (w % wx) * n;
    for (std::size_t ty = 0; ty < n; ++ty) {
      for (std::size_t tx = 0; tx < n; ++tx) {
        const std::size_t y = (oy + ty + g.shift) % g.height;
        const std::size_t x = (ox + tx + g.shift) % g.width;
        idx[k++] = static_cast<std::int64_t>(y * g.width + x);
      }
    }
  }
  return idx;
}

void check_map(const Tensor& x, const WindowGrid& g, const char* op) {
  g.validate();
  if (x.rank() != 3 || x.dim(0) != g.height || x.dim(1) != g.width || x.dim(2) != g.channels) {
    throw DimensionError(std::string(op) + ": map " + shape_str(x.shape()) + " vs grid [" +
                         std::to_string(g.height) + "," + std::to_string(g.width) + "," +
                         std::to_string(g.channels) + "]");
  }
}

// Region label along one axis of the rolled map, as in the usual three-slice
// construction.
std::size_t region(std::size_t pos, std::size_t size, const WindowGrid& g) {
  if (pos < size - g.window) return 0;
  if (pos < size - g.shift) return 1;
  return 2;
}

Tensor project(const Tensor& x, const Tensor& w, const Tensor& b) { return ops::linear(x, w, b); }

}  // namespace

Tensor window_partition(const Tensor& x, const WindowGrid& g) {
  check_map(x, g, "window_partition");
  auto idx = ops::make_row_index(partition_index(g));
  Tensor flat = ops::reshape(x, {g.height * g.width, g.channels});
  return ops::reshape(ops::gather_rows(flat, idx),
                      {g.num_windows(), g.tokens_per_window(), g.channels});
}

Tensor window_merge(const Tensor& windows, const WindowGrid& g) {
  g.validate();
  if (windows.shape() != Shape{g.num_windows(), g.tokens_per_window(), g.channels}) {
    throw DimensionError("window_merge: got " + shape_str(windows.shape()));
  }
  const auto fwd = partition_index(g);
  std::vector<std::int64_t> inv(fwd.size());
  for (std::size_t k = 0; k < fwd.size(); ++k) inv[static_cast<std::size_t>(fwd[k])] = static_cast<std::int64_t>(k);
  Tensor flat = ops::reshape(windows, {fwd.size(), g.channels});
  return ops::reshape(ops::gather_rows(flat, ops::make_row_index(std::move(inv))),
                      {g.height, g.width, g.channels});
}

Tensor shifted_window_mask(const WindowGrid& g) {
  g.validate();
  const std::size_t n = g.window;
  const std::size_t t = g.tokens_per_window();
  const std::size_t wx = g.width / n;
  std::vector<float> m(g.num_windows() * t * t, 0.0f);
  if (g.shift == 0) return Tensor({g.num_windows(), t, t}, std::move(m));
  std::vector<std::size_t> label(t);
  for (std::size_t w = 0; w < g.num_windows(); ++w) {
    const std::size_t oy = (w / wx) * n;
    const std::size_t ox = (w % wx) * n;
    for (std::size_t k = 0; k < t; ++k) {
      label[k] = 3 * region(oy + k / n, g.height, g) + region(ox + k % n, g.width, g);
    }
    float* mw = m.data() + w * t * t;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) mw[i * t + j] = label[i] == label[j] ? 0.0f : kMaskedLogit;
    }
  }
  return Tensor({g.num_windows(), t, t}, std::move(m));
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                            const Tensor& mask, Tensor* weights) {
  const bool batched = q_in.rank() == 3;
  const Tensor q3 = batched ? q_in : ops::reshape(q_in, {1, q_in.dim(0), q_in.dim(1)});
  const Tensor kv3 = kv_in.rank() == 3 ? kv_in : ops::reshape(kv_in, {1, kv_in.dim(0), kv_in.dim(1)});
  if (q3.rank() != 3 || kv3.rank() != 3 || q3.dim(0) != kv3.dim(0) || q3.dim(2) != kv3.dim(2)) {
    throw DimensionError("attention: queries " + shape_str(q_in.shape()) + " vs keys " +
                         shape_str(kv_in.shape()));
  }
  const std::size_t b = q3.dim(0);
  const std::size_t t = q3.dim(1);
  const std::size_t s = kv3.dim(1);
  const std::size_t c = q3.dim(2);
  const std::size_t h = p.heads;
  if (h == 0 || c % h != 0 || p.channels() != c) {
    throw DimensionError("attention: " + std::to_string(h) + " heads over " +
                         std::to_string(c) + " channels, projection " + shape_str(p.wq.shape()));
  }
  const std::size_t d = c / h;

  // Expanded additive mask [B*h, T, S], checked for rows with no live key.
  Tensor expanded;
  if (mask.defined()) {
    const bool shared = mask.rank() == 2;
    if ((shared && mask.shape() != Shape{t, s}) || (!shared && mask.shape() != Shape{b, t, s})) {
      throw DimensionError("attention: mask " + shape_str(mask.shape()) + " for " +
                           std::to_string(t) + " queries and " + std::to_string(s) + " keys");
    }
    auto mv = mask.data();
    const std::size_t mb = shared ? 1 : b;
    for (std::size_t r = 0; r < mb * t; ++r) {
      bool live = false;
      for (std::size_t j = 0; j < s && !live; ++j) live = mv[r * s + j] > 0.5f * kMaskedLogit;
      if (!live) {
        throw ContractError("attention: query row " + std::to_string(r % t) +
                            " has every key masked");
      }
    }
    std::vector<float> e(b * h * t * s);
    for (std::size_t bi = 0; bi < b; ++bi) {
      const float* src = mv.data() + (shared ? 0 : bi * t * s);
      for (std::size_t hi = 0; hi < h; ++hi) {
        std::copy_n(src, t * s, e.data() + (bi * h + hi) * t * s);
      }
    }
    expanded = Tensor({b * h, t, s}, std::move(e));
  }

  auto split_heads = [&](const Tensor& x, std::size_t len) {
    return ops::reshape(ops::permute(ops::reshape(x, {b, len, h, d}), {0, 2, 1, 3}),
                        {b * h, len, d});
  };
  const Tensor q = split_heads(project(q3, p.wq, p.bq), t);
  const Tensor k = split_heads(project(kv3, p.wk, p.bk), s);
  const Tensor v = split_heads(project(kv3, p.wv, p.bv), s);

  Tensor logits = ops::scale(ops::bmm_nt(q, k), static_cast<float>(1.0 / std::sqrt(double(d))));
  if (expanded.defined()) logits = ops::add(logits, expanded);
  const Tensor attn = ops::softmax(logits);
  if (weights) *weights = ops::reshape(attn, {b, h, t, s});

  Tensor out = ops::bmm(attn, v);  // [B*h, T, d]
  out = ops::reshape(ops::permute(ops::reshape(out, {b, h, t, d}), {0, 2, 1, 3}), {b, t, c});
  if (p.wo.defined()) out = project(out, p.wo, p.bo);
  return batched ? out : ops::reshape(out, {t, c});
}

Tensor swin_block(const Tensor& z, const SwinBlockParams& p, const WindowGrid& g) {
  check_map(z, g, "swin_block");
  const Tensor normed = ops::layer_norm(z, p.ln1_gamma, p.ln1_beta);
  const Tensor win = window_partition(normed, g);
  Tensor mask;
  if (g.shift != 0) mask = shifted_window_mask(g);
  const Tensor attended = multi_head_attention(win, win, p.attn, mask);
  const Tensor z_hat = ops::add(z, window_merge(attended, g));

  const Tensor hidden = ops::gelu(ops::linear(ops::layer_norm(z_hat, p.ln2_gamma, p.ln2_beta),
                                              p.fc1_w, p.fc1_b));
  return ops::add(z_hat, ops::linear(hidden, p.fc2_w, p.fc2_b));
}

}  // namespace fd
