#pragma once

#include <cstddef>

#include "fishdreamer/tensor.hpp"

namespace fd {

/// Additive logit for masked attention entries.
inline constexpr float kMaskedLogit = -1e9f;

/// An H x W x C feature map cut into N x N windows after a cyclic roll by
/// `shift` tokens towards the origin.
struct WindowGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t window = 0;
  std::size_t shift = 0;

  std::size_t num_windows() const { return (height / window) * (width / window); }
  std::size_t tokens_per_window() const { return window * window; }
  /// Throws ContractError unless both sides are multiples of the window and
  /// the shift is smaller than the window.
  void validate() const;
};

/// [H, W, C] -> [nW, N*N, C], windows in row-major order over the rolled map.
Tensor window_partition(const Tensor& x, const WindowGrid& grid);
/// Inverse of window_partition, including the reverse roll.
Tensor window_merge(const Tensor& windows, const WindowGrid& grid);
/// [nW, N*N, N*N] additive mask that keeps tokens from attending across the
/// seams introduced by the roll. All zeros when shift == 0.
Tensor shifted_window_mask(const WindowGrid& grid);

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv;
  Tensor wo, bo;  // wo may be left undefined: no output projection
  std::size_t heads = 1;

  std::size_t channels() const { return wq.dim(0); }
};

/// Scaled dot-product attention with `heads` heads of width C / heads and
/// scale 1 / sqrt(C / heads).
/// q_in: [T, C] or [B, T, C]; kv_in: [S, C] or [B, S, C].
/// mask: additive, [T, S] (shared across the batch) or [B, T, S]; every query
/// row needs at least one unmasked key.
/// weights, when given, receives the post-softmax probabilities [B, heads, T, S].
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                            const Tensor& mask = Tensor(), Tensor* weights = nullptr);

struct SwinBlockParams {
  Tensor ln1_gamma, ln1_beta;
  AttentionParams attn;
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

/// z_hat = z + (S)W-MSA(LN(z)); out = z_hat + MLP(LN(z_hat)). z: [H, W, C].
Tensor swin_block(const Tensor& z, const SwinBlockParams& p, const WindowGrid& grid);

}  // namespace fd
