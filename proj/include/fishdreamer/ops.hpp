#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fishdreamer/tensor.hpp"

// Differentiable tensor ops. Each op records itself on the active tape when
// any input requires a gradient.
namespace fd::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product of equally shaped tensors.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
/// x[..., C] + bias[C]
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// a[m,k] * b[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x[..., in] * w[in, out] (+ b[out]); leading axes are flattened.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = Tensor());
/// a[B,m,k] * b[B,k,n]
Tensor bmm(const Tensor& a, const Tensor& b);
/// a[B,m,k] * b[B,n,k]^T
Tensor bmm_nt(const Tensor& a, const Tensor& b);

/// Softmax over the trailing axis.
Tensor softmax(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);
Tensor gelu(const Tensor& x);

/// Metadata-only when sizes agree; the buffer is shared.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);

using RowIndex = std::shared_ptr<const std::vector<std::int64_t>>;
RowIndex make_row_index(std::vector<std::int64_t> idx);

/// out[i, ...] = x[idx[i], ...]; a negative index yields a zero row.
Tensor gather_rows(const Tensor& x, const RowIndex& idx);

/// Sparse linear combination of rows: out[i, ...] = sum_j w_ij * x[col_ij, ...].
struct RowMix {
  std::size_t in_rows = 0;
  std::vector<std::size_t> offsets;  // size out_rows + 1
  std::vector<std::int64_t> cols;
  std::vector<float> weights;
  std::size_t out_rows() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};
using RowMixPtr = std::shared_ptr<const RowMix>;
Tensor mix_rows(const Tensor& x, const RowMixPtr& mix);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean |pred - target|; target is treated as constant.
Tensor l1_loss(const Tensor& pred, const Tensor& target);
/// Mean softmax cross-entropy over rows whose label != ignore_index.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels,
                     std::int32_t ignore_index = -1);

}  // namespace fd::ops
