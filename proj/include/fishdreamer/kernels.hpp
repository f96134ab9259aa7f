#pragma once

// Raw float kernels used by the differentiable ops. The top-level versions
// parallelize over independent output rows with OpenMP; every output element
// is produced by one thread with a fixed summation order, so results do not
// depend on the thread count. `reference::` holds plain serial loops that the
// tests and the benchmark compare against.

#include <cstddef>
#include <span>

namespace fd::kernels {

/// c[m,n] (+)= a[m,k] * b[k,n]
void matmul(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
/// c[m,n] (+)= a[k,m]^T * b[k,n]
void matmul_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);
/// c[m,n] (+)= a[m,k] * b[n,k]^T
void matmul_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

/// Batched variants: `batch` independent products laid out back to back.
void bmm(std::span<const float> a, std::span<const float> b, std::span<float> c,
         std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
         bool accumulate = false);
void bmm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate = false);
void bmm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate = false);

/// Row-wise softmax with max subtraction.
void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t n);
/// dx += y * (dy - sum(dy * y)) per row.
void softmax_rows_backward(std::span<const float> y, std::span<const float> dy,
                           std::span<float> dx, std::size_t rows, std::size_t n);

/// Layer norm over the trailing axis. `xhat` and `rstd` are saved for backward.
void layer_norm_rows(std::span<const float> x, std::span<const float> gamma,
                     std::span<const float> beta, float eps, std::span<float> y,
                     std::span<float> xhat, std::span<float> rstd, std::size_t rows,
                     std::size_t cols);
void layer_norm_rows_backward(std::span<const float> dy, std::span<const float> xhat,
                              std::span<const float> rstd, std::span<const float> gamma,
                              std::span<float> dx, std::span<float> dgamma,
                              std::span<float> dbeta, std::size_t rows,
                              std::size_t cols);

/// tanh-approximated GELU.
float gelu_scalar(float x);
float gelu_derivative_scalar(float x);
void gelu(std::span<const float> x, std::span<float> y);

namespace reference {

void matmul(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t n);
void layer_norm_rows(std::span<const float> x, std::span<const float> gamma,
                     std::span<const float> beta, float eps, std::span<float> y,
                     std::size_t rows, std::size_t cols);
void gelu(std::span<const float> x, std::span<float> y);

}  // namespace reference

}  // namespace fd::kernels
