#include "fishdreamer/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace fd::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::int64_t;

void matmul_block(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate, bool parallel) {
#pragma omp parallel if (parallel)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const float* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
      }
      float* crow = c + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(crow[j] + acc[j]);
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
      }
    }
  }
}

void matmul_tn_block(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                     std::size_t n, bool accumulate, bool parallel) {
#pragma omp parallel if (parallel)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[p * m + i];
        if (av == 0.0) continue;
        const float* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
      }
      float* crow = c + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(crow[j] + acc[j]);
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
      }
    }
  }
}

void matmul_nt_block(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                     std::size_t n, bool accumulate, bool parallel) {
#pragma omp parallel for schedule(static) if (parallel)
  for (Index i = 0; i < static_cast<Index>(m); ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(arow[p]) * brow[p];
      crow[j] = accumulate ? static_cast<float>(crow[j] + s) : static_cast<float>(s);
    }
  }
}

}  // namespace

void matmul(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  matmul_block(a.data(), b.data(), c.data(), m, k, n, accumulate, m * k * n >= kParallelWork);
}

void matmul_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  matmul_tn_block(a.data(), b.data(), c.data(), m, k, n, accumulate,
                  m * k * n >= kParallelWork);
}

void matmul_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  matmul_nt_block(a.data(), b.data(), c.data(), m, k, n, accumulate,
                  m * k * n >= kParallelWork);
}

// Batched products parallelize over the batch; each item runs serially.
void bmm(std::span<const float> a, std::span<const float> b, std::span<float> c,
         std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (batch * m * k * n >= kParallelWork)
  for (Index t = 0; t < static_cast<Index>(batch); ++t) {
    matmul_block(a.data() + t * m * k, b.data() + t * k * n, c.data() + t * m * n, m, k, n,
                 accumulate, false);
  }
}

void bmm_tn(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (batch * m * k * n >= kParallelWork)
  for (Index t = 0; t < static_cast<Index>(batch); ++t) {
    matmul_tn_block(a.data() + t * k * m, b.data() + t * k * n, c.data() + t * m * n, m, k,
                    n, accumulate, false);
  }
}

void bmm_nt(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (batch * m * k * n >= kParallelWork)
  for (Index t = 0; t < static_cast<Index>(batch); ++t) {
    matmul_nt_block(a.data() + t * m * k, b.data() + t * n * k, c.data() + t * m * n, m, k,
                    n, accumulate, false);
  }
}

void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t n) {
#pragma omp parallel for schedule(static) if (rows * n >= kParallelWork)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const float* xr = x.data() + r * n;
    float* yr = y.data() + r * n;
    float mx = xr[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(static_cast<double>(xr[j]) - mx);
      yr[j] = static_cast<float>(e);
      total += e;
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) yr[j] = static_cast<float>(yr[j] * inv);
  }
}

void softmax_rows_backward(std::span<const float> y, std::span<const float> dy,
                           std::span<float> dx, std::size_t rows, std::size_t n) {
#pragma omp parallel for schedule(static) if (rows * n >= kParallelWork)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const float* yr = y.data() + r * n;
    const float* gr = dy.data() + r * n;
    float* dr = dx.data() + r * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(yr[j]) * gr[j];
    for (std::size_t j = 0; j < n; ++j) {
      dr[j] += static_cast<float>(yr[j] * (gr[j] - dot));
    }
  }
}

void layer_norm_rows(std::span<const float> x, std::span<const float> gamma,
                     std::span<const float> beta, float eps, std::span<float> y,
                     std::span<float> xhat, std::span<float> rstd, std::size_t rows,
                     std::size_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (Index r = 0; r < static_cast<Index>(rows); ++r) {
    const float* xr = x.data() + r * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    rstd[r] = static_cast<float>(inv);
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (xr[j] - mean) * inv;
      xhat[r * cols + j] = static_cast<float>(h);
      y[r * cols + j] = static_cast<float>(h * gamma[j] + beta[j]);
    }
  }
}

void layer_norm_rows_backward(std::span<const float> dy, std::span<const float> xhat,
                              std::span<const float> rstd, std::span<const float> gamma,
                              std::span<float> dx, std::span<float> dgamma,
                              std::span<float> dbeta, std::size_t rows,
                              std::size_t cols) {
  if (!dx.empty()) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
    for (Index r = 0; r < static_cast<Index>(rows); ++r) {
      const float* g = dy.data() + r * cols;
      const float* h = xhat.data() + r * cols;
      double sum_g = 0.0;
      double sum_gh = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const double gg = static_cast<double>(g[j]) * gamma[j];
        sum_g += gg;
        sum_gh += gg * h[j];
      }
      const double inv_n = 1.0 / static_cast<double>(cols);
      for (std::size_t j = 0; j < cols; ++j) {
        const double gg = static_cast<double>(g[j]) * gamma[j];
        dx[r * cols + j] +=
            static_cast<float>(rstd[r] * (gg - inv_n * sum_g - h[j] * inv_n * sum_gh));
      }
    }
  }
  // Parameter gradients reduce over rows; one column per thread keeps order fixed.
  if (!dgamma.empty() || !dbeta.empty()) {
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
    for (Index j = 0; j < static_cast<Index>(cols); ++j) {
      double sg = 0.0;
      double sb = 0.0;
      for (std::size_t r = 0; r < rows; ++r) {
        sg += static_cast<double>(dy[r * cols + j]) * xhat[r * cols + j];
        sb += dy[r * cols + j];
      }
      if (!dgamma.empty()) dgamma[j] += static_cast<float>(sg);
      if (!dbeta.empty()) dbeta[j] += static_cast<float>(sb);
    }
  }
}

namespace {
constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;
}  // namespace

float gelu_scalar(float x) {
  const double v = x;
  const double inner = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
  return static_cast<float>(0.5 * v * (1.0 + std::tanh(inner)));
}

float gelu_derivative_scalar(float x) {
  const double v = x;
  const double inner = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
  const double t = std::tanh(inner);
  const double dinner = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
  return static_cast<float>(0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * dinner);
}

void gelu(std::span<const float> x, std::span<float> y) {
  const auto n = static_cast<Index>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelWork)
  for (Index i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

namespace reference {

void matmul(std::span<const float> a, std::span<const float> b, std::span<float> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += static_cast<double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<float>(s);
    }
  }
}

void softmax_rows(std::span<const float> x, std::span<float> y, std::size_t rows,
                  std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max<double>(mx, x[r * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(x[r * n + j] - mx);
    for (std::size_t j = 0; j < n; ++j) {
      y[r * n + j] = static_cast<float>(std::exp(x[r * n + j] - mx) / total);
    }
  }
}

void layer_norm_rows(std::span<const float> x, std::span<const float> gamma,
                     std::span<const float> beta, float eps, std::span<float> y,
                     std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += x[r * cols + j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      var += (x[r * cols + j] - mean) * (x[r * cols + j] - mean);
    }
    var /= static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      y[r * cols + j] = static_cast<float>((x[r * cols + j] - mean) / std::sqrt(var + eps) *
                                               gamma[j] +
                                           beta[j]);
    }
  }
}

void gelu(std::span<const float> x, std::span<float> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
}

}  // namespace reference

}  // namespace fd::kernels
