#pragma once

// Helpers shared by the unit tests and the acceptance runner: random tensors,
// random parameter sets and brute-force reference computations in double.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fishdreamer/attention.hpp"
#include "fishdreamer/ops.hpp"
#include "fishdreamer/tensor.hpp"

namespace fd::testing {

inline Tensor random_tensor(Shape shape, std::mt19937& rng, float stddev = 1.0f,
                            float mean = 0.0f) {
  std::normal_distribution<float> dist(mean, stddev);
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

/// Scalar objective sum(probe * (fn(x) - fn(x0))) with a fixed random probe.
/// Subtracting the value at x0 elementwise keeps |f| near zero around x0, so
/// the f32 rounding of f does not swamp central differences.
inline std::function<Tensor(const Tensor&)> probe_objective(
    std::function<Tensor(const Tensor&)> fn, const Tensor& x0, unsigned seed) {
  Tensor base;
  {
    NoGradScope ng;
    base = fn(x0).detach();
  }
  std::mt19937 rng(seed);
  Tensor probe = random_tensor(base.shape(), rng);
  return [fn = std::move(fn), base, probe](const Tensor& x) {
    return ops::sum(ops::mul(ops::sub(fn(x), base), probe));
  };
}

inline AttentionParams random_attention(std::size_t c, std::size_t heads, std::mt19937& rng,
                                        bool output_projection = true) {
  const float s = 1.0f / std::sqrt(static_cast<float>(c));
  AttentionParams p;
  p.heads = heads;
  p.wq = random_tensor({c, c}, rng, s);
  p.wk = random_tensor({c, c}, rng, s);
  p.wv = random_tensor({c, c}, rng, s);
  p.bq = random_tensor({c}, rng, 0.1f);
  p.bk = random_tensor({c}, rng, 0.1f);
  p.bv = random_tensor({c}, rng, 0.1f);
  if (output_projection) {
    p.wo = random_tensor({c, c}, rng, s);
    p.bo = random_tensor({c}, rng, 0.1f);
  }
  return p;
}

inline SwinBlockParams random_swin(std::size_t c, std::size_t heads, std::mt19937& rng) {
  SwinBlockParams p;
  p.ln1_gamma = random_tensor({c}, rng, 0.1f, 1.0f);
  p.ln1_beta = random_tensor({c}, rng, 0.1f);
  p.attn = random_attention(c, heads, rng);
  p.ln2_gamma = random_tensor({c}, rng, 0.1f, 1.0f);
  p.ln2_beta = random_tensor({c}, rng, 0.1f);
  p.fc1_w = random_tensor({c, 4 * c}, rng, 1.0f / std::sqrt(float(c)));
  p.fc1_b = random_tensor({4 * c}, rng, 0.1f);
  p.fc2_w = random_tensor({4 * c, c}, rng, 1.0f / std::sqrt(float(4 * c)));
  p.fc2_b = random_tensor({c}, rng, 0.1f);
  return p;
}

/// y[r, :] = x[r, :] * w + b in double; x: rows x in (row-major).
inline std::vector<double> naive_linear(const std::vector<double>& x, std::size_t rows,
                                        const Tensor& w, const Tensor& b) {
  const std::size_t in = w.dim(0);
  const std::size_t out = w.dim(1);
  std::vector<double> y(rows * out, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = b.defined() ? b.at(j) : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * w.at(i * out + j);
      y[r * out + j] = acc;
    }
  }
  return y;
}

inline std::vector<double> to_double(const Tensor& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

/// Loop-by-loop multi-head attention for one query set and one key set.
/// mask: T x S additive, may be empty.
inline std::vector<double> naive_attention(const std::vector<double>& q_in, std::size_t t,
                                           const std::vector<double>& kv_in, std::size_t s,
                                           const AttentionParams& p,
                                           const std::vector<float>& mask = {}) {
  const std::size_t c = p.wq.dim(0);
  const std::size_t d = c / p.heads;
  const auto q = naive_linear(q_in, t, p.wq, p.bq);
  const auto k = naive_linear(kv_in, s, p.wk, p.bk);
  const auto v = naive_linear(kv_in, s, p.wv, p.bv);
  std::vector<double> out(t * c, 0.0);
  for (std::size_t h = 0; h < p.heads; ++h) {
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<double> logit(s);
      double mx = -1e300;
      for (std::size_t j = 0; j < s; ++j) {
        double dot = 0.0;
        for (std::size_t e = 0; e < d; ++e) dot += q[i * c + h * d + e] * k[j * c + h * d + e];
        logit[j] = dot / std::sqrt(double(d)) + (mask.empty() ? 0.0 : mask[i * s + j]);
        mx = std::max(mx, logit[j]);
      }
      double z = 0.0;
      for (auto& l : logit) z += (l = std::exp(l - mx));
      for (std::size_t j = 0; j < s; ++j) {
        for (std::size_t e = 0; e < d; ++e) out[i * c + h * d + e] += logit[j] / z * v[j * c + h * d + e];
      }
    }
  }
  if (p.wo.defined()) return naive_linear(out, t, p.wo, p.bo);
  return out;
}

}  // namespace fd::testing

namespace fd::testing {

/// Restricts a function of x to the affine slice x0 + sum_k t_k u_k along
/// `count` random unit directions. Checking the gradient with respect to t
/// exercises every backward rule while each coordinate of t carries a
/// directional derivative of typical size rather than a single, possibly
/// vanishing, partial derivative.
struct DirectionalSlice {
  Tensor basis;  // [count, numel(x0)]
  Tensor x0;
  Tensor at(const Tensor& t) const {
    return ops::add(x0, ops::reshape(ops::matmul(t, basis), x0.shape()));
  }
};

inline DirectionalSlice random_slice(const Tensor& x0, std::size_t count, std::mt19937& rng) {
  const std::size_t n = x0.numel();
  Tensor u = random_tensor({count, n}, rng);
  auto uv = u.mutable_data();
  for (std::size_t k = 0; k < count; ++k) {
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += double(uv[k * n + i]) * uv[k * n + i];
    const float inv = static_cast<float>(1.0 / std::sqrt(norm));
    for (std::size_t i = 0; i < n; ++i) uv[k * n + i] *= inv;
  }
  return {u, x0.detach()};
}

}  // namespace fd::testing

#include "fishdreamer/polar_attention.hpp"

namespace fd::testing {

inline PcaBranchParams random_pca_branch(std::size_t c, std::size_t heads, std::mt19937& rng) {
  const float s = 1.0f / std::sqrt(static_cast<float>(c));
  PcaBranchParams p;
  p.ls_w = random_tensor({c, c}, rng, s);
  p.ls_b = random_tensor({c}, rng, 0.1f);
  p.lc_w = random_tensor({c, c}, rng, s);
  p.lc_b = random_tensor({c}, rng, 0.1f);
  p.attn = random_attention(c, heads, rng, false);
  p.bn1_w = random_tensor({c, c / 2}, rng, s);
  p.bn1_b = random_tensor({c / 2}, rng, 0.1f);
  p.bn2_w = random_tensor({c / 2, c}, rng, 1.0f / std::sqrt(float(c / 2)));
  p.bn2_b = random_tensor({c}, rng, 0.1f);
  return p;
}

inline PcaParams random_pca(std::size_t c, std::size_t heads, PcaDirection dir,
                            std::mt19937& rng) {
  PcaParams p;
  p.direction = dir;
  p.p2s = random_pca_branch(c, heads, rng);
  p.s2p = random_pca_branch(c, heads, rng);
  return p;
}

inline double gelu_tanh(double x) {
  return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
}

/// Ring-by-ring loop version of pca_forward in double. Returns {z_s, z_c}
/// flattened row-major.
inline std::pair<std::vector<double>, std::vector<double>> naive_pca(
    const Tensor& z_s, const Tensor& z_c, const PolarMaskSet& masks, const PcaParams& params) {
  const std::size_t c = z_s.dim(2);
  std::vector<double> s = to_double(z_s);
  std::vector<double> cc = to_double(z_c);
  auto run = [&](const std::vector<double>& target, const std::vector<double>& source,
                 const Tensor& lt_w, const Tensor& lt_b, const Tensor& lsrc_w, const Tensor& lsrc_b,
                 const PcaBranchParams& p) {
    std::vector<double> out = target;
    for (const auto& ring : masks.ring_tokens) {
      const std::size_t n = ring.size();
      if (n == 0) continue;
      std::vector<double> tr(n * c);
      std::vector<double> sr(n * c);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < c; ++j) {
          tr[k * c + j] = target[ring[k] * c + j];
          sr[k * c + j] = source[ring[k] * c + j];
        }
      }
      const auto t_star = naive_linear(tr, n, lt_w, lt_b);
      const auto s_star = naive_linear(sr, n, lsrc_w, lsrc_b);
      const auto att = naive_attention(t_star, n, s_star, n, p.attn);
      auto hidden = naive_linear(att, n, p.bn1_w, p.bn1_b);
      for (auto& v : hidden) v = gelu_tanh(v);
      const auto bn = naive_linear(hidden, n, p.bn2_w, p.bn2_b);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < c; ++j) out[ring[k] * c + j] = t_star[k * c + j] + bn[k * c + j];
      }
    }
    return out;
  };
  std::vector<double> out_s = s;
  std::vector<double> out_c = cc;
  const auto dir = params.direction;
  if (dir != PcaDirection::S2P) {
    const auto& p = params.p2s;
    out_s = run(s, cc, p.ls_w, p.ls_b, p.lc_w, p.lc_b, p);
  }
  if (dir != PcaDirection::P2S) {
    const auto& p = params.s2p;
    out_c = run(cc, s, p.lc_w, p.lc_b, p.ls_w, p.ls_b, p);
  }
  return {out_s, out_c};
}

}  // namespace fd::testing
