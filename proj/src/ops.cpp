#include "fishdreamer/ops.hpp"

#include <cmath>

#include "fishdreamer/errors.hpp"
#include "fishdreamer/kernels.hpp"

namespace fd::ops {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;
using Index = std::int64_t;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

std::span<float> grad_of(const NodePtr& n) {
  auto& g = n->grad_buffer();
  return {g.data(), g.size()};
}

void record(std::initializer_list<const Tensor*> inputs, const Tensor& out, BackwardFn fn) {
  std::vector<const Tensor*> in;
  for (const auto* t : inputs) {
    if (t && t->defined()) in.push_back(t);
  }
  active_tape()->record(in, out, std::move(fn));
}

std::size_t trailing(const Tensor& x) { return x.shape().back(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor r(a.shape(), std::move(out));
  if (should_record({&a, &b})) {
    record({&a, &b}, r, [an = a.node(), bn = b.node()](std::span<const float> g) {
      for (const auto& n : {an, bn}) {
        if (!n->requires_grad) continue;
        auto d = grad_of(n);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    });
  }
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Tensor r(a.shape(), std::move(out));
  if (should_record({&a, &b})) {
    record({&a, &b}, r, [an = a.node(), bn = b.node()](std::span<const float> g) {
      if (an->requires_grad) {
        auto d = grad_of(an);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (bn->requires_grad) {
        auto d = grad_of(bn);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
      }
    });
  }
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor r(a.shape(), std::move(out));
  if (should_record({&a, &b})) {
    record({&a, &b}, r, [an = a.node(), bn = b.node()](std::span<const float> g) {
      if (an->requires_grad) {
        auto d = grad_of(an);
        const auto& o = *bn->data;
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * o[i];
      }
      if (bn->requires_grad) {
        auto d = grad_of(bn);
        const auto& o = *an->data;
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * o[i];
      }
    });
  }
  return r;
}

Tensor scale(const Tensor& a, float s) {
  std::vector<float> out(a.numel());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
  Tensor r(a.shape(), std::move(out));
  if (should_record({&a})) {
    record({&a}, r, [an = a.node(), s](std::span<const float> g) {
      auto d = grad_of(an);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s;
    });
  }
  return r;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t c = trailing(x);
  if (bias.rank() != 1 || bias.dim(0) != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  std::vector<float> out(x.numel());
  auto xv = x.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % c];
  Tensor r(x.shape(), std::move(out));
  if (should_record({&x, &bias})) {
    record({&x, &bias}, r, [xn = x.node(), bn = bias.node(), c](std::span<const float> g) {
      if (xn->requires_grad) {
        auto d = grad_of(xn);
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
      if (bn->requires_grad) {
        std::vector<double> acc(c, 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) acc[i % c] += g[i];
        auto d = grad_of(bn);
        for (std::size_t j = 0; j < c; ++j) d[j] += static_cast<float>(acc[j]);
      }
    });
  }
  return r;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor r(Shape{m, n});
  kernels::matmul(a.data(), b.data(), r.mutable_data(), m, k, n);
  if (should_record({&a, &b})) {
    record({&a, &b}, r, [an = a.node(), bn = b.node(), m, k, n](std::span<const float> g) {
      if (an->requires_grad) kernels::matmul_nt(g, *bn->data, grad_of(an), m, n, k, true);
      if (bn->requires_grad) kernels::matmul_tn(*an->data, g, grad_of(bn), k, m, n, true);
    });
  }
  return r;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
  }
  Shape out_shape = x.shape();
  const std::size_t rows = x.numel() / w.dim(0);
  out_shape.back() = w.dim(1);
  Tensor flat = reshape(x, Shape{rows, w.dim(0)});
  Tensor y = matmul(flat, w);
  if (b.defined()) y = add_bias(y, b);
  return reshape(y, out_shape);
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw DimensionError("bmm: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor r(Shape{bs, m, n});
  kernels::bmm(a.data(), b.data(), r.mutable_data(), bs, m, k, n);
  if (should_record({&a, &b})) {
    record({&a, &b}, r,
           [an = a.node(), bn = b.node(), bs, m, k, n](std::span<const float> g) {
             if (an->requires_grad) kernels::bmm_nt(g, *bn->data, grad_of(an), bs, m, n, k, true);
             if (bn->requires_grad) kernels::bmm_tn(*an->data, g, grad_of(bn), bs, k, m, n, true);
           });
  }
  return r;
}

Tensor bmm_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw DimensionError("bmm_nt: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()) + "^T");
  }
  const std::size_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  Tensor r(Shape{bs, m, n});
  kernels::bmm_nt(a.data(), b.data(), r.mutable_data(), bs, m, k, n);
  if (should_record({&a, &b})) {
    record({&a, &b}, r,
           [an = a.node(), bn = b.node(), bs, m, k, n](std::span<const float> g) {
             // dA = G B, dB = G^T A
             if (an->requires_grad) kernels::bmm(g, *bn->data, grad_of(an), bs, m, n, k, true);
             if (bn->requires_grad) kernels::bmm_tn(g, *an->data, grad_of(bn), bs, n, m, k, true);
           });
  }
  return r;
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = trailing(x);
  const std::size_t rows = x.numel() / n;
  Tensor r(x.shape());
  kernels::softmax_rows(x.data(), r.mutable_data(), rows, n);
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node(), y = r.node()->data, rows, n](std::span<const float> g) {
      kernels::softmax_rows_backward(*y, g, grad_of(xn), rows, n);
    });
  }
  return r;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::size_t c = trailing(x);
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm: affine params " + shape_str(gamma.shape()) +
                         " do not match input " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / c;
  Tensor r(x.shape());
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto rstd = std::make_shared<std::vector<float>>(rows);
  kernels::layer_norm_rows(x.data(), gamma.data(), beta.data(), eps, r.mutable_data(), *xhat,
                           *rstd, rows, c);
  if (should_record({&x, &gamma, &beta})) {
    record({&x, &gamma, &beta}, r,
           [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat, rstd, rows,
            c](std::span<const float> g) {
             std::span<float> dx, dg, db;
             if (xn->requires_grad) dx = grad_of(xn);
             if (gn->requires_grad) dg = grad_of(gn);
             if (bn->requires_grad) db = grad_of(bn);
             kernels::layer_norm_rows_backward(g, *xhat, *rstd, *gn->data, dx, dg, db, rows, c);
           });
  }
  return r;
}

Tensor gelu(const Tensor& x) {
  Tensor r(x.shape());
  kernels::gelu(x.data(), r.mutable_data());
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node()](std::span<const float> g) {
      auto d = grad_of(xn);
      const auto& xv = *xn->data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * kernels::gelu_derivative_scalar(xv[i]);
    });
  }
  return r;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->id = detail::next_node_id();
  node->shape = std::move(shape);
  node->data = x.node()->data;
  Tensor r = Tensor::from_node(std::move(node));
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node()](std::span<const float> g) {
      auto d = grad_of(xn);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    });
  }
  return r;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  if (axes.size() != rank) throw DimensionError("permute: axis count does not match rank");
  std::vector<bool> seen(rank, false);
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (axes[i] >= rank || seen[axes[i]]) throw DimensionError("permute: invalid axes");
    seen[axes[i]] = true;
    out_shape[i] = in[axes[i]];
  }
  std::vector<std::size_t> in_stride(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_stride[i - 1] = in_stride[i] * in[i];
  const std::size_t n = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> counter(rank, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < rank; ++i) off += counter[i] * in_stride[axes[i]];
    (*src)[o] = off;
    for (std::size_t i = rank; i-- > 0;) {
      if (++counter[i] < out_shape[i]) break;
      counter[i] = 0;
    }
  }
  std::vector<float> out(n);
  auto xv = x.data();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[(*src)[o]];
  Tensor r(out_shape, std::move(out));
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node(), src](std::span<const float> g) {
      auto d = grad_of(xn);
      for (std::size_t o = 0; o < g.size(); ++o) d[(*src)[o]] += g[o];
    });
  }
  return r;
}

RowIndex make_row_index(std::vector<std::int64_t> idx) {
  return std::make_shared<const std::vector<std::int64_t>>(std::move(idx));
}

Tensor gather_rows(const Tensor& x, const RowIndex& idx) {
  const std::size_t in_rows = x.dim(0);
  const std::size_t width = x.numel() / in_rows;
  for (auto i : *idx) {
    if (i >= static_cast<std::int64_t>(in_rows)) {
      throw DimensionError("gather_rows: index " + std::to_string(i) + " out of range for " +
                           shape_str(x.shape()));
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = idx->size();
  std::vector<float> out(shape_numel(out_shape), 0.0f);
  auto xv = x.data();
  const auto rows = static_cast<Index>(idx->size());
#pragma omp parallel for schedule(static) if (out.size() >= (1u << 16))
  for (Index r = 0; r < rows; ++r) {
    const auto s = (*idx)[r];
    if (s < 0) continue;
    std::copy_n(xv.data() + s * width, width, out.data() + r * width);
  }
  Tensor r(out_shape, std::move(out));
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node(), idx, width](std::span<const float> g) {
      auto d = grad_of(xn);
      for (std::size_t r = 0; r < idx->size(); ++r) {
        const auto s = (*idx)[r];
        if (s < 0) continue;
        float* dst = d.data() + s * width;
        const float* src = g.data() + r * width;
        for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
      }
    });
  }
  return r;
}

Tensor mix_rows(const Tensor& x, const RowMixPtr& mix) {
  if (x.dim(0) != mix->in_rows) {
    throw DimensionError("mix_rows: expects " + std::to_string(mix->in_rows) +
                         " input rows, got " + shape_str(x.shape()));
  }
  const std::size_t width = x.numel() / mix->in_rows;
  Shape out_shape = x.shape();
  out_shape[0] = mix->out_rows();
  std::vector<float> out(shape_numel(out_shape), 0.0f);
  auto xv = x.data();
  const auto rows = static_cast<Index>(mix->out_rows());
#pragma omp parallel for schedule(static) if (out.size() >= (1u << 16))
  for (Index r = 0; r < rows; ++r) {
    float* dst = out.data() + r * width;
    for (std::size_t e = mix->offsets[r]; e < mix->offsets[r + 1]; ++e) {
      const float w = mix->weights[e];
      const float* src = xv.data() + mix->cols[e] * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += w * src[j];
    }
  }
  Tensor r(out_shape, std::move(out));
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node(), mix, width](std::span<const float> g) {
      auto d = grad_of(xn);
      for (std::size_t r = 0; r < mix->out_rows(); ++r) {
        const float* src = g.data() + r * width;
        for (std::size_t e = mix->offsets[r]; e < mix->offsets[r + 1]; ++e) {
          const float w = mix->weights[e];
          float* dst = d.data() + mix->cols[e] * width;
          for (std::size_t j = 0; j < width; ++j) dst[j] += w * src[j];
        }
      }
    });
  }
  return r;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> spans;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    }
    spans.push_back(s[axis] * inner);
    out_shape[axis] += s[axis];
  }
  const std::size_t row = out_shape[axis] * inner;
  std::vector<float> out(shape_numel(out_shape));
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * spans[p], spans[p], out.data() + o * row + col);
    }
    col += spans[p];
  }
  Tensor r(out_shape, std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && active_tape()) {
    std::vector<const Tensor*> ins;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
      ins.push_back(&p);
      nodes.push_back(p.node());
    }
    active_tape()->record(ins, r, [nodes, spans, outer, row](std::span<const float> g) {
      std::size_t c = 0;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        if (nodes[p]->requires_grad) {
          auto d = grad_of(nodes[p]);
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t j = 0; j < spans[p]; ++j) d[o * spans[p] + j] += g[o * row + c + j];
          }
        }
        c += spans[p];
      }
    });
  }
  return r;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  Tensor r = Tensor::scalar(static_cast<float>(s));
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node()](std::span<const float> g) {
      auto d = grad_of(xn);
      for (auto& v : d) v += g[0];
    });
  }
  return r;
}

Tensor mean(const Tensor& x) {
  double s = 0.0;
  for (float v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  Tensor r = Tensor::scalar(static_cast<float>(s / n));
  if (should_record({&x})) {
    record({&x}, r, [xn = x.node(), n](std::span<const float> g) {
      auto d = grad_of(xn);
      const auto step = static_cast<float>(g[0] / n);
      for (auto& v : d) v += step;
    });
  }
  return r;
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  auto pv = pred.data();
  auto tv = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) s += std::abs(static_cast<double>(pv[i]) - tv[i]);
  const double count = static_cast<double>(pv.size());
  Tensor r = Tensor::scalar(static_cast<float>(s / count));
  if (should_record({&pred})) {
    record({&pred}, r,
           [pn = pred.node(), tn = target.node(), count](std::span<const float> g) {
             auto d = grad_of(pn);
             const auto& p = *pn->data;
             const auto& t = *tn->data;
             const float step = static_cast<float>(g[0] / count);
             for (std::size_t i = 0; i < d.size(); ++i) {
               if (p[i] > t[i]) d[i] += step;
               else if (p[i] < t[i]) d[i] -= step;
             }
           });
  }
  return r;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels,
                     std::int32_t ignore_index) {
  const std::size_t k = trailing(logits);
  const std::size_t rows = logits.numel() / k;
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (auto l : labels) {
    if (l == ignore_index) continue;
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(l) + " outside [0," +
                          std::to_string(k) + ")");
    }
  }
  auto probs = std::make_shared<std::vector<float>>(logits.numel());
  kernels::softmax_rows(logits.data(), *probs, rows, k);
  auto lv = logits.data();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] == ignore_index) continue;
    const float* row = lv.data() + r * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max<double>(mx, row[j]);
    double se = 0.0;
    for (std::size_t j = 0; j < k; ++j) se += std::exp(row[j] - mx);
    total += std::log(se) + mx - row[labels[r]];
    ++count;
  }
  const double denom = count ? static_cast<double>(count) : 1.0;
  Tensor r = Tensor::scalar(static_cast<float>(total / denom));
  if (should_record({&logits})) {
    auto lab = std::make_shared<std::vector<std::int32_t>>(labels.begin(), labels.end());
    record({&logits}, r,
           [ln = logits.node(), probs, lab, k, rows, denom, ignore_index](std::span<const float> g) {
             auto d = grad_of(ln);
             const double s = g[0] / denom;
             for (std::size_t r = 0; r < rows; ++r) {
               const auto y = (*lab)[r];
               if (y == ignore_index) continue;
               for (std::size_t j = 0; j < k; ++j) {
                 const double t = (*probs)[r * k + j] - (static_cast<std::int32_t>(j) == y ? 1.0 : 0.0);
                 d[r * k + j] += static_cast<float>(s * t);
               }
             }
           });
  }
  return r;
}

}  // namespace fd::ops
