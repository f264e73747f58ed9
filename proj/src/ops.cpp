// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

#include <Eigen/Core>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutStrided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

// Scratch mapped by Eigen; aligned like Tensor storage so results do not
// depend on heap placement.
using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap as_matrix(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

Graph& graph_of(Var v) {
  if (!v.valid()) throw Error("operation on an unbound variable");
  return *v.graph();
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_slope(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

template <class Fn, class Slope>
Var pointwise(Var x, Fn fn, Slope slope) {
  Graph& g = graph_of(x);
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(xv[i]);
  return g.record(std::move(out), {x}, [x, slope](Graph& g, const Tensor& grad) {
    const Tensor& xv = g.value(x);
    Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += grad[i] * slope(xv[i]);
  });
}

}  // namespace

namespace kernels {

void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& c,
          bool accumulate) {
  const std::size_t m = trans_a ? a.cols() : a.rows();
  const std::size_t ka = trans_a ? a.rows() : a.cols();
  const std::size_t kb = trans_b ? b.cols() : b.rows();
  const std::size_t n = trans_b ? b.rows() : b.cols();
  if (ka != kb || c.rows() != m || c.cols() != n) {
    throw DimensionError("gemm: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const ConstMap am = as_matrix(a);
  const ConstMap bm = as_matrix(b);
  MutMap cm = as_matrix(c);
  if (!accumulate) cm.setZero();
  if (trans_a && trans_b) {
    cm.noalias() += am.transpose() * bm.transpose();
  } else if (trans_a) {
    cm.noalias() += am.transpose() * bm;
  } else if (trans_b) {
    cm.noalias() += am * bm.transpose();
  } else {
    cm.noalias() += am * bm;
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " · " +
                         shape_string(b.shape()));
  }
  Tensor c({a.rows(), b.cols()});
  gemm(a, false, b, false, c, false);
  return c;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t n = x.rows();
  const std::size_t m = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = x.data() + r * m;
    double* out = y.data() + r * m;
    const double top = *std::max_element(in, in + m);
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      out[c] = std::exp(in[c] - top);
      total += out[c];
    }
    for (std::size_t c = 0; c < m; ++c) out[c] /= total;
  }
  return y;
}

}  // namespace kernels

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a);
  Tensor out = kernels::matmul(a.value(), b.value());
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& grad) {
    if (g.requires_grad(a)) kernels::gemm(grad, false, g.value(b), true, g.grad(a), true);
    if (g.requires_grad(b)) kernels::gemm(g.value(a), true, grad, false, g.grad(b), true);
  });
}

Var add(Var a, Var b) {
  Graph& g = graph_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return g.record(std::move(out), {a, b}, [a, b](Graph& g, const Tensor& grad) {
    if (g.requires_grad(a)) g.grad(a) += grad;
    if (g.requires_grad(b)) g.grad(b) += grad;
  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank2(xv, "add_bias");
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) + " for input " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  const std::size_t d = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] += bv[c];
  }
  return g.record(std::move(out), {x, bias}, [x, bias](Graph& g, const Tensor& grad) {
    if (g.requires_grad(x)) g.grad(x) += grad;
    if (g.requires_grad(bias)) {
      Tensor& gb = g.grad(bias);
      const std::size_t d = gb.size();
      for (std::size_t i = 0; i < grad.size(); ++i) gb[i % d] += grad[i];
    }
  });
}

Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

Var scale(Var x, double factor) {
  Graph& g = graph_of(x);
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  return g.record(std::move(out), {x}, [x, factor](Graph& g, const Tensor& grad) {
    Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * grad[i];
  });
}

Var gelu(Var x) { return pointwise(x, gelu_value, gelu_slope); }

Var relu(Var x) {
  return pointwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_rank2(xv, "layer_norm");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (d == 0 || gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  }
  auto normalized = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<AlignedBuffer>(n);
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < n; ++r) {
    const double* in = xv.data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += in[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = rstd;
    for (std::size_t c = 0; c < d; ++c) {
      const double xhat = (in[c] - mean) * rstd;
      (*normalized)[r * d + c] = xhat;
      out[r * d + c] = xhat * gv[c] + bv[c];
    }
  }
  return g.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, normalized, inv_std](Graph& g, const Tensor& grad) {
                    const Tensor& xhat = *normalized;
                    const std::size_t n = xhat.rows();
                    const std::size_t d = xhat.cols();
                    const Tensor& gv = g.value(gain);
                    if (g.requires_grad(gain)) {
                      Tensor& gg = g.grad(gain);
                      for (std::size_t i = 0; i < grad.size(); ++i) gg[i % d] += grad[i] * xhat[i];
                    }
                    if (g.requires_grad(bias)) {
                      Tensor& gb = g.grad(bias);
                      for (std::size_t i = 0; i < grad.size(); ++i) gb[i % d] += grad[i];
                    }
                    if (!g.requires_grad(x)) return;
                    Tensor& gx = g.grad(x);
                    std::vector<double> dxhat(d);
                    for (std::size_t r = 0; r < n; ++r) {
                      double mean_d = 0.0;
                      double mean_dx = 0.0;
                      for (std::size_t c = 0; c < d; ++c) {
                        dxhat[c] = grad[r * d + c] * gv[c];
                        mean_d += dxhat[c];
                        mean_dx += dxhat[c] * xhat[r * d + c];
                      }
                      mean_d /= static_cast<double>(d);
                      mean_dx /= static_cast<double>(d);
                      const double rstd = (*inv_std)[r];
                      for (std::size_t c = 0; c < d; ++c) {
                        gx[r * d + c] += rstd * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
                      }
                    }
                  });
}

Var softmax_rows(Var x) {
  Graph& g = graph_of(x);
  require_rank2(x.value(), "softmax_rows");
  Tensor out = kernels::softmax_rows(x.value());
  auto probs = std::make_shared<Tensor>(out);
  return g.record(std::move(out), {x}, [x, probs](Graph& g, const Tensor& grad) {
    const Tensor& y = *probs;
    Tensor& gx = g.grad(x);
    const std::size_t m = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += grad[r * m + c] * y[r * m + c];
      for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += y[r * m + c] * (grad[r * m + c] - dot);
    }
  });
}

Var attention(Var q, Var k, Var v, std::span<const std::uint8_t> mask) {
  Graph& g = graph_of(q);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  require_rank2(qv, "attention");
  require_rank2(kv, "attention");
  require_rank2(vv, "attention");
  const std::size_t nq = qv.rows();
  const std::size_t nk = kv.rows();
  const std::size_t dh = qv.cols();
  if (kv.cols() != dh || vv.rows() != nk) {
    throw DimensionError("attention: q/k/v shapes disagree");
  }
  if (mask.size() != nq * nk) {
    throw DimensionError("attention: mask must be " + std::to_string(nq) + "x" +
                         std::to_string(nk));
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto probs = std::make_shared<Tensor>(Shape{nq, nk});
  Tensor scores({nq, nk});
  kernels::gemm(qv, false, kv, true, scores, false);
  for (std::size_t i = 0; i < nq; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < nk; ++j) {
      if (mask[i * nk + j]) {
        top = std::max(top, scores(i, j) * inv_sqrt);
        any = true;
      }
    }
    if (!any) throw DimensionError("attention: query row " + std::to_string(i) + " is fully masked");
    double total = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      const double p = mask[i * nk + j] ? std::exp(scores(i, j) * inv_sqrt - top) : 0.0;
      (*probs)(i, j) = p;
      total += p;
    }
    for (std::size_t j = 0; j < nk; ++j) (*probs)(i, j) /= total;
  }
  Tensor out = kernels::matmul(*probs, vv);
  return g.record(std::move(out), {q, k, v}, [q, k, v, probs, inv_sqrt](Graph& g, const Tensor& grad) {
    const Tensor& p = *probs;
    if (g.requires_grad(v)) kernels::gemm(p, true, grad, false, g.grad(v), true);
    Tensor dp({p.rows(), p.cols()});
    kernels::gemm(grad, false, g.value(v), true, dp, false);
    Tensor ds(p.shape());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) dot += dp(i, j) * p(i, j);
      for (std::size_t j = 0; j < p.cols(); ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot) * inv_sqrt;
    }
    if (g.requires_grad(q)) kernels::gemm(ds, false, g.value(k), false, g.grad(q), true);
    if (g.requires_grad(k)) kernels::gemm(ds, true, g.value(q), false, g.grad(k), true);
  });
}

Var segment_attention(Var q, Var k, Var v, std::span<const Segment> segments,
                      std::size_t n_heads) {
  Graph& g = graph_of(q);
  const Tensor& qv = q.value();
  require_rank2(qv, "segment_attention");
  require_same_shape(qv, k.value(), "segment_attention");
  require_same_shape(qv, v.value(), "segment_attention");
  const std::size_t d = qv.cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw DimensionError("segment_attention: width " + std::to_string(d) +
                         " not divisible by heads " + std::to_string(n_heads));
  }
  const std::size_t dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // Probabilities for every (segment, head) block, stored back to back.
  auto segs = std::make_shared<std::vector<Segment>>(segments.begin(), segments.end());
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  std::size_t total = 0;
  for (const Segment& s : *segs) {
    if (s.end <= s.begin || s.end > qv.rows()) {
      throw DimensionError("segment_attention: invalid segment");
    }
    offsets->push_back(total);
    total += s.length() * s.length() * n_heads;
  }
  auto probs = std::make_shared<AlignedBuffer>(total);

  Tensor out(qv.shape());
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  for (std::size_t si = 0; si < segs->size(); ++si) {
    const Segment s = (*segs)[si];
    const auto len = static_cast<Eigen::Index>(s.length());
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t base = s.begin * d + h * dh;
      const ConstStrided qh(qv.data() + base, len, dh, Eigen::OuterStride<>(d));
      const ConstStrided kh(kv.data() + base, len, dh, Eigen::OuterStride<>(d));
      const ConstStrided vh(vv.data() + base, len, dh, Eigen::OuterStride<>(d));
      MutMap p(probs->data() + (*offsets)[si] + h * s.length() * s.length(), len, len);
      p.noalias() = qh * kh.transpose();
      p *= inv_sqrt;
      for (Eigen::Index r = 0; r < len; ++r) {
        const double top = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - top).exp();
        p.row(r) /= p.row(r).sum();
      }
      MutStrided oh(out.data() + base, len, dh, Eigen::OuterStride<>(d));
      oh.noalias() = p * vh;
    }
  }

  return g.record(
      std::move(out), {q, k, v},
      [q, k, v, segs, offsets, probs, n_heads, dh, inv_sqrt](Graph& g, const Tensor& grad) {
        const Tensor& qv = g.value(q);
        const Tensor& kv = g.value(k);
        const Tensor& vv = g.value(v);
        const std::size_t d = qv.cols();
        Tensor& gq = g.grad(q);
        Tensor& gk = g.grad(k);
        Tensor& gv = g.grad(v);
        RowMat ds;
        for (std::size_t si = 0; si < segs->size(); ++si) {
          const Segment s = (*segs)[si];
          const auto len = static_cast<Eigen::Index>(s.length());
          for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t base = s.begin * d + h * dh;
            const ConstStrided qh(qv.data() + base, len, dh, Eigen::OuterStride<>(d));
            const ConstStrided kh(kv.data() + base, len, dh, Eigen::OuterStride<>(d));
            const ConstStrided vh(vv.data() + base, len, dh, Eigen::OuterStride<>(d));
            const ConstStrided go(grad.data() + base, len, dh, Eigen::OuterStride<>(d));
            const ConstMap p(probs->data() + (*offsets)[si] + h * s.length() * s.length(), len,
                             len);
            MutStrided gvh(gv.data() + base, len, dh, Eigen::OuterStride<>(d));
            gvh.noalias() += p.transpose() * go;
            ds.noalias() = go * vh.transpose();
            for (Eigen::Index r = 0; r < len; ++r) {
              const double dot = ds.row(r).dot(p.row(r));
              ds.row(r) = (p.row(r).array() * (ds.row(r).array() - dot) * inv_sqrt).matrix();
            }
            MutStrided gqh(gq.data() + base, len, dh, Eigen::OuterStride<>(d));
            MutStrided gkh(gk.data() + base, len, dh, Eigen::OuterStride<>(d));
            gqh.noalias() += ds * kh;
            gkh.noalias() += ds.transpose() * qh;
          }
        }
      });
}

Var l2_normalize_rows(Var x, double eps) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_rank2(xv, "l2_normalize_rows");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  auto denom = std::make_shared<AlignedBuffer>(n);
  auto clamped = std::make_shared<std::vector<char>>(n);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm += xv(r, c) * xv(r, c);
    norm = std::sqrt(norm);
    (*clamped)[r] = norm < eps;
    (*denom)[r] = std::max(norm, eps);
    for (std::size_t c = 0; c < d; ++c) out(r, c) = xv(r, c) / (*denom)[r];
  }
  auto y = std::make_shared<Tensor>(out);
  return g.record(std::move(out), {x}, [x, y, denom, clamped](Graph& g, const Tensor& grad) {
    Tensor& gx = g.grad(x);
    const std::size_t d = y->cols();
    for (std::size_t r = 0; r < y->rows(); ++r) {
      const double inv = 1.0 / (*denom)[r];
      if ((*clamped)[r]) {
        for (std::size_t c = 0; c < d; ++c) gx(r, c) += grad(r, c) * inv;
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += grad(r, c) * (*y)(r, c);
      for (std::size_t c = 0; c < d; ++c) gx(r, c) += (grad(r, c) - (*y)(r, c) * dot) * inv;
    }
  });
}

Var embedding_lookup(Var table, std::span<const std::size_t> ids) {
  Graph& g = graph_of(table);
  const Tensor& tv = table.value();
  require_rank2(tv, "embedding_lookup");
  const std::size_t d = tv.cols();
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) {
      throw DimensionError("embedding_lookup: id " + std::to_string(ids[i]) +
                           " out of range for table with " + std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  auto index = std::make_shared<std::vector<std::size_t>>(ids.begin(), ids.end());
  return g.record(std::move(out), {table}, [table, index](Graph& g, const Tensor& grad) {
    Tensor& gt = g.grad(table);
    const std::size_t d = gt.cols();
    for (std::size_t i = 0; i < index->size(); ++i) {
      double* dst = gt.data() + (*index)[i] * d;
      const double* src = grad.data() + i * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

Var dropout(Var x, double rate, bool training, std::uint64_t key,
            std::span<const std::uint64_t> row_keys) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw DimensionError("dropout: rate must be below 1");
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  if (!row_keys.empty() && row_keys.size() != n) {
    throw DimensionError("dropout: row_keys must have one entry per row");
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<Tensor>(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint64_t row_key = mix_keys(key, row_keys.empty() ? r : row_keys[r]);
    for (std::size_t c = 0; c < d; ++c) {
      const double m = unit_uniform(mix_keys(row_key, c)) < rate ? 0.0 : keep_scale;
      (*mask)[r * d + c] = m;
      out[r * d + c] = xv[r * d + c] * m;
    }
  }
  return g.record(std::move(out), {x}, [x, mask](Graph& g, const Tensor& grad) {
    Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += grad[i] * (*mask)[i];
  });
}

Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets) {
  Graph& g = graph_of(logits);
  const Tensor& lv = logits.value();
  require_rank2(lv, "cross_entropy_rows");
  const std::size_t n = lv.rows();
  const std::size_t m = lv.cols();
  if (targets.size() != n) throw DimensionError("cross_entropy_rows: one target per row required");
  auto probs = std::make_shared<Tensor>(kernels::softmax_rows(lv));
  auto tgt = std::make_shared<std::vector<std::size_t>>(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if ((*tgt)[r] >= m) throw DimensionError("cross_entropy_rows: target out of range");
    const double* row = lv.data() + r * m;
    const double top = *std::max_element(row, row + m);
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) acc += std::exp(row[c] - top);
    total += top + std::log(acc) - row[(*tgt)[r]];
  }
  return g.record(Tensor::scalar(total / static_cast<double>(n)), {logits},
                  [logits, probs, tgt](Graph& g, const Tensor& grad) {
                    Tensor& gl = g.grad(logits);
                    const std::size_t n = probs->rows();
                    const std::size_t m = probs->cols();
                    const double s = grad[0] / static_cast<double>(n);
                    for (std::size_t r = 0; r < n; ++r) {
                      for (std::size_t c = 0; c < m; ++c) {
                        const double onehot = c == (*tgt)[r] ? 1.0 : 0.0;
                        gl(r, c) += s * ((*probs)(r, c) - onehot);
                      }
                    }
                  });
}

Var mean_pool(Var x, std::span<const Segment> segments) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_rank2(xv, "mean_pool");
  const std::size_t d = xv.cols();
  auto segs = std::make_shared<std::vector<Segment>>(segments.begin(), segments.end());
  Tensor out({segs->size(), d});
  for (std::size_t s = 0; s < segs->size(); ++s) {
    const Segment seg = (*segs)[s];
    if (seg.end <= seg.begin || seg.end > xv.rows()) throw DimensionError("mean_pool: empty segment");
    const double inv = 1.0 / static_cast<double>(seg.length());
    for (std::size_t r = seg.begin; r < seg.end; ++r) {
      for (std::size_t c = 0; c < d; ++c) out(s, c) += xv(r, c);
    }
    for (std::size_t c = 0; c < d; ++c) out(s, c) *= inv;
  }
  return g.record(std::move(out), {x}, [x, segs](Graph& g, const Tensor& grad) {
    Tensor& gx = g.grad(x);
    const std::size_t d = gx.cols();
    for (std::size_t s = 0; s < segs->size(); ++s) {
      const Segment seg = (*segs)[s];
      const double inv = 1.0 / static_cast<double>(seg.length());
      for (std::size_t r = seg.begin; r < seg.end; ++r) {
        for (std::size_t c = 0; c < d; ++c) gx(r, c) += grad(s, c) * inv;
      }
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  Graph& g = graph_of(parts[0]);
  const std::size_t d = parts[0].value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.value().cols() != d) throw DimensionError("concat_rows: column counts differ");
    rows += p.value().rows();
  }
  Tensor out({rows, d});
  std::size_t at = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + at);
    at += p.value().size();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return g.record(std::move(out), parts, [saved](Graph& g, const Tensor& grad) {
    std::size_t at = 0;
    for (const Var& p : saved) {
      const std::size_t count = g.value(p).size();
      if (g.requires_grad(p)) {
        Tensor& gp = g.grad(p);
        for (std::size_t i = 0; i < count; ++i) gp[i] += grad[at + i];
      }
      at += count;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  Graph& g = graph_of(parts[0]);
  const std::size_t n = parts[0].value().rows();
  std::size_t width = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != n) throw DimensionError("concat_cols: row counts differ");
    width += p.value().cols();
  }
  Tensor out({n, width});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(pv.data() + r * pv.cols(), pv.cols(), out.data() + r * width + offset);
    }
    offset += pv.cols();
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return g.record(std::move(out), parts, [saved](Graph& g, const Tensor& grad) {
    const std::size_t width = grad.cols();
    std::size_t offset = 0;
    for (const Var& p : saved) {
      const std::size_t pc = g.value(p).cols();
      if (g.requires_grad(p)) {
        Tensor& gp = g.grad(p);
        for (std::size_t r = 0; r < gp.rows(); ++r) {
          for (std::size_t c = 0; c < pc; ++c) gp(r, c) += grad[r * width + offset + c];
        }
      }
      offset += pc;
    }
  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double total = 0.0;
  for (const double v : x.value().values()) total += v;
  return g.record(Tensor::scalar(total), {x}, [x](Graph& g, const Tensor& grad) {
    Tensor& gx = g.grad(x);
    for (double& v : gx.values()) v += grad[0];
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  Graph& g = graph_of(x);
  if (weights.size() != x.value().size()) throw DimensionError("weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) total += x.value()[i] * weights[i];
  auto w = std::make_shared<Tensor>(weights);
  return g.record(Tensor::scalar(total), {x}, [x, w](Graph& g, const Tensor& grad) {
    Tensor& gx = g.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += grad[0] * (*w)[i];
  });
}

Var candidate_scores(Var users, Var items, std::span<const std::size_t> index,
                     std::size_t n_candidates) {
  Graph& g = graph_of(users);
  const Tensor& uv = users.value();
  const Tensor& iv = items.value();
  require_rank2(uv, "candidate_scores");
  require_rank2(iv, "candidate_scores");
  const std::size_t b = uv.rows();
  const std::size_t k = uv.cols();
  if (iv.cols() != k || index.size() != b * n_candidates) {
    throw DimensionError("candidate_scores: shape mismatch");
  }
  Tensor out({b, n_candidates});
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < n_candidates; ++c) {
      const std::size_t item = index[r * n_candidates + c];
      if (item >= iv.rows()) throw DimensionError("candidate_scores: item index out of range");
      double dot = 0.0;
      for (std::size_t t = 0; t < k; ++t) dot += uv(r, t) * iv(item, t);
      out(r, c) = dot;
    }
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(index.begin(), index.end());
  return g.record(std::move(out), {users, items},
                  [users, items, idx, n_candidates](Graph& g, const Tensor& grad) {
                    const Tensor& uv = g.value(users);
                    const Tensor& iv = g.value(items);
                    const std::size_t k = uv.cols();
                    const bool gu = g.requires_grad(users);
                    const bool gi = g.requires_grad(items);
                    for (std::size_t r = 0; r < uv.rows(); ++r) {
                      for (std::size_t c = 0; c < n_candidates; ++c) {
                        const double s = grad(r, c);
                        const std::size_t item = (*idx)[r * n_candidates + c];
                        if (gu) {
                          Tensor& gut = g.grad(users);
                          for (std::size_t t = 0; t < k; ++t) gut(r, t) += s * iv(item, t);
                        }
                        if (gi) {
                          Tensor& git = g.grad(items);
                          for (std::size_t t = 0; t < k; ++t) git(item, t) += s * uv(r, t);
                        }
                      }
                    }
                  });
}

}  // namespace clue
