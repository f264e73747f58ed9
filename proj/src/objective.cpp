// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

namespace {

double dot(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) acc += x[t] * y[t];
  return acc;
}

void check_pair(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || !a.same_shape(b)) {
    throw DimensionError("contrastive loss: views must share a B×d shape, got " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  if (a.rows() < 2) throw DimensionError("contrastive loss: batch of at least 2 required");
}

// Σ_{i∈rows} CE(tau x_i Y^T, i); gradients of `weight` times that sum are
// accumulated into dx, dy and dtau.
double half_loss(const Tensor& x, const Tensor& y, double tau, Segment rows, double weight, Tensor& dx,
                 Tensor& dy, double& dtau) {
  const std::size_t n = y.rows();
  const std::size_t d = x.cols();
  std::vector<double> logits(n);
  std::vector<double> sims(n);
  double total = 0.0;
  for (std::size_t i = rows.begin; i < rows.end; ++i) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      sims[j] = dot(x.row(i), y.row(j));
      logits[j] = tau * sims[j];
      peak = std::max(peak, logits[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(logits[j] - peak);
    total += peak + std::log(z) - logits[i];
    for (std::size_t j = 0; j < n; ++j) {
      const double g = weight * (std::exp(logits[j] - peak) / z - (i == j ? 1.0 : 0.0));
      dtau += g * sims[j];
      for (std::size_t t = 0; t < d; ++t) {
        dx(i, t) += tau * g * y(j, t);
        dy(j, t) += tau * g * x(i, t);
      }
    }
  }
  return total;
}

}  // namespace

double clamp_tau(double tau, double tau_min, double tau_max) {
  if (std::isnan(tau)) return tau_min;
  return std::min(std::max(tau, tau_min), tau_max);
}

ObjectiveState::ObjectiveState(double tau_init, double tau_min_, double tau_max_)
    : tau("objective.tau", Tensor::scalar(tau_init), false), tau_min(tau_min_), tau_max(tau_max_) {
  if (!(tau_min > 0.0) || !(tau_max >= tau_min)) throw ConfigError("tau bounds must satisfy 0 < tau_min <= tau_max");
  if (!(tau_init > 0.0)) throw ConfigError("tau_init must be positive");
}

ShardLayout ShardLayout::even(std::size_t batch, std::size_t n_workers) {
  if (n_workers == 0 || n_workers > batch) {
    throw DimensionError("shard layout: need 1.." + std::to_string(batch) + " workers, got " +
                         std::to_string(n_workers));
  }
  ShardLayout layout;
  const std::size_t base = batch / n_workers;
  const std::size_t extra = batch % n_workers;
  std::size_t begin = 0;
  for (std::size_t w = 0; w < n_workers; ++w) {
    const std::size_t len = base + (w < extra ? 1 : 0);
    layout.ranges.push_back({begin, begin + len});
    begin += len;
  }
  return layout;
}

void ShardLayout::validate(std::size_t batch) const {
  if (ranges.empty()) throw DimensionError("shard layout: no workers");
  std::size_t expect = 0;
  for (const Segment& r : ranges) {
    if (r.begin != expect || r.end <= r.begin) {
      throw DimensionError("shard layout: ranges must be contiguous, ordered and non-empty");
    }
    expect = r.end;
  }
  if (expect != batch) throw DimensionError("shard layout: ranges do not cover the batch");
}

LossResult sharded_loss(const Tensor& a, const Tensor& b, double tau, const ShardLayout& layout) {
  check_pair(a, b);
  const std::size_t batch = a.rows();
  layout.validate(batch);
  LossResult result{0.0, Tensor(a.shape()), Tensor(b.shape()), 0.0};
  const double weight = 1.0 / (2.0 * static_cast<double>(batch));
  for (const Segment& r : layout.ranges) {
    // Worker-local buffers model the per-device gradients before the reduce.
    Tensor ga(a.shape());
    Tensor gb(b.shape());
    double gtau = 0.0;
    const double s_row = half_loss(a, b, tau, r, weight, ga, gb, gtau);
    const double s_col = half_loss(b, a, tau, r, weight, gb, ga, gtau);
    const double local = (s_row + s_col) / (2.0 * static_cast<double>(r.length()));
    result.loss += static_cast<double>(r.length()) / static_cast<double>(batch) * local;
    result.grad_a += ga;
    result.grad_b += gb;
    result.grad_tau += gtau;
  }
  return result;
}

LossResult clip_symmetric_loss(const Tensor& a, const Tensor& b, double tau) {
  check_pair(a, b);
  return sharded_loss(a, b, tau, ShardLayout::even(a.rows(), 1));
}

LossResult simclr_loss(const Tensor& z, double tau) {
  if (z.rank() != 2 || z.rows() % 2 != 0 || z.rows() < 4) {
    throw DimensionError("simclr loss: need 2N rows with N >= 2, got " + shape_string(z.shape()));
  }
  const std::size_t m = z.rows();
  const std::size_t d = z.cols();
  const double weight = 1.0 / static_cast<double>(m);
  LossResult result{0.0, Tensor(z.shape()), Tensor(), 0.0};
  std::vector<double> sims(m);
  std::vector<double> logits(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t partner = i ^ 1u;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      sims[j] = dot(z.row(i), z.row(j));
      logits[j] = tau * sims[j];
      peak = std::max(peak, logits[j]);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) sum += std::exp(logits[j] - peak);
    }
    result.loss += weight * (peak + std::log(sum) - logits[partner]);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double g = weight * (std::exp(logits[j] - peak) / sum - (j == partner ? 1.0 : 0.0));
      result.grad_tau += g * sims[j];
      for (std::size_t t = 0; t < d; ++t) {
        result.grad_a(i, t) += tau * g * z(j, t);
        result.grad_a(j, t) += tau * g * z(i, t);
      }
    }
  }
  return result;
}

Var clip_loss(Var a, Var b, Var tau, const ShardLayout& layout) {
  Graph& g = *a.graph();
  auto res = std::make_shared<LossResult>(sharded_loss(a.value(), b.value(), tau.value().item(), layout));
  const double loss = res->loss;
  return g.record(Tensor::scalar(loss), {a, b, tau}, [a, b, tau, res](Graph& gr, const Tensor& out) {
    const double s = out.item();
    if (gr.requires_grad(a)) {
      Tensor& ga = gr.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += s * res->grad_a[i];
    }
    if (gr.requires_grad(b)) {
      Tensor& gb = gr.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += s * res->grad_b[i];
    }
    if (gr.requires_grad(tau)) gr.grad(tau)[0] += s * res->grad_tau;
  });
}

Var simclr_loss(Var z, Var tau) {
  Graph& g = *z.graph();
  auto res = std::make_shared<LossResult>(simclr_loss(z.value(), tau.value().item()));
  const double loss = res->loss;
  return g.record(Tensor::scalar(loss), {z, tau}, [z, tau, res](Graph& gr, const Tensor& out) {
    const double s = out.item();
    if (gr.requires_grad(z)) {
      Tensor& gz = gr.grad(z);
      for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += s * res->grad_a[i];
    }
    if (gr.requires_grad(tau)) gr.grad(tau)[0] += s * res->grad_tau;
  });
}

std::string_view to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::crop: return "crop";
    case AugmentKind::mask: return "mask";
    case AugmentKind::reorder: return "reorder";
  }
  return "?";
}

std::vector<ItemTokenRow> augment(std::span<const ItemTokenRow> seq, AugmentKind kind, double rate,
                                  std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("augment: rate must lie in [0, 1]");
  std::vector<ItemTokenRow> out(seq.begin(), seq.end());
  const std::size_t n = out.size();
  if (rate == 0.0 || n == 0) return out;
  Rng rng(derive_key(seed, 0xa06u, static_cast<std::uint64_t>(kind)));
  switch (kind) {
    case AugmentKind::crop: {
      if (n < 2) return out;
      const auto keep = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround((1.0 - rate) * static_cast<double>(n))), 1, n);
      const std::size_t start = rng.index(n - keep + 1);
      return {out.begin() + static_cast<std::ptrdiff_t>(start),
              out.begin() + static_cast<std::ptrdiff_t>(start + keep)};
    }
    case AugmentKind::mask: {
      std::vector<std::pair<std::size_t, std::size_t>> tokens;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t p = 0; p < out[r].ids.size(); ++p) {
          if (out[r].ids[p] != kPadId) tokens.emplace_back(r, p);
        }
      }
      const auto k = std::min(tokens.size(), static_cast<std::size_t>(std::llround(rate * static_cast<double>(tokens.size()))));
      for (const std::size_t t : rng.sample_without_replacement(tokens.size(), k)) {
        auto [r, p] = tokens[t];
        if (out[r].true_length <= 1) continue;
        out[r].ids[p] = kPadId;
        --out[r].true_length;
      }
      return out;
    }
    case AugmentKind::reorder: {
      const auto window = std::min(n, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n))));
      if (window < 2) return out;
      const std::size_t start = rng.index(n - window + 1);
      std::span<ItemTokenRow> part(out.data() + start, window);
      rng.shuffle(part);
      return out;
    }
  }
  return out;
}

std::vector<ItemTokenRow> augment_view(std::span<const ItemTokenRow> seq, double rate, std::uint64_t seed) {
  std::vector<ItemTokenRow> v = augment(seq, AugmentKind::crop, rate, seed);
  v = augment(v, AugmentKind::mask, rate, seed);
  return augment(v, AugmentKind::reorder, rate, seed);
}

}  // namespace clue
