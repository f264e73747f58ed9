// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "clue/autograd.hpp"
#include "clue/ops.hpp"
#include "clue/tensor.hpp"
#include "clue/tokenizer.hpp"

namespace clue {

inline constexpr double kTauInit = 14.27;
inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 100.0;

double clamp_tau(double tau, double tau_min = kTauMin, double tau_max = kTauMax);

/// Learnable multiplicative logit scale. Excluded from weight decay.
struct ObjectiveState {
  explicit ObjectiveState(double tau_init = kTauInit, double tau_min = kTauMin,
                          double tau_max = kTauMax);

  double value() const { return tau.value[0]; }
  void set(double v) { tau.value[0] = v; }
  // Applied after every optimizer step.
  void clamp() { set(clamp_tau(value(), tau_min, tau_max)); }

  Parameter tau;
  double tau_min;
  double tau_max;
};

/// Contiguous row ranges, one per logical worker.
struct ShardLayout {
  std::vector<Segment> ranges;

  // W near-equal contiguous ranges over [0, batch); the first batch % W get one extra row.
  static ShardLayout even(std::size_t batch, std::size_t n_workers);
  // Throws DimensionError unless the ranges partition [0, batch) in order
  // with at least one row each.
  void validate(std::size_t batch) const;
};

struct LossResult {
  double loss = 0.0;
  Tensor grad_a;    // d loss / d a
  Tensor grad_b;    // d loss / d b (empty for single-matrix losses)
  double grad_tau = 0.0;
};

/// Symmetric CLIP loss: L = tau * A B^T,
/// loss = (mean_i CE(L_i., i) + mean_j CE(L_.j, j)) / 2.
LossResult clip_symmetric_loss(const Tensor& a, const Tensor& b, double tau);

/// The same loss computed by W logical workers. Each worker sees every
/// embedding (all-gather) but evaluates only the cross-entropy terms of its
/// own rows and columns; its gradient reaches local and remote embeddings.
/// Worker losses are combined weighted by their share of the batch and
/// gradients are summed in worker order.
LossResult sharded_loss(const Tensor& a, const Tensor& b, double tau, const ShardLayout& layout);

/// NT-Xent over 2N rows where rows 2i and 2i+1 are the two views of example i:
/// each anchor's partner competes against the other 2N - 2 rows (self excluded).
LossResult simclr_loss(const Tensor& z, double tau);

// Differentiable wrappers for use inside a single graph.
Var clip_loss(Var a, Var b, Var tau, const ShardLayout& layout);
Var simclr_loss(Var z, Var tau);

enum class AugmentKind { crop, mask, reorder };
std::string_view to_string(AugmentKind kind);

/// crop keeps a random contiguous run of round((1 - rate) n) items; mask sets
/// round(rate * tokens) token ids to pad (a row never loses its last token);
/// reorder shuffles a random window of ceil(rate * n) items. Degenerate
/// inputs (rate 0, fewer than two items for crop/reorder) are returned unchanged.
std::vector<ItemTokenRow> augment(std::span<const ItemTokenRow> seq, AugmentKind kind, double rate,
                                  std::uint64_t seed);

// One SimCLR view: crop, mask, then reorder, each at `rate`.
std::vector<ItemTokenRow> augment_view(std::span<const ItemTokenRow> seq, double rate, std::uint64_t seed);

}  // namespace clue
