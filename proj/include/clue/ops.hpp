// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "clue/autograd.hpp"
#include "clue/tensor.hpp"

namespace clue {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kNormalizeEps = 1e-12;

/// Half-open row range [begin, end) of a packed batch.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const noexcept { return end - begin; }
};

namespace kernels {

// c = op(a) * op(b) (+ c when accumulate). a, b, c are rank-2 row-major.
void gemm(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& c,
          bool accumulate);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);

}  // namespace kernels

Var matmul(Var a, Var b);
Var add(Var a, Var b);
// x[n×d] + bias[d] broadcast over rows.
Var add_bias(Var x, Var bias);
Var linear(Var x, Var weight, Var bias);
Var scale(Var x, double factor);
Var gelu(Var x);
Var relu(Var x);
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
Var softmax_rows(Var x);

// Single-head scaled dot-product attention. mask is n_q×n_k row-major; a zero
// entry hides that key from that query. A query with no visible key throws.
Var attention(Var q, Var k, Var v, std::span<const std::uint8_t> mask);

// Multi-head bidirectional self-attention over packed sequences: rows of
// different segments never attend to each other.
Var segment_attention(Var q, Var k, Var v, std::span<const Segment> segments,
                      std::size_t n_heads);

Var l2_normalize_rows(Var x, double eps = kNormalizeEps);

// Row gather with scatter-add backward.
Var embedding_lookup(Var table, std::span<const std::size_t> ids);

// Inverted dropout. Element (r, c) is dropped iff a counter-based uniform
// keyed by (key, row_keys[r], c) falls below rate; row_keys defaults to the
// row index. Identity when !training or rate == 0.
Var dropout(Var x, double rate, bool training, std::uint64_t key,
            std::span<const std::uint64_t> row_keys = {});

// Mean over rows of -log softmax(logits)[target].
Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets);

Var mean_pool(Var x, std::span<const Segment> segments);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var sum(Var x);
// Σ x ⊙ weights, a scalar.
Var weighted_sum(Var x, const Tensor& weights);

// out[b, c] = users[b] · items[index[b*n_candidates + c]]
Var candidate_scores(Var users, Var items, std::span<const std::size_t> index,
                     std::size_t n_candidates);

}  // namespace clue
