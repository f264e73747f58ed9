// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

// Brute-force references for the loss and ranking code.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "clue/autograd.hpp"
#include "clue/downstream.hpp"
#include "clue/ops.hpp"
#include "clue/tensor.hpp"

namespace clue::test {

inline Tensor normalized(Tensor t) {
  for (std::size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    double s = 0.0;
    for (const double v : row) s += v * v;
    for (double& v : row) v /= std::sqrt(s);
  }
  return t;
}

// Direct double loop over the similarity matrix.
inline double brute_clip(const Tensor& a, const Tensor& b, double tau) {
  const std::size_t n = a.rows();
  std::vector<double> logits(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) dot += a(i, k) * b(j, k);
      logits[i * n + j] = tau * dot;
    }
  }
  double rows = 0.0;
  double cols = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double zr = 0.0;
    double zc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      zr += std::exp(logits[i * n + j]);
      zc += std::exp(logits[j * n + i]);
    }
    rows += std::log(zr) - logits[i * n + i];
    cols += std::log(zc) - logits[i * n + i];
  }
  return (rows + cols) / (2.0 * static_cast<double>(n));
}

// Unsharded loss composed from generic graph ops.
inline Var reference_clip(Var a, Var b, double tau) {
  const std::size_t n = a.shape()[0];
  std::vector<std::size_t> index;
  std::vector<std::size_t> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) index.push_back(j);
  }
  std::iota(targets.begin(), targets.end(), 0);
  Var rows = cross_entropy_rows(scale(candidate_scores(a, b, index, n), tau), targets);
  Var cols = cross_entropy_rows(scale(candidate_scores(b, a, index, n), tau), targets);
  return scale(add(rows, cols), 0.5);
}

inline double brute_simclr(const Tensor& z, double tau) {
  const std::size_t m = z.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t partner = i ^ 1u;
    double denom = 0.0;
    double positive = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < z.cols(); ++k) dot += z(i, k) * z(j, k);
      denom += std::exp(tau * dot);
      if (j == partner) positive = tau * dot;
    }
    total += std::log(denom) - positive;
  }
  return total / static_cast<double>(m);
}

// Rank of the positive by sorting every candidate, ties placed ahead of it.
inline std::size_t sorted_rank(std::span<const double> row) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (row[x] != row[y]) return row[x] > row[y];
    return x > y;  // column 0 sorts after its ties
  });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), 0u) - order.begin()) + 1;
}

inline MetricReport brute_metrics(const Tensor& scores, const std::vector<std::size_t>& ks) {
  MetricReport r;
  r.ks = ks;
  r.hr.assign(ks.size(), 0.0);
  r.ndcg.assign(ks.size(), 0.0);
  r.n_cases = scores.rows();
  for (std::size_t c = 0; c < scores.rows(); ++c) {
    const std::size_t rank = sorted_rank(scores.row(c));
    r.mrr += 1.0 / static_cast<double>(rank);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      // Ideal DCG is 1 with a single relevant item.
      double dcg = 0.0;
      for (std::size_t pos = 1; pos <= ks[i]; ++pos) {
        if (pos == rank) dcg += 1.0 / std::log2(static_cast<double>(pos) + 1.0);
      }
      r.hr[i] += rank <= ks[i] ? 1.0 : 0.0;
      r.ndcg[i] += dcg;
    }
  }
  const double n = static_cast<double>(r.n_cases);
  r.mrr /= n;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    r.hr[i] /= n;
    r.ndcg[i] /= n;
  }
  return r;
}

}  // namespace clue::test
