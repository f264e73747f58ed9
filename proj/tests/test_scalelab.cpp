// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "clue/error.hpp"
#include "clue/random.hpp"
#include "clue/scalelab.hpp"

namespace clue {
namespace {

using Points = std::vector<std::pair<double, double>>;

TEST(Scalelab, PfDays) {
  EXPECT_NEAR(pf_days(1.6e8, 256, 1e5, 128), 0.036409, 5e-7);
  EXPECT_DOUBLE_EQ(pf_days(1.0, 1.0, 1.0, 1.0) * kFlopsPerPfDay, 6.0);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const double n = rng.uniform(1e3, 1e9);
    const double b = rng.uniform(1, 512);
    const double s = rng.uniform(1, 1e5);
    const double l = rng.uniform(1, 2048);
    const double base = pf_days(n, b, s, l);
    EXPECT_NEAR(pf_days(2 * n, b, s, l), 2 * base, 1e-12 * base);
    EXPECT_NEAR(pf_days(n, 3 * b, s, l), 3 * base, 1e-12 * base);
    EXPECT_NEAR(pf_days(n, b, 5 * s, l), 5 * base, 1e-12 * base);
    EXPECT_NEAR(pf_days(n, b, s, 7 * l), 7 * base, 1e-12 * base);
  }
}

TEST(Scalelab, PowerLawExact) {
  const Points pts{{1.0, 2.0}, {2.0, 1.0}, {4.0, 0.5}};
  const PowerLawFit fit = fit_power_law(pts);
  EXPECT_NEAR(fit.a, 2.0, 1e-12);
  EXPECT_NEAR(fit.b, -1.0, 1e-12);
  EXPECT_LT(fit.residual, 1e-12);
}

TEST(Scalelab, PowerLawNoisy) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Points pts;
    for (int i = 0; i < 10; ++i) {
      const double x = std::pow(10.0, -4.0 + 0.4 * i);
      pts.emplace_back(x, 3.0 * std::pow(x, -0.5) * (1.0 + 0.01 * rng.normal()));
    }
    const PowerLawFit fit = fit_power_law(pts);
    EXPECT_GE(fit.b, -0.55);
    EXPECT_LE(fit.b, -0.45);
    EXPECT_NEAR(fit.a, 3.0, 0.3);
  }
}

TEST(Scalelab, PowerLawErrors) {
  EXPECT_THROW(fit_power_law(Points{{1.0, 1.0}}), DataError);
  EXPECT_THROW(fit_power_law(Points{{1.0, 1.0}, {-1.0, 2.0}}), DataError);
  EXPECT_THROW(fit_power_law(Points{{2.0, 1.0}, {2.0, 3.0}}), DataError);
}

double brute_pearson(const Points& p) {
  double mx = 0, my = 0;
  for (const auto& [x, y] : p) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(p.size());
  my /= static_cast<double>(p.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (const auto& [x, y] : p) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Average rank by counting, O(n^2).
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (const double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

TEST(Scalelab, CorrelationBruteForce) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Points p;
    std::vector<double> xs;
    std::vector<double> ys;
    for (int i = 0; i < 12; ++i) {
      const double x = std::floor(rng.uniform() * 6.0);
      const double y = x + rng.normal();
      p.emplace_back(x, y);
      xs.push_back(x);
      ys.push_back(y);
    }
    const auto rx = brute_ranks(xs);
    const auto ry = brute_ranks(ys);
    Points ranked;
    for (std::size_t i = 0; i < rx.size(); ++i) ranked.emplace_back(rx[i], ry[i]);
    const Correlation c = loss_correlation(p);
    EXPECT_NEAR(c.pearson, brute_pearson(p), 1e-12);
    EXPECT_NEAR(c.spearman, brute_pearson(ranked), 1e-12);
  }
}

TEST(Scalelab, CorrelationAnchors) {
  const Points up{{1, 1}, {2, 4}, {3, 9}, {4, 16}};
  EXPECT_NEAR(loss_correlation(up).spearman, 1.0, 1e-15);
  const Points down{{1, 3}, {2, 2}, {3, 1}};
  EXPECT_NEAR(loss_correlation(down).pearson, -1.0, 1e-15);
}

TEST(Scalelab, ModelSizes) {
  const auto sizes = parse_model_sizes("16x1, 32x2,64x4");
  ASSERT_EQ(sizes.size(), 3u);
  EXPECT_EQ(sizes[1].embed_dim, 32u);
  EXPECT_EQ(sizes[1].n_layers, 2u);
  EXPECT_EQ(sizes[2].label(), "64x4");
  for (const char* bad : {"", "16", "16x", "x2", "16x0", "ax2"}) EXPECT_THROW(parse_model_sizes(bad), ConfigError) << bad;
}

SweepSpec small_spec() {
  SweepSpec s;
  s.model_sizes = parse_model_sizes("8x1,16x1");
  s.batches = {4, 8};
  s.seq_lens = {16};
  s.data_fractions = {0.5, 1.0};
  s.steps = 10;
  s.max_pf_days = 1.0;
  return s;
}

TEST(Scalelab, GridOrder) {
  const auto grid = expand_grid(small_spec());
  ASSERT_EQ(grid.size(), 8u);
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_EQ(grid[i].run_id, i);
  EXPECT_EQ(grid[0].size.embed_dim, 8u);
  EXPECT_EQ(grid[7].size.embed_dim, 16u);
  EXPECT_EQ(grid[1].data_fraction, 1.0);
  EXPECT_EQ(grid[2].batch, 8u);
  SweepSpec bad = small_spec();
  bad.data_fractions = {1.5};
  EXPECT_THROW(expand_grid(bad), ConfigError);
}

TEST(Scalelab, SweepRecordsSkipsAndFailures) {
  SweepSpec spec = small_spec();
  // 6 * N * 8 * 10 * 16 / 8.64e19 exceeds this cap only for the larger model at batch 8.
  spec.max_pf_days = 6.0 * 1000 * 8 * 10 * 16 / kFlopsPerPfDay * 1.5;
  auto count = [](const SweepPoint& p) { return p.size.embed_dim == 8 ? std::size_t{1000} : std::size_t{2000}; };
  auto runner = [](const SweepPoint& p) {
    if (p.run_id == 1) throw std::runtime_error("diverged, badly\nat step 3");
    RunResult r;
    r.test_loss = 1.0 / static_cast<double>(p.batch);
    r.transfer_loss = 2.0;
    r.transfer_mrr = 0.1;
    return r;
  };
  std::ostringstream csv;
  std::vector<std::size_t> seen;
  const auto results = run_sweep(spec, count, runner, &csv, [&](const RunResult& r) { seen.push_back(r.point.run_id); });
  ASSERT_EQ(results.size(), 8u);
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_FALSE(results[1].ok());
  EXPECT_NE(results[1].status.find("diverged"), std::string::npos);
  EXPECT_TRUE(results[0].ok());
  EXPECT_EQ(results[0].n_params, 1000u);
  EXPECT_GT(results[0].pf_days, 0.0);
  EXPECT_TRUE(results[4].ok());
  EXPECT_EQ(results[6].status.rfind("skipped", 0), 0u);
  EXPECT_EQ(results[7].status.rfind("skipped", 0), 0u);

  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "run_id,n_params,batch,seq_len,data_fraction,shuffle,steps,pf_days,test_loss,transfer_loss,"
            "transfer_mrr,status");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 11) << line;
  }
  EXPECT_EQ(rows, 8u);
}

}  // namespace
}  // namespace clue
