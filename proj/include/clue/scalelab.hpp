// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clue {

inline constexpr double kFlopsPerPfDay = 8.64e19;

// 6 * N * B * S * L / 8.64e19.
double pf_days(double n_params, double batch, double steps, double seq_len);

struct PowerLawFit {
  double a = 0.0;         // coefficient
  double b = 0.0;         // exponent
  double residual = 0.0;  // RMS residual in log space
};

// Least squares on (ln x, ln y) for y = a * x^b.
PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points);

struct Correlation {
  double pearson = 0.0;
  double spearman = 0.0;
};

// Spearman uses average ranks for ties.
Correlation loss_correlation(std::span<const std::pair<double, double>> pairs);

struct ModelSize {
  std::size_t embed_dim = 0;
  std::size_t n_layers = 0;

  std::string label() const;  // "<d>x<layers>"
};

// Parses "16x1,32x2"; heads and ffn width follow from embed_dim.
std::vector<ModelSize> parse_model_sizes(std::string_view text);

struct SweepSpec {
  std::vector<ModelSize> model_sizes;
  std::vector<std::size_t> batches;
  std::vector<std::size_t> seq_lens;
  std::vector<double> data_fractions;
  std::vector<bool> shuffles{true};
  std::size_t steps = 100;
  std::vector<std::uint64_t> seeds{0};
  double max_pf_days = 1e-3;

  void validate() const;
};

struct SweepPoint {
  std::size_t run_id = 0;
  ModelSize size;
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  double data_fraction = 1.0;
  bool shuffle = true;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

struct RunResult {
  SweepPoint point;
  std::size_t n_params = 0;
  double pf_days = 0.0;
  double test_loss = 0.0;
  double transfer_loss = 0.0;
  double transfer_mrr = 0.0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

// Grid in row-major order over sizes, batches, seq_lens, fractions, shuffles, seeds.
std::vector<SweepPoint> expand_grid(const SweepSpec& spec);

// Executes one point; fills n_params, losses and mrr. Throwing marks the run failed.
using SweepRunner = std::function<RunResult(const SweepPoint&)>;
// Reports parameter count for the pf_days guard before a run starts.
using ParamCounter = std::function<std::size_t(const SweepPoint&)>;

/// Runs every grid point, in order. A point over the pf_days cap is recorded
/// as skipped; an exception is recorded as failed and the sweep continues.
/// Each row is written to `csv` (header first) as soon as its run ends.
std::vector<RunResult> run_sweep(const SweepSpec& spec, const ParamCounter& count, const SweepRunner& runner,
                                 std::ostream* csv = nullptr,
                                 const std::function<void(const RunResult&)>& on_result = {});

void write_sweep_header(std::ostream& out);
void write_sweep_row(std::ostream& out, const RunResult& r);

}  // namespace clue
