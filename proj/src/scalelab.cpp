// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/scalelab.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "clue/error.hpp"

namespace clue {

double pf_days(double n_params, double batch, double steps, double seq_len) {
  return 6.0 * n_params * batch * steps * seq_len / kFlopsPerPfDay;
}

PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw DataError("fit_power_law: need at least two points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) throw DataError("fit_power_law: values must be positive");
    mx += std::log(x);
    my += std::log(y);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& [x, y] : points) {
    const double dx = std::log(x) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(y) - my);
  }
  if (sxx == 0.0) throw DataError("fit_power_law: x values must be distinct");
  PowerLawFit fit;
  fit.b = sxy / sxx;
  const double log_a = my - fit.b * mx;
  fit.a = std::exp(log_a);
  double ss = 0.0;
  for (const auto& [x, y] : points) {
    const double r = std::log(y) - (log_a + fit.b * std::log(x));
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("loss_correlation: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

Correlation loss_correlation(std::span<const std::pair<double, double>> pairs) {
  if (pairs.size() < 3) throw DataError("loss_correlation: need at least three pairs");
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [a, b] : pairs) {
    if (!std::isfinite(a) || !std::isfinite(b)) throw DataError("loss_correlation: non-finite value");
    x.push_back(a);
    y.push_back(b);
  }
  Correlation c;
  c.pearson = pearson(x, y);
  c.spearman = pearson(average_ranks(x), average_ranks(y));
  return c;
}

std::string ModelSize::label() const { return std::to_string(embed_dim) + "x" + std::to_string(n_layers); }

std::vector<ModelSize> parse_model_sizes(std::string_view text) {
  std::vector<ModelSize> out;
  std::istringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto x = item.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      std::size_t used = 0;
      ModelSize s;
      s.embed_dim = std::stoul(item.substr(0, x), &used);
      if (used != x) throw std::invalid_argument(item);
      s.n_layers = std::stoul(item.substr(x + 1), &used);
      if (used != item.size() - x - 1) throw std::invalid_argument(item);
      if (s.embed_dim == 0 || s.n_layers == 0) throw std::invalid_argument(item);
      out.push_back(s);
    } catch (const std::exception&) {
      throw ConfigError("model size must look like <embed_dim>x<layers>, got '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("no model sizes given");
  return out;
}

void SweepSpec::validate() const {
  if (model_sizes.empty() || batches.empty() || seq_lens.empty() || data_fractions.empty() || shuffles.empty() ||
      seeds.empty()) {
    throw ConfigError("sweep: every axis needs at least one value");
  }
  for (const double f : data_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("sweep: data fractions must lie in (0, 1]");
  }
  for (const ModelSize& s : model_sizes) {
    if (s.embed_dim == 0 || s.n_layers == 0) throw ConfigError("sweep: model sizes must be positive");
  }
  if (steps == 0) throw ConfigError("sweep: steps must be positive");
  if (!(max_pf_days > 0.0)) throw ConfigError("sweep: max_pf_days must be positive");
}

std::vector<SweepPoint> expand_grid(const SweepSpec& spec) {
  spec.validate();
  std::vector<SweepPoint> grid;
  for (const ModelSize& size : spec.model_sizes) {
    for (const std::size_t batch : spec.batches) {
      for (const std::size_t seq_len : spec.seq_lens) {
        for (const double fraction : spec.data_fractions) {
          for (const bool shuffle : spec.shuffles) {
            for (const std::uint64_t seed : spec.seeds) {
              grid.push_back({grid.size(), size, batch, seq_len, fraction, shuffle, spec.steps, seed});
            }
          }
        }
      }
    }
  }
  return grid;
}

void write_sweep_header(std::ostream& out) {
  out << "run_id,n_params,batch,seq_len,data_fraction,shuffle,steps,pf_days,test_loss,transfer_loss,"
         "transfer_mrr,status\n";
}

void write_sweep_row(std::ostream& out, const RunResult& r) {
  const SweepPoint& p = r.point;
  std::ostringstream row;
  row.precision(10);
  row << p.run_id << ',' << r.n_params << ',' << p.batch << ',' << p.seq_len << ',' << p.data_fraction << ','
      << (p.shuffle ? 1 : 0) << ',' << p.steps << ',' << r.pf_days << ',';
  if (r.ok()) {
    row << r.test_loss << ',' << r.transfer_loss << ',' << r.transfer_mrr << ',';
  } else {
    row << ",,,";
  }
  std::string status = r.status;
  std::replace(status.begin(), status.end(), ',', ';');
  std::replace(status.begin(), status.end(), '\n', ' ');
  row << status << '\n';
  out << row.str();
  out.flush();
}

std::vector<RunResult> run_sweep(const SweepSpec& spec, const ParamCounter& count, const SweepRunner& runner,
                                 std::ostream* csv, const std::function<void(const RunResult&)>& on_result) {
  const std::vector<SweepPoint> grid = expand_grid(spec);
  if (csv) write_sweep_header(*csv);
  std::vector<RunResult> results;
  for (const SweepPoint& point : grid) {
    RunResult r;
    r.point = point;
    try {
      r.n_params = count(point);
      r.pf_days = pf_days(static_cast<double>(r.n_params), static_cast<double>(point.batch),
                          static_cast<double>(point.steps), static_cast<double>(point.seq_len));
      if (r.pf_days > spec.max_pf_days) {
        r.status = "skipped: pf_days over cap";
      } else {
        RunResult done = runner(point);
        done.point = point;
        done.n_params = r.n_params;
        done.pf_days = r.pf_days;
        if (!std::isfinite(done.test_loss) || !std::isfinite(done.transfer_loss)) {
          done.status = "failed: non-finite loss";
        }
        r = std::move(done);
      }
    } catch (const std::exception& e) {
      r.status = std::string("failed: ") + e.what();
    }
    if (csv) write_sweep_row(*csv, r);
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace clue
