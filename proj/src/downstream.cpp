// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/downstream.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "clue/error.hpp"
#include "clue/ops.hpp"
#include "clue/random.hpp"

namespace clue {

static_assert(std::endian::native == std::endian::little, "feature IO assumes a little-endian host");

std::optional<std::size_t> FeatureTable::find(const std::string& user_id) const {
  const auto it = index_.find(user_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void FeatureTable::add(const std::string& user_id, std::span<const double> features) {
  if (features.size() != dim_) {
    throw DimensionError("feature table: expected " + std::to_string(dim_) + " values, got " +
                         std::to_string(features.size()));
  }
  if (user_id.empty() || user_id.find('\n') != std::string::npos) {
    throw DataError("feature table: invalid user id '" + user_id + "'");
  }
  if (!index_.emplace(user_id, ids_.size()).second) throw DataError("feature table: duplicate user " + user_id);
  ids_.push_back(user_id);
  values_.insert(values_.end(), features.begin(), features.end());
}

Tensor FeatureTable::matrix() const { return Tensor({ids_.size(), dim_}, values_); }

void FeatureTable::save(std::ostream& out) const {
  out << "CLUE-FEAT v1 " << dim_ << '\n';
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    out << ids_[i] << '\n';
    out.write(reinterpret_cast<const char*>(values_.data() + i * dim_),
              static_cast<std::streamsize>(dim_ * sizeof(double)));
  }
  if (!out) throw Error("feature table: write failed");
}

void FeatureTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("feature table: cannot open " + path.string());
  save(out);
}

FeatureTable FeatureTable::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("CLUE-FEAT v1 ", 0) != 0) {
    throw DataError("feature table: missing CLUE-FEAT v1 header");
  }
  std::size_t dim = 0;
  try {
    dim = std::stoull(header.substr(13));
  } catch (const std::exception&) {
    throw DataError("feature table: bad dimension in header");
  }
  FeatureTable table(dim);
  std::string id;
  std::vector<double> row(dim);
  while (std::getline(in, id)) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(dim * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(dim * sizeof(double))) {
      throw DataError("feature table: truncated record for " + id);
    }
    table.add(id, row);
  }
  return table;
}

FeatureTable FeatureTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("feature table: cannot open " + path.string());
  return load(in);
}

FeatureTable extract_features(const ClueModel& model, std::span<const UserExample> examples) {
  FeatureTable table(model.feature_dim());
  const Tensor features = model.user_features(examples);
  for (std::size_t i = 0; i < examples.size(); ++i) table.add(examples[i].user_id, features.row(i));
  return table;
}

Mlp::Mlp(std::string prefix, std::span<const std::size_t> widths, Rng& rng)
    : widths_(widths.begin(), widths.end()) {
  if (widths_.size() < 2) throw ConfigError("mlp: need input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t fan_in = widths_[l];
    const std::size_t fan_out = widths_[l + 1];
    if (fan_in == 0 || fan_out == 0) throw ConfigError("mlp: widths must be positive");
    Tensor w({fan_in, fan_out});
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.values()) v = stddev * rng.normal();
    const std::string name = prefix + ".layers." + std::to_string(l);
    weights_.push_back(std::make_unique<Parameter>(name + ".weight", std::move(w)));
    biases_.push_back(std::make_unique<Parameter>(name + ".bias", Tensor({fan_out})));
  }
}

Var Mlp::forward(Graph& g, Var x) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = linear(x, g.parameter(*weights_[l]), g.parameter(*biases_[l]));
    if (l + 1 < weights_.size()) x = relu(x);
  }
  return x;
}

std::vector<Parameter*> Mlp::parameters() const {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(weights_[l].get());
    out.push_back(biases_[l].get());
  }
  return out;
}

namespace {

std::vector<std::size_t> head_widths(std::size_t input, const HeadConfig& cfg) {
  std::vector<std::size_t> w{input};
  w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.push_back(cfg.output_dim);
  return w;
}

Mlp make_mlp(const std::string& prefix, std::size_t input, const HeadConfig& cfg, std::uint64_t tag) {
  Rng rng(derive_key(cfg.seed, 0x4ead, tag));
  const auto widths = head_widths(input, cfg);
  return Mlp(prefix, widths, rng);
}

// Projects the distinct users and items of `cases` and returns logits.
Var case_logits(Graph& g, const TransferHead& head, const TransferData& data,
                std::span<const RankingCase> cases) {
  std::map<std::size_t, std::size_t> user_rows;
  std::map<std::size_t, std::size_t> item_rows;
  for (const RankingCase& c : cases) {
    user_rows.emplace(c.user, 0);
    for (const std::size_t it : c.candidates) item_rows.emplace(it, 0);
  }
  auto gather = [](const Tensor& src, std::map<std::size_t, std::size_t>& rows) {
    Tensor out({rows.size(), src.cols()});
    std::size_t r = 0;
    for (auto& [source, dest] : rows) {
      if (source >= src.rows()) throw DimensionError("transfer data: row index out of range");
      dest = r;
      std::copy_n(src.data() + source * src.cols(), src.cols(), out.data() + r * src.cols());
      ++r;
    }
    return out;
  };
  Tensor users = gather(data.users, user_rows);
  Tensor items = gather(data.items, item_rows);
  const std::size_t n_candidates = cases.front().candidates.size();
  std::vector<std::size_t> user_index;
  std::vector<std::size_t> candidate_index;
  for (const RankingCase& c : cases) {
    if (c.candidates.size() != n_candidates) throw DimensionError("transfer data: ragged candidate pools");
    user_index.push_back(user_rows.at(c.user));
    for (const std::size_t it : c.candidates) candidate_index.push_back(item_rows.at(it));
  }
  Var u = embedding_lookup(head.user.forward(g, g.constant(std::move(users))), user_index);
  Var v = head.item.forward(g, g.constant(std::move(items)));
  return candidate_scores(u, v, candidate_index, n_candidates);
}

}  // namespace

TransferHead::TransferHead(std::size_t user_dim, std::size_t item_dim, const HeadConfig& cfg)
    : user(make_mlp("head.user", user_dim, cfg, 1)), item(make_mlp("head.item", item_dim, cfg, 2)) {}

std::vector<Parameter*> TransferHead::parameters() const {
  std::vector<Parameter*> out = user.parameters();
  const auto more = item.parameters();
  out.insert(out.end(), more.begin(), more.end());
  return out;
}

std::vector<double> train_head(TransferHead& head, const TransferData& data, const HeadConfig& cfg,
                               const TrainConfig& optimizer) {
  if (data.cases.empty()) throw DataError("train_head: no training cases");
  if (cfg.batch == 0 || cfg.epochs == 0) throw ConfigError("train_head: batch and epochs must be positive");
  const std::vector<Parameter*> params = head.parameters();
  OptimizerState state(params);
  Rng rng(derive_key(cfg.seed, 0x4ead, 3u));
  std::vector<std::size_t> order(data.cases.size());
  std::vector<double> epoch_losses;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::vector<RankingCase> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(data.cases[order[i]]);
      for (Parameter* p : params) p->zero_grad();
      Graph g;
      const std::vector<std::size_t> targets(batch.size(), 0);
      Var loss = cross_entropy_rows(case_logits(g, head, data, batch), targets);
      const double value = loss.value().item();
      if (!std::isfinite(value)) throw NumericError("train_head: non-finite loss");
      g.backward(loss);
      adamw_update(params, state, cfg.lr, optimizer);
      total += value * static_cast<double>(batch.size());
    }
    epoch_losses.push_back(total / static_cast<double>(order.size()));
  }
  return epoch_losses;
}

Tensor score_cases(const TransferHead& head, const TransferData& data) {
  if (data.cases.empty()) return Tensor();
  const std::size_t n_candidates = data.cases.front().candidates.size();
  Tensor out({data.cases.size(), n_candidates});
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < data.cases.size(); start += kChunk) {
    const std::size_t stop = std::min(data.cases.size(), start + kChunk);
    Graph g(false);
    const Tensor logits =
        case_logits(g, head, data, std::span(data.cases).subspan(start, stop - start)).value();
    std::copy_n(logits.data(), logits.size(), out.data() + start * n_candidates);
  }
  return out;
}

double ranking_loss(const Tensor& scores) {
  if (scores.rank() != 2 || scores.rows() == 0) throw DimensionError("ranking_loss: empty score matrix");
  double total = 0.0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const auto row = scores.row(r);
    const double peak = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (const double s : row) z += std::exp(s - peak);
    total += peak + std::log(z) - row[0];
  }
  return total / static_cast<double>(scores.rows());
}

std::size_t positive_rank(std::span<const double> scores) {
  if (scores.empty()) throw DimensionError("positive_rank: no candidates");
  for (const double s : scores) {
    if (!std::isfinite(s)) throw DataError("positive_rank: non-finite score");
  }
  std::size_t rank = 1;
  for (std::size_t j = 1; j < scores.size(); ++j) rank += scores[j] >= scores[0] ? 1 : 0;
  return rank;
}

MetricReport rank_metrics(const Tensor& scores, std::span<const std::size_t> ks) {
  MetricReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.hr.assign(ks.size(), 0.0);
  report.ndcg.assign(ks.size(), 0.0);
  for (const std::size_t k : ks) {
    if (k == 0) throw ConfigError("rank_metrics: k must be positive");
  }
  if (scores.empty()) return report;
  report.n_cases = scores.rows();
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    const std::size_t rank = positive_rank(scores.row(r));
    report.mrr += 1.0 / static_cast<double>(rank);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (rank <= ks[i]) {
        report.hr[i] += 1.0;
        report.ndcg[i] += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
      }
    }
  }
  const double n = static_cast<double>(report.n_cases);
  report.mrr /= n;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    report.hr[i] /= n;
    report.ndcg[i] /= n;
  }
  return report;
}

void write_metrics_csv(std::ostream& out, const MetricReport& report) {
  out << "metric,k,value,n_cases\n";
  out.precision(10);
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    out << "hr," << report.ks[i] << ',' << report.hr[i] << ',' << report.n_cases << '\n';
  }
  for (std::size_t i = 0; i < report.ks.size(); ++i) {
    out << "ndcg," << report.ks[i] << ',' << report.ndcg[i] << ',' << report.n_cases << '\n';
  }
  out << "mrr,," << report.mrr << ',' << report.n_cases << '\n';
}

void write_scores_csv(std::ostream& out, const ScoreTable& table) {
  const std::size_t n = table.scores.empty() ? 0 : table.scores.cols();
  out << "case,user_id,positive";
  for (std::size_t j = 1; j < n; ++j) out << ",neg_" << j;
  out << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < table.user_ids.size(); ++r) {
    out << r << ',' << table.user_ids[r];
    for (const double s : table.scores.row(r)) out << ',' << s;
    out << '\n';
  }
}

ScoreTable read_scores_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("case,user_id,positive", 0) != 0) {
    throw DataError("scores csv: missing header");
  }
  const std::size_t n = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  ScoreTable table;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::getline(row, field, ',');
    if (!std::getline(row, field, ',')) throw DataError("scores csv: line " + std::to_string(line_no) + " is short");
    table.user_ids.push_back(field);
    std::size_t count = 0;
    while (std::getline(row, field, ',')) {
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0') {
        throw DataError("scores csv: bad number '" + field + "' on line " + std::to_string(line_no));
      }
      values.push_back(v);
      ++count;
    }
    if (count != n) throw DataError("scores csv: line " + std::to_string(line_no) + " has wrong column count");
  }
  table.scores = Tensor({table.user_ids.size(), n}, std::move(values));
  return table;
}

}  // namespace clue
