// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clue/autograd.hpp"
#include "clue/datapipe.hpp"
#include "clue/model.hpp"
#include "clue/tensor.hpp"
#include "clue/trainer.hpp"

namespace clue {

/// user_id -> frozen feature vector, rows in insertion order.
class FeatureTable {
 public:
  explicit FeatureTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& user_ids() const noexcept { return ids_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }
  std::optional<std::size_t> find(const std::string& user_id) const;

  void add(const std::string& user_id, std::span<const double> features);
  Tensor matrix() const;

  // `CLUE-FEAT v1 <dim>\n`, then per record user_id '\n' and dim
  // little-endian doubles.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static FeatureTable load(std::istream& in);
  static FeatureTable load(const std::filesystem::path& path);

  bool operator==(const FeatureTable&) const = default;

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::map<std::string, std::size_t> index_;
};

// Evaluation-mode user_features for every example.
FeatureTable extract_features(const ClueModel& model, std::span<const UserExample> examples);

/// Fully connected ReLU network; no activation after the last layer.
class Mlp {
 public:
  Mlp(std::string prefix, std::span<const std::size_t> widths, Rng& rng);

  Var forward(Graph& g, Var x) const;
  std::vector<Parameter*> parameters() const;
  std::size_t input_dim() const noexcept { return widths_.front(); }
  std::size_t output_dim() const noexcept { return widths_.back(); }

 private:
  std::vector<std::size_t> widths_;
  std::vector<std::unique_ptr<Parameter>> weights_;
  std::vector<std::unique_ptr<Parameter>> biases_;
};

struct HeadConfig {
  std::vector<std::size_t> hidden{512, 256, 128, 64};
  std::size_t output_dim = 64;
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch = 256;
  std::uint64_t seed = 0;
};

/// Separate user and item MLPs; a candidate's logit is the dot product of
/// the projected user and item features.
struct TransferHead {
  TransferHead(std::size_t user_dim, std::size_t item_dim, const HeadConfig& cfg);

  std::vector<Parameter*> parameters() const;

  Mlp user;
  Mlp item;
};

/// One ranking pool: candidates[0] is the positive item.
struct RankingCase {
  std::size_t user = 0;                 // row of TransferData::users
  std::vector<std::size_t> candidates;  // rows of TransferData::items
};

struct TransferData {
  Tensor users;
  Tensor items;
  std::vector<RankingCase> cases;
};

// Per-epoch mean training loss. Only head parameters change.
std::vector<double> train_head(TransferHead& head, const TransferData& data, const HeadConfig& cfg,
                               const TrainConfig& optimizer);

// n_cases × n_candidates logits.
Tensor score_cases(const TransferHead& head, const TransferData& data);

// Mean cross-entropy of the positive (column 0) over the rows of `scores`.
double ranking_loss(const Tensor& scores);

/// 1-based rank of column 0: one plus the number of other candidates scoring
/// at least as high (ties count against the positive).
std::size_t positive_rank(std::span<const double> scores);

struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<double> hr;
  std::vector<double> ndcg;
  double mrr = 0.0;
  std::size_t n_cases = 0;
};

MetricReport rank_metrics(const Tensor& scores, std::span<const std::size_t> ks);

// `metric,k,value,n_cases`; MRR has a blank k.
void write_metrics_csv(std::ostream& out, const MetricReport& report);

/// Scores CSV: header `case,user_id,positive,neg_1..neg_N`, one row per case.
struct ScoreTable {
  std::vector<std::string> user_ids;
  Tensor scores;
};
void write_scores_csv(std::ostream& out, const ScoreTable& table);
ScoreTable read_scores_csv(std::istream& in);

}  // namespace clue
