// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "clue/config.hpp"
#include "clue/datapipe.hpp"
#include "clue/downstream.hpp"
#include "clue/model.hpp"
#include "clue/objective.hpp"
#include "clue/scalelab.hpp"
#include "clue/tokenizer.hpp"
#include "clue/trainer.hpp"

namespace clue {

std::vector<BehaviorEvent> read_behavior_log(const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

// BPE over every item text of the log.
Vocab train_vocab(std::span<const BehaviorEvent> events, std::size_t vocab_size);

/// Tokenized pretraining examples for the train/val/test user split. The
/// split is drawn over every user in the log, so downstream evaluation can
/// reuse it.
struct PreparedData {
  std::vector<std::string> services;
  std::size_t item_width = kDefaultItemWidth;
  std::vector<UserExample> train;
  std::vector<UserExample> val;
  std::vector<UserExample> test;
  std::size_t skipped = 0;  // users missing a required service

  bool operator==(const PreparedData&) const = default;
};

UserSplit split_log_users(std::span<const BehaviorEvent> events, const SplitSpec& spec);
PreparedData prepare_data(std::span<const BehaviorEvent> events, const Vocab& vocab, const Config& cfg);

/// `CLUE-DATA v1 <n_services> <item_width>`, a `services` line, then per user
/// `user <split> <user_id> <count per service>` followed by one line of
/// non-pad token ids per item.
void save_prepared(std::ostream& out, const PreparedData& data);
PreparedData load_prepared(std::istream& in);

struct PretrainResult {
  ClueModel model;
  ObjectiveState objective;
  std::vector<LossRecord> records;
};

PretrainResult pretrain(const PreparedData& data, const Config& cfg, const Trainer::Progress& progress = {});

struct TransferReport {
  MetricReport metrics;
  double test_loss = 0.0;
  std::vector<double> head_losses;
  ScoreTable scores;
  std::size_t n_train_cases = 0;
  std::size_t n_test_cases = 0;
  std::size_t omitted_users = 0;  // no usable history
};

/// Downstream ranking on the target service: features from the frozen model,
/// head trained on cases of train-split users, metrics on test-split users.
TransferReport run_transfer(const ClueModel& model, const Vocab& vocab, std::span<const BehaviorEvent> events,
                            const Config& cfg);

// Model configuration of a sweep point: d and layers from the size, d/16
// heads (at least one), 4d feed-forward width, seq_len items per service.
ModelConfig sweep_model_config(const Config& cfg, const SweepPoint& point);

std::vector<RunResult> run_scaling_sweep(std::span<const BehaviorEvent> events, const Vocab& vocab,
                                         const Config& cfg, std::ostream* csv = nullptr,
                                         const std::function<void(const RunResult&)>& progress = {});

}  // namespace clue
