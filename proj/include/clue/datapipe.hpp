// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clue/tokenizer.hpp"

namespace clue {

/// One line of a behavior log.
struct BehaviorEvent {
  std::string user_id;
  std::string service_id;
  std::string timestamp;      // ISO-8601 as written in the log
  std::int64_t epoch_seconds = 0;
  std::string item_text;
  std::size_t line = 0;       // input order, used to break timestamp ties

  bool operator==(const BehaviorEvent&) const = default;
};

// Accepts YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|±HH:MM]. Fractional seconds are dropped.
std::int64_t parse_iso8601(std::string_view text);

// Tab-separated `user_id \t service_id \t timestamp \t item_text`; `#` lines
// and blank lines are skipped.
std::vector<BehaviorEvent> read_behavior_log(std::istream& in);
void write_behavior_log(std::ostream& out, std::span<const BehaviorEvent> events);

// Events grouped per user, keyed and iterated in user_id order.
std::map<std::string, std::vector<BehaviorEvent>> group_by_user(std::span<const BehaviorEvent> events);

// Keeps the first occurrence of each item_text; survivors keep their order.
std::vector<BehaviorEvent> dedup_user_log(std::span<const BehaviorEvent> events);

// Stable chronological order (ties keep input order).
void sort_chronologically(std::vector<BehaviorEvent>& events);

/// Tokenized per-service item sequences for one user.
/// services[s] is chronological, duplicate free, and holds at most max_items rows.
struct UserExample {
  std::string user_id;
  std::vector<std::vector<ItemTokenRow>> services;

  std::size_t count(std::size_t service) const { return services.at(service).size(); }
  bool has_service(std::size_t service) const {
    return service < services.size() && !services[service].empty();
  }
  bool operator==(const UserExample&) const = default;
};

struct ExampleOptions {
  std::size_t max_items = 512;
  std::size_t item_width = kDefaultItemWidth;
  // Every listed service must be present or the user is skipped.
  bool require_all_services = true;
  // Slot for events whose service is not listed; unset drops them.
  std::optional<std::size_t> unseen_service_slot;
};

/// Builds one user's example: per service, sort by time, dedup, keep the most
/// recent max_items and encode each item. Returns nullopt (skip the user) when
/// a required service is missing or no service has any item.
std::optional<UserExample> build_user_example(std::span<const BehaviorEvent> events,
                                              std::span<const std::string> services,
                                              const Vocab& vocab, const ExampleOptions& options);

struct SplitSpec {
  std::uint64_t seed = 0;
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct UserSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

// Seeded user-level partition; each part is returned sorted.
UserSplit split_users(std::span<const std::string> user_ids, const SplitSpec& spec);

/// A downstream ranking case in text form: one held-out target item and
/// negatives sampled from the target-service item universe.
struct DownstreamCase {
  std::string user_id;
  std::vector<BehaviorEvent> history;  // events available for user features
  std::string positive;
  std::vector<std::string> negatives;
  std::uint64_t seed = 0;
};

struct DownstreamOptions {
  std::size_t n_negatives = 100;
  std::size_t max_history = 64;
  std::size_t n_targets = 3;
  std::uint64_t seed = 0;
};

/// Per user in target_logs (chronological, deduplicated): the last n_targets
/// interactions become targets; up to max_history earlier ones join the
/// user's history_logs events as feature input. Each target gets n_negatives
/// distinct items drawn uniformly from the universe minus everything the user
/// interacted with. Users without at least n_targets + 1 interactions are skipped.
std::vector<DownstreamCase> build_downstream_cases(
    const std::map<std::string, std::vector<BehaviorEvent>>& history_logs,
    const std::map<std::string, std::vector<BehaviorEvent>>& target_logs,
    const DownstreamOptions& options);

}  // namespace clue
