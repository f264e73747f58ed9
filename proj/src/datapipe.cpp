// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/datapipe.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

int read_digits(std::string_view text, std::size_t& pos, std::size_t count) {
  if (pos + count > text.size()) throw DataError("timestamp too short: '" + std::string(text) + "'");
  int value = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const char c = text[pos + i];
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw DataError("bad timestamp '" + std::string(text) + "'");
    }
    value = value * 10 + (c - '0');
  }
  pos += count;
  return value;
}

void expect(std::string_view text, std::size_t& pos, char c) {
  if (pos >= text.size() || text[pos] != c) throw DataError("bad timestamp '" + std::string(text) + "'");
  ++pos;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::int64_t parse_iso8601(std::string_view text) {
  std::size_t pos = 0;
  const int year = read_digits(text, pos, 4);
  expect(text, pos, '-');
  const int month = read_digits(text, pos, 2);
  expect(text, pos, '-');
  const int day = read_digits(text, pos, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31) {
    throw DataError("bad timestamp '" + std::string(text) + "'");
  }
  int hour = 0, minute = 0, second = 0;
  if (pos < text.size() && (text[pos] == 'T' || text[pos] == ' ')) {
    ++pos;
    hour = read_digits(text, pos, 2);
    expect(text, pos, ':');
    minute = read_digits(text, pos, 2);
    if (pos < text.size() && text[pos] == ':') {
      ++pos;
      second = read_digits(text, pos, 2);
      if (pos < text.size() && text[pos] == '.') {
        ++pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      }
    }
  }
  std::int64_t offset = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z') {
      ++pos;
    } else if (text[pos] == '+' || text[pos] == '-') {
      const int sign = text[pos] == '+' ? 1 : -1;
      ++pos;
      const int oh = read_digits(text, pos, 2);
      if (pos < text.size() && text[pos] == ':') ++pos;
      const int om = read_digits(text, pos, 2);
      offset = sign * (oh * 3600 + om * 60);
    }
  }
  if (pos != text.size() || hour > 23 || minute > 59 || second > 60) {
    throw DataError("bad timestamp '" + std::string(text) + "'");
  }
  return days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) * 86400 +
         hour * 3600 + minute * 60 + second - offset;
}

std::vector<BehaviorEvent> read_behavior_log(std::istream& in) {
  std::vector<BehaviorEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw DataError("log line " + std::to_string(line_no) + ": expected 4 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw DataError("log line " + std::to_string(line_no) + ": empty user or service id");
    }
    if (fields[3].empty()) throw DataError("log line " + std::to_string(line_no) + ": empty item text");
    BehaviorEvent e;
    e.user_id = fields[0];
    e.service_id = fields[1];
    e.timestamp = fields[2];
    try {
      e.epoch_seconds = parse_iso8601(fields[2]);
    } catch (const DataError& err) {
      throw DataError("log line " + std::to_string(line_no) + ": " + err.what());
    }
    e.item_text = fields[3];
    e.line = line_no;
    events.push_back(std::move(e));
  }
  return events;
}

void write_behavior_log(std::ostream& out, std::span<const BehaviorEvent> events) {
  for (const BehaviorEvent& e : events) {
    out << e.user_id << '\t' << e.service_id << '\t' << e.timestamp << '\t' << e.item_text << '\n';
  }
}

std::map<std::string, std::vector<BehaviorEvent>> group_by_user(std::span<const BehaviorEvent> events) {
  std::map<std::string, std::vector<BehaviorEvent>> users;
  for (const BehaviorEvent& e : events) users[e.user_id].push_back(e);
  return users;
}

std::vector<BehaviorEvent> dedup_user_log(std::span<const BehaviorEvent> events) {
  std::vector<BehaviorEvent> out;
  std::unordered_set<std::string_view> seen;
  for (const BehaviorEvent& e : events) {
    if (seen.insert(e.item_text).second) out.push_back(e);
  }
  return out;
}

void sort_chronologically(std::vector<BehaviorEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const BehaviorEvent& a, const BehaviorEvent& b) {
    return a.epoch_seconds < b.epoch_seconds;
  });
}

std::optional<UserExample> build_user_example(std::span<const BehaviorEvent> events,
                                              std::span<const std::string> services,
                                              const Vocab& vocab, const ExampleOptions& options) {
  if (events.empty()) return std::nullopt;
  if (options.max_items == 0) throw ConfigError("build_user_example: max_items must be positive");
  std::vector<std::vector<BehaviorEvent>> per_service(services.size());
  for (const BehaviorEvent& e : events) {
    const auto it = std::find(services.begin(), services.end(), e.service_id);
    if (it != services.end()) {
      per_service[static_cast<std::size_t>(it - services.begin())].push_back(e);
    } else if (options.unseen_service_slot && *options.unseen_service_slot < services.size()) {
      per_service[*options.unseen_service_slot].push_back(e);
    }
  }

  UserExample example;
  example.user_id = events.front().user_id;
  example.services.resize(services.size());
  bool any = false;
  for (std::size_t s = 0; s < services.size(); ++s) {
    auto& log = per_service[s];
    if (log.empty()) {
      if (options.require_all_services) return std::nullopt;
      continue;
    }
    sort_chronologically(log);
    log = dedup_user_log(log);
    const std::size_t keep = std::min(log.size(), options.max_items);
    for (std::size_t i = log.size() - keep; i < log.size(); ++i) {
      example.services[s].push_back(encode_item(log[i].item_text, vocab, options.item_width));
    }
    any = true;
  }
  if (!any) return std::nullopt;
  return example;
}

UserSplit split_users(std::span<const std::string> user_ids, const SplitSpec& spec) {
  const double fractions[] = {spec.train, spec.val, spec.test};
  double total = 0.0;
  for (const double f : fractions) {
    if (f < 0.0 || f > 1.0) throw ConfigError("split_users: fractions must lie in [0, 1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split_users: fractions must sum to 1");

  std::vector<std::string> order(user_ids.begin(), user_ids.end());
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());
  Rng rng(derive_key(spec.seed, 0x5b11u));
  rng.shuffle(order);

  const std::size_t n = order.size();
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n))));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n))));
  UserSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  for (auto* part : {&split.train, &split.val, &split.test}) std::sort(part->begin(), part->end());
  return split;
}

std::vector<DownstreamCase> build_downstream_cases(
    const std::map<std::string, std::vector<BehaviorEvent>>& history_logs,
    const std::map<std::string, std::vector<BehaviorEvent>>& target_logs,
    const DownstreamOptions& options) {
  std::set<std::string> universe_set;
  for (const auto& [user, events] : target_logs) {
    for (const BehaviorEvent& e : events) universe_set.insert(e.item_text);
  }
  const std::vector<std::string> universe(universe_set.begin(), universe_set.end());
  if (universe.size() <= options.n_negatives) {
    throw DataError("build_downstream_cases: item universe of " + std::to_string(universe.size()) +
                    " items cannot supply " + std::to_string(options.n_negatives) + " negatives");
  }

  std::vector<DownstreamCase> cases;
  for (const auto& [user, raw] : target_logs) {
    std::vector<BehaviorEvent> log = raw;
    sort_chronologically(log);
    log = dedup_user_log(log);
    if (log.size() < options.n_targets + 1) continue;

    std::unordered_set<std::string> own;
    for (const BehaviorEvent& e : raw) own.insert(e.item_text);
    if (universe.size() - own.size() < options.n_negatives) {
      throw DataError("build_downstream_cases: universe too small for user " + user);
    }

    const std::size_t first_target = log.size() - options.n_targets;
    const std::size_t history_begin =
        first_target > options.max_history ? first_target - options.max_history : 0;
    std::vector<BehaviorEvent> history;
    if (const auto it = history_logs.find(user); it != history_logs.end()) history = it->second;
    history.insert(history.end(), log.begin() + static_cast<std::ptrdiff_t>(history_begin),
                   log.begin() + static_cast<std::ptrdiff_t>(first_target));

    for (std::size_t t = first_target; t < log.size(); ++t) {
      DownstreamCase c;
      c.user_id = user;
      c.history = history;
      c.positive = log[t].item_text;
      c.seed = derive_key(options.seed, fnv1a64(user), t);
      Rng rng(c.seed);
      while (c.negatives.size() < options.n_negatives) {
        const std::string& candidate = universe[rng.index(universe.size())];
        if (own.count(candidate)) continue;
        if (std::find(c.negatives.begin(), c.negatives.end(), candidate) != c.negatives.end()) continue;
        c.negatives.push_back(candidate);
      }
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

}  // namespace clue
