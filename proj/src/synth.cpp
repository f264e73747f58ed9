// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/synth.hpp"

#include <array>
#include <cstdio>
#include <set>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

namespace {

constexpr std::array<const char*, 16> kOnsets{"b", "d", "f", "g", "k", "l", "m", "n",
                                              "p", "r", "s", "t", "v", "z", "sh", "ch"};
constexpr std::array<const char*, 6> kVowels{"a", "e", "i", "o", "u", "ai"};
constexpr std::size_t kNoiseWords = 64;
constexpr std::size_t kModifiersPerService = 4;
constexpr std::size_t kTargetModifiers = 3;

std::vector<std::string> make_words(std::size_t count, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> words;
  while (words.size() < count) {
    const std::size_t syllables = 2 + rng.index(2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng.index(kOnsets.size())];
      w += kVowels[rng.index(kVowels.size())];
    }
    if (seen.insert(w).second) words.push_back(w);
  }
  return words;
}

std::string iso_time(std::int64_t seconds) {
  // Days since 2024-01-01 to a civil date.
  const std::int64_t day = seconds / 86400 + 19723;  // 19723 = days from 1970-01-01
  const std::int64_t rem = seconds % 86400;
  std::int64_t z = day + 719468;
  const std::int64_t era = z / 146097;
  const std::int64_t doe = z - era * 146097;
  const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const std::int64_t mp = (5 * doy + 2) / 153;
  const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
  const std::int64_t y = yoe + era * 400 + (m <= 2 ? 1 : 0);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%04lld-%02lld-%02lldT%02lld:%02lld:%02lldZ", static_cast<long long>(y),
                static_cast<long long>(m), static_cast<long long>(d), static_cast<long long>(rem / 3600),
                static_cast<long long>(rem / 60 % 60), static_cast<long long>(rem % 60));
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (users == 0 || clusters == 0 || services == 0) throw ConfigError("synth: users, clusters and services must be positive");
  if (words_per_cluster < 2 || interests == 0 || interests > words_per_cluster) {
    throw ConfigError("synth: need 1 <= interests <= words_per_cluster and at least two words per cluster");
  }
  if (min_items == 0 || max_items < min_items) throw ConfigError("synth: need 1 <= min_items <= max_items");
  for (const double p : {interest_prob, noise_prob, duplicate_prob}) {
    if (p < 0.0 || p > 1.0) throw ConfigError("synth: probabilities must lie in [0, 1]");
  }
}

std::vector<std::string> synth_service_names(std::size_t services) {
  std::vector<std::string> names;
  for (std::size_t s = 0; s < services; ++s) names.push_back("svc" + std::to_string(s));
  return names;
}

std::vector<BehaviorEvent> synth_corpus(const SynthConfig& cfg) {
  cfg.validate();
  Rng vocab_rng(derive_key(cfg.seed, 0x5e7du));
  const std::size_t n_cluster_words = cfg.clusters * cfg.words_per_cluster;
  const std::size_t n_modifiers = cfg.services * kModifiersPerService + kTargetModifiers;
  const std::vector<std::string> words = make_words(n_cluster_words + kNoiseWords + n_modifiers, vocab_rng);
  auto cluster_word = [&](std::size_t c, std::size_t i) -> const std::string& {
    return words[c * cfg.words_per_cluster + i];
  };
  auto noise_word = [&](std::size_t i) -> const std::string& { return words[n_cluster_words + i]; };
  auto modifier = [&](std::size_t i) -> const std::string& { return words[n_cluster_words + kNoiseWords + i]; };

  const std::vector<std::string> services = synth_service_names(cfg.services);
  const int width = static_cast<int>(std::to_string(cfg.users).size());
  std::vector<BehaviorEvent> events;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    Rng rng(derive_key(cfg.seed, 0x05e7u, u));
    char id[32];
    std::snprintf(id, sizeof(id), "u%0*zu", width, u);
    const std::size_t cluster = rng.index(cfg.clusters);
    const std::vector<std::size_t> interests = rng.sample_without_replacement(cfg.words_per_cluster, cfg.interests);
    auto topic_word = [&]() -> const std::string& {
      if (rng.uniform() < cfg.interest_prob) return cluster_word(cluster, interests[rng.index(interests.size())]);
      return cluster_word(cluster, rng.index(cfg.words_per_cluster));
    };
    std::int64_t clock = static_cast<std::int64_t>(rng.index(86400 * 30));

    auto emit = [&](const std::string& service, std::size_t count, auto&& make_text) {
      std::vector<std::string> made;
      for (std::size_t k = 0; k < count; ++k) {
        std::string text;
        if (!made.empty() && rng.uniform() < cfg.duplicate_prob) {
          text = made[rng.index(made.size())];
        } else {
          text = make_text();
          made.push_back(text);
        }
        clock += 60 + static_cast<std::int64_t>(rng.index(7200));
        BehaviorEvent e;
        e.user_id = id;
        e.service_id = service;
        e.timestamp = iso_time(clock);
        e.epoch_seconds = parse_iso8601(e.timestamp);
        e.item_text = std::move(text);
        e.line = events.size();
        events.push_back(std::move(e));
      }
    };

    for (std::size_t s = 0; s < cfg.services; ++s) {
      const std::size_t count = cfg.min_items + rng.index(cfg.max_items - cfg.min_items + 1);
      emit(services[s], count, [&] {
        std::string text = modifier(s * kModifiersPerService + rng.index(kModifiersPerService));
        text += ' ';
        text += topic_word();
        text += ' ';
        text += rng.uniform() < cfg.noise_prob ? noise_word(rng.index(kNoiseWords))
                                               : cluster_word(cluster, rng.index(cfg.words_per_cluster));
        return text;
      });
    }
    if (cfg.target_items > 0) {
      emit(kTargetService, cfg.target_items, [&] {
        return modifier(cfg.services * kModifiersPerService + rng.index(kTargetModifiers)) + ' ' + topic_word();
      });
    }
  }
  return events;
}

}  // namespace clue
