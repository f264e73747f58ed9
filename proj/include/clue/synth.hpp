// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "clue/datapipe.hpp"

namespace clue {

inline constexpr const char* kTargetService = "target";

/// Clustered synthetic behavior logs. Each user belongs to a latent cluster
/// and holds a few interest words from that cluster's vocabulary; every
/// service renders items from the same interests with its own phrasing, so
/// a user's services are correlated while users differ.
struct SynthConfig {
  std::size_t users = 2000;
  std::size_t clusters = 8;
  std::size_t services = 2;
  std::uint64_t seed = 0;
  std::size_t words_per_cluster = 24;
  std::size_t interests = 3;
  std::size_t min_items = 4;
  std::size_t max_items = 10;
  double interest_prob = 0.8;   // chance an item's first word is an interest word
  double noise_prob = 0.3;      // chance the second word comes from a shared noise pool
  double duplicate_prob = 0.1;  // chance an event repeats an earlier item
  std::size_t target_items = 0; // events per user in the "target" service; 0 disables

  void validate() const;
};

// svc0, svc1, ...
std::vector<std::string> synth_service_names(std::size_t services);

// Events sorted by user id then time.
std::vector<BehaviorEvent> synth_corpus(const SynthConfig& cfg);

}  // namespace clue
