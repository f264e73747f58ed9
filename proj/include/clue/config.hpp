// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clue/datapipe.hpp"
#include "clue/downstream.hpp"
#include "clue/model.hpp"
#include "clue/objective.hpp"
#include "clue/scalelab.hpp"
#include "clue/trainer.hpp"

namespace clue {

enum class Profile { desk, paper };
std::string_view to_string(Profile profile);
Profile parse_profile(std::string_view text);

struct KeySpec {
  std::string_view section;
  std::string_view key;
  std::string_view desk;        // default under the desk profile
  std::string_view paper;       // default under the paper profile
  std::string_view provenance;  // where the paper-profile value comes from
  std::string_view help;
};

// Every recognised configuration key, in display order.
std::span<const KeySpec> config_keys();
const KeySpec* find_key(std::string_view key);

// Table of keys with desk/paper defaults and provenance, for --help.
std::string describe_keys();

/// Resolved `key = value` configuration. Files use `[section]` headers,
/// `#` or `;` comments, and keys from config_keys(); a key may also appear
/// before any section header.
class Config {
 public:
  explicit Config(Profile profile = Profile::desk);

  // Profile from `profile = ...` in the file (unless `profile` is given),
  // then file values, then overrides in order.
  static Config resolve(const std::optional<std::filesystem::path>& file,
                        std::span<const std::pair<std::string, std::string>> overrides,
                        std::optional<Profile> profile = std::nullopt);

  // Parses INI text into (key, value) pairs, validating keys and sections.
  static std::vector<std::pair<std::string, std::string>> parse_ini(std::istream& in, std::string_view origin);

  Profile profile() const noexcept { return profile_; }
  void set(std::string_view key, std::string_view value);
  const std::string& get(std::string_view key) const;
  std::size_t get_size(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  double get_double(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<std::size_t> get_sizes(std::string_view key) const;
  std::vector<std::string> get_list(std::string_view key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  // Complete INI text that resolves back to this configuration.
  std::string to_ini() const;

  std::uint64_t seed() const { return get_u64("seed"); }
  std::vector<std::string> services() const { return get_list("services"); }
  ModelConfig model() const;
  TrainConfig train() const;
  ObjectiveState objective() const;
  HeadConfig head() const;
  ExampleOptions examples() const;
  SplitSpec split() const;
  DownstreamOptions downstream() const;
  SweepSpec sweep() const;

 private:
  Profile profile_;
  std::map<std::string, std::string> values_;
};

}  // namespace clue
