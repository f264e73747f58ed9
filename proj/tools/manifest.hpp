// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace clue::tools {

std::string utc_now();
// FNV-1a 64 of the file's bytes as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

/// Everything needed to rerun a command: its argv, the fully resolved
/// configuration and the checksums of what it read and wrote.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string profile;
  std::map<std::string, std::string> config;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> checksum
  std::map<std::string, std::string> outputs;  // path -> checksum
  std::string started;
  std::string finished;

  // Written to a temporary sibling and renamed into place.
  void write(const std::filesystem::path& path) const;
  static RunManifest read(const std::filesystem::path& path);
};

}  // namespace clue::tools
