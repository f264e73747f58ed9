// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "clue/model.hpp"

namespace clue {

// `key = value` lines in a fixed order, including the block type
// (activation, norm placement) so a reader knows what it is loading.
std::string canonical_config(const ModelConfig& config);
ModelConfig parse_canonical_config(std::string_view text);

struct Checkpoint {
  ClueModel model;
  double tau = 0.0;
};

/// Layout: `CLUE-CKPT v1\n`, canonical config, `---\n`, then one block per
/// parameter (`<name> <rank> <dims...>\n` + little-endian doubles), an
/// `objective.tau` block, and a trailing little-endian FNV-1a 64 checksum of
/// every preceding byte.
void save_checkpoint(std::ostream& out, const ClueModel& model, double tau);
void save_checkpoint(const std::filesystem::path& path, const ClueModel& model, double tau);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Checksum over every parameter value, in registration order.
std::uint64_t parameter_checksum(const ClueModel& model);

}  // namespace clue
