// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clue {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr std::size_t kDefaultItemWidth = 32;

/// Byte-level BPE vocabulary.
///
/// Id 0 is the pad, ids 1..256 are raw bytes, and every later id is the
/// result of a learned merge. Text is split into chunks at the start of each
/// run of spaces; merges never cross a chunk boundary.
class Vocab {
 public:
  // The 256-byte alphabet plus pad, no merges.
  Vocab();

  static Vocab train(std::span<const std::string> corpus, std::size_t target_size);
  static Vocab load(std::istream& in);
  void save(std::ostream& out) const;

  std::size_t size() const noexcept { return symbols_.size(); }
  std::size_t merge_count() const noexcept { return merges_.size(); }
  const std::vector<std::pair<TokenId, TokenId>>& merges() const noexcept { return merges_; }
  const std::string& symbol(TokenId id) const;

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  struct MergeResult {
    std::size_t rank;
    TokenId id;
  };

  void add_merge(TokenId left, TokenId right);
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;

  std::vector<std::string> symbols_;
  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::map<std::pair<TokenId, TokenId>, MergeResult> merge_table_;
  std::map<std::string, TokenId, std::less<>> symbol_ids_;
};

// Splits text into the pre-tokenization chunks used by Vocab.
std::vector<std::string_view> split_chunks(std::string_view text);

/// Fixed-width token row for one item; ids[true_length:] are all pad.
struct ItemTokenRow {
  std::vector<TokenId> ids;
  std::size_t true_length = 0;

  bool operator==(const ItemTokenRow&) const = default;
};

// Encodes, keeps the first `width` tokens and right-pads with kPadId.
ItemTokenRow encode_item(std::string_view text, const Vocab& vocab,
                         std::size_t width = kDefaultItemWidth);

std::vector<TokenId> strip_pads(std::span<const TokenId> ids);

}  // namespace clue
