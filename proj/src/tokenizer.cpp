// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/tokenizer.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "clue/error.hpp"

namespace clue {

namespace {

std::string to_hex(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (const char c : bytes) {
    const auto b = static_cast<unsigned char>(c);
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

std::string from_hex(std::string_view hex) {
  if (hex.empty() || hex.size() % 2 != 0) throw DataError("vocab: bad hex symbol '" + std::string(hex) + "'");
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw DataError("vocab: bad hex digit in '" + std::string(hex) + "'");
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
  }
  return out;
}

using Pair = std::pair<TokenId, TokenId>;

void apply_merge(std::vector<TokenId>& symbols, Pair pair, TokenId merged) {
  std::size_t write = 0;
  for (std::size_t read = 0; read < symbols.size(); ++read) {
    if (read + 1 < symbols.size() && symbols[read] == pair.first &&
        symbols[read + 1] == pair.second) {
      symbols[write++] = merged;
      ++read;
    } else {
      symbols[write++] = symbols[read];
    }
  }
  symbols.resize(write);
}

}  // namespace

std::vector<std::string_view> split_chunks(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t start = 0;
  for (std::size_t i = 1; i < text.size(); ++i) {
    if (text[i] == ' ' && text[i - 1] != ' ') {
      chunks.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  if (start < text.size()) chunks.push_back(text.substr(start));
  return chunks;
}

Vocab::Vocab() {
  symbols_.reserve(257);
  symbols_.emplace_back();  // pad
  for (int b = 0; b < 256; ++b) {
    symbols_.emplace_back(1, static_cast<char>(b));
    symbol_ids_.emplace(symbols_.back(), static_cast<TokenId>(b + 1));
  }
}

const std::string& Vocab::symbol(TokenId id) const {
  if (id <= kPadId || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw DataError("vocab: unknown token id " + std::to_string(id));
  }
  return symbols_[static_cast<std::size_t>(id)];
}

void Vocab::add_merge(TokenId left, TokenId right) {
  const std::string merged = symbol(left) + symbol(right);
  TokenId id;
  // Two different pairs can spell the same bytes; they share one id.
  if (const auto it = symbol_ids_.find(merged); it != symbol_ids_.end()) {
    id = it->second;
  } else {
    id = static_cast<TokenId>(symbols_.size());
    symbols_.push_back(merged);
    symbol_ids_.emplace(merged, id);
  }
  merge_table_.emplace(Pair{left, right}, MergeResult{merges_.size(), id});
  merges_.emplace_back(left, right);
}

Vocab Vocab::train(std::span<const std::string> corpus, std::size_t target_size) {
  if (corpus.empty()) throw DataError("train_bpe: empty corpus");
  if (target_size < 257) throw ConfigError("train_bpe: target size must be at least 257");

  std::map<std::string, long long> chunk_counts;
  for (const std::string& text : corpus) {
    for (const std::string_view chunk : split_chunks(text)) ++chunk_counts[std::string(chunk)];
  }
  std::vector<std::vector<TokenId>> words;
  std::vector<long long> freq;
  for (const auto& [chunk, count] : chunk_counts) {
    std::vector<TokenId> ids;
    for (const char c : chunk) ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)) + 1);
    words.push_back(std::move(ids));
    freq.push_back(count);
  }

  Vocab vocab;
  while (vocab.size() < target_size) {
    std::map<Pair, long long> pair_counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& ids = words[w];
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) pair_counts[{ids[i], ids[i + 1]}] += freq[w];
    }
    const Pair* best = nullptr;
    long long best_count = 1;
    for (const auto& [pair, count] : pair_counts) {
      if (vocab.merge_table_.count(pair)) continue;
      if (count > best_count) {
        best = &pair;
        best_count = count;
      } else if (count == best_count && best) {
        const auto key = [&](const Pair& p) {
          return std::pair<const std::string&, const std::string&>(vocab.symbols_[p.first],
                                                                   vocab.symbols_[p.second]);
        };
        if (key(pair) < key(*best)) best = &pair;
      }
    }
    if (!best) break;
    const Pair chosen = *best;
    vocab.add_merge(chosen.first, chosen.second);
    const TokenId merged = vocab.merge_table_.at(chosen).id;
    for (auto& ids : words) apply_merge(ids, chosen, merged);
  }
  return vocab;
}

void Vocab::save(std::ostream& out) const {
  out << "BBPE v1 " << size() << '\n';
  for (const auto& [left, right] : merges_) {
    out << to_hex(symbols_[left]) << ' ' << to_hex(symbols_[right]) << '\n';
  }
}

Vocab Vocab::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("vocab: missing header");
  std::istringstream header(line);
  std::string magic;
  std::string version;
  std::size_t declared = 0;
  if (!(header >> magic >> version >> declared) || magic != "BBPE" || version != "v1") {
    throw DataError("vocab: expected header 'BBPE v1 <size>'");
  }
  Vocab vocab;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string left;
    std::string right;
    if (!(fields >> left >> right)) throw DataError("vocab: bad merge on line " + std::to_string(line_no));
    const auto l = vocab.symbol_ids_.find(from_hex(left));
    const auto r = vocab.symbol_ids_.find(from_hex(right));
    if (l == vocab.symbol_ids_.end() || r == vocab.symbol_ids_.end()) {
      throw DataError("vocab: merge on line " + std::to_string(line_no) + " uses an unknown symbol");
    }
    vocab.add_merge(l->second, r->second);
  }
  if (vocab.size() != declared) {
    throw DataError("vocab: header declares " + std::to_string(declared) + " ids, merges give " +
                    std::to_string(vocab.size()));
  }
  return vocab;
}

void Vocab::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
  std::vector<TokenId> ids;
  ids.reserve(chunk.size());
  for (const char c : chunk) ids.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)) + 1);
  while (ids.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    Pair best_pair{};
    TokenId best_id = kPadId;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      const auto it = merge_table_.find({ids[i], ids[i + 1]});
      if (it != merge_table_.end() && it->second.rank < best_rank) {
        best_rank = it->second.rank;
        best_pair = it->first;
        best_id = it->second.id;
      }
    }
    if (best_id == kPadId) break;
    apply_merge(ids, best_pair, best_id);
  }
  out.insert(out.end(), ids.begin(), ids.end());
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const std::string_view chunk : split_chunks(text)) encode_chunk(chunk, out);
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) out += symbol(id);
  return out;
}

ItemTokenRow encode_item(std::string_view text, const Vocab& vocab, std::size_t width) {
  if (width == 0) throw ConfigError("encode_item: width must be positive");
  if (text.empty()) throw DataError("encode_item: empty item text");
  ItemTokenRow row;
  row.ids = vocab.encode(text);
  row.true_length = std::min(row.ids.size(), width);
  row.ids.resize(width, kPadId);
  return row;
}

std::vector<TokenId> strip_pads(std::span<const TokenId> ids) {
  std::vector<TokenId> out;
  for (const TokenId id : ids) {
    if (id != kPadId) out.push_back(id);
  }
  return out;
}

}  // namespace clue
