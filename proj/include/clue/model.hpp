// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clue/autograd.hpp"
#include "clue/datapipe.hpp"
#include "clue/ops.hpp"
#include "clue/random.hpp"
#include "clue/tensor.hpp"

namespace clue {

enum class EncoderMode { stacked, single };

std::string_view to_string(EncoderMode mode);
EncoderMode parse_encoder_mode(std::string_view text);

/// Encoder architecture. Item and Service Transformers share one set of
/// hyperparameters. Blocks are pre-LN with a GELU feed-forward.
struct ModelConfig {
  std::size_t vocab_size = 1024;
  std::size_t embed_dim = 64;
  std::size_t ffn_dim = 256;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  double dropout = 0.1;
  std::size_t max_items = 512;
  std::size_t item_width = kDefaultItemWidth;
  std::size_t n_services = 2;
  EncoderMode mode = EncoderMode::stacked;
  std::size_t reduce_dim = 0;  // 0 disables the reduction layer
  bool normalize_outputs = true;
  std::size_t single_max_tokens = 512;  // token budget of the single encoder

  void validate() const;

  // Best published configuration: 720/2,880/8 layers/6 heads, BBPE 50,257.
  static ModelConfig paper();
  // Laptop-scale default profile.
  static ModelConfig desk();

  bool operator==(const ModelConfig&) const = default;
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

/// One per-service item sequence to encode. `key` seeds the dropout rows so
/// masks do not depend on how sequences are batched.
struct SequenceInput {
  const std::vector<ItemTokenRow>* items = nullptr;
  std::size_t service = 0;
  std::uint64_t key = 0;
};

struct PairViews {
  Var a;
  Var b;
};

// Dropout key of a user's sequence for one service (or augmented view).
std::uint64_t sequence_key(std::string_view user_id, std::size_t service, std::uint64_t view = 0);

/// Stacked Item-Transformer -> Service-Transformer user encoder, or the
/// single-Transformer ablation, plus the optional reduction layer.
///
/// Stacked: each item's non-pad tokens (+ token positions) run through the
/// Item Transformer and are mean-pooled into one vector per item. A service
/// sequence is [service slot, item_1, ..., item_n] (+ sequence positions)
/// through the shared Service Transformer; the slot output is the
/// user-per-service embedding.
///
/// Single: all tokens of a service's items, each with token-in-item and
/// item-index positions plus the service embedding, go through one
/// Transformer; the output is the mean over tokens. The oldest items are
/// dropped to fit single_max_tokens.
///
/// With reduce_dim = r, each service s owns a block W_s (d×r) of one linear
/// layer over the concatenated service embeddings. The contrastive views are
/// u_s W_s, and the user feature is GELU(Σ_s u_s W_s).
class ClueModel {
 public:
  ClueModel(ModelConfig config, std::uint64_t seed);
  ClueModel(ClueModel&&) noexcept = default;
  ClueModel& operator=(ClueModel&&) noexcept = default;
  ClueModel(const ClueModel&) = delete;
  ClueModel& operator=(const ClueModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<Parameter*>& parameters() const noexcept { return order_; }
  Parameter* find(std::string_view name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Width of a contrastive view (reduce_dim or embed_dim).
  std::size_t view_dim() const noexcept;
  // Width of user_features (reduce_dim or n_services * embed_dim).
  std::size_t feature_dim() const noexcept;

  // n_items × d; pad positions are masked, all-pad rows throw.
  Var encode_items(Graph& g, std::span<const ItemTokenRow> rows, const ForwardOptions& options = {},
                   std::uint64_t key = 0) const;
  // 1 × d user-per-service embedding from already encoded items (stacked mode).
  Var encode_service(Graph& g, Var item_embeds, std::size_t service,
                     const ForwardOptions& options = {}, std::uint64_t key = 0) const;
  // One row per sequence: the user-per-service embedding (normalized when
  // configured), before any reduction.
  Var encode_sequences(Graph& g, std::span<const SequenceInput> sequences,
                       const ForwardOptions& options) const;
  // Contrastive views: reduction block of each row's service (when enabled)
  // and normalization.
  Var project_views(Graph& g, Var embeddings, std::span<const std::size_t> services) const;

  PairViews forward_batch(Graph& g, std::span<const UserExample* const> batch, std::size_t service_a,
                          std::size_t service_b, const ForwardOptions& options) const;

  // Evaluation-mode views for one user.
  std::pair<Tensor, Tensor> forward_pair(const UserExample& example, std::size_t service_a = 0,
                                         std::size_t service_b = 1) const;

  // Evaluation-mode user features, one row per example. Missing services
  // contribute a zero block (or nothing to the reduction sum).
  Tensor user_features(std::span<const UserExample> examples) const;
  Tensor user_features(const UserExample& example) const;

  // Evaluation-mode item embeddings from the Item Transformer (any mode).
  Tensor item_features(std::span<const ItemTokenRow> rows) const;

 private:
  struct Block {
    Parameter *ln1_gain, *ln1_bias;
    Parameter *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    Parameter *ln2_gain, *ln2_bias;
    Parameter *w1, *b1, *w2, *b2;
  };
  struct Encoder {
    std::vector<Block> blocks;
    Parameter* final_gain = nullptr;
    Parameter* final_bias = nullptr;
  };
  struct PackedTokens {
    std::vector<std::size_t> ids;
    std::vector<std::size_t> positions;
    std::vector<std::uint64_t> row_keys;
    std::vector<Segment> segments;
  };

  Parameter* add(std::string name, Tensor value);
  Encoder make_encoder(const std::string& prefix, Rng& rng);
  Var run_encoder(Graph& g, const Encoder& enc, Var x, std::span<const Segment> segments,
                  std::span<const std::uint64_t> row_keys, const ForwardOptions& options,
                  std::uint64_t site) const;
  void pack_item(const ItemTokenRow& row, std::uint64_t key, PackedTokens& packed) const;
  Var item_vectors(Graph& g, const PackedTokens& packed, const ForwardOptions& options) const;
  Var service_stack(Graph& g, Var item_embeds, std::span<const SequenceInput> sequences,
                    std::span<const std::size_t> item_counts, const ForwardOptions& options) const;
  Var single_sequences(Graph& g, std::span<const SequenceInput> sequences,
                       const ForwardOptions& options) const;

  ModelConfig config_;
  std::vector<std::unique_ptr<Parameter>> storage_;
  std::vector<Parameter*> order_;

  Parameter* token_embedding_ = nullptr;
  Parameter* token_position_ = nullptr;
  Parameter* service_slot_ = nullptr;
  Parameter* sequence_position_ = nullptr;  // stacked: max_items + 1 rows
  Parameter* item_index_ = nullptr;         // single: max_items rows
  Encoder item_encoder_;
  Encoder service_encoder_;
  std::vector<Parameter*> reduce_;
};

}  // namespace clue
