// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/model.hpp"

#include <algorithm>
#include <cmath>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

namespace {

constexpr double kInitStd = 0.02;

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

std::uint64_t token_row_key(std::uint64_t key, std::size_t item, std::size_t position) {
  return derive_key(key, 0x70u, item, position);
}

std::uint64_t slot_row_key(std::uint64_t key, std::size_t position) {
  return derive_key(key, 0x5eu, position);
}

}  // namespace

std::string_view to_string(EncoderMode mode) {
  return mode == EncoderMode::stacked ? "stacked" : "single";
}

EncoderMode parse_encoder_mode(std::string_view text) {
  if (text == "stacked") return EncoderMode::stacked;
  if (text == "single") return EncoderMode::single;
  throw ConfigError("mode must be 'stacked' or 'single', got '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (embed_dim == 0 || n_heads == 0 || embed_dim % n_heads != 0) {
    throw ConfigError("embed_dim must be a positive multiple of n_heads");
  }
  if (ffn_dim < embed_dim) throw ConfigError("ffn_dim must be at least embed_dim");
  if (n_layers == 0) throw ConfigError("n_layers must be positive");
  if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
  if (max_items == 0 || item_width == 0) throw ConfigError("max_items and item_width must be positive");
  if (n_services == 0) throw ConfigError("n_services must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (mode == EncoderMode::single && single_max_tokens < item_width) {
    throw ConfigError("single_max_tokens must be at least item_width");
  }
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.vocab_size = 50257;
  c.embed_dim = 720;
  c.ffn_dim = 2880;
  c.n_layers = 8;
  c.n_heads = 6;
  c.dropout = 0.1;
  c.max_items = 512;
  c.item_width = 32;
  c.n_services = 2;
  c.single_max_tokens = 2048;
  return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

std::uint64_t sequence_key(std::string_view user_id, std::size_t service, std::uint64_t view) {
  return derive_key(fnv1a64(user_id), service, view);
}

Parameter* ClueModel::add(std::string name, Tensor value) {
  storage_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  order_.push_back(storage_.back().get());
  return order_.back();
}

ClueModel::Encoder ClueModel::make_encoder(const std::string& prefix, Rng& rng) {
  const std::size_t d = config_.embed_dim;
  const std::size_t f = config_.ffn_dim;
  Encoder enc;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = prefix + ".blocks." + std::to_string(l) + ".";
    Block b{};
    b.ln1_gain = add(p + "ln1.gain", Tensor({d}, 1.0));
    b.ln1_bias = add(p + "ln1.bias", Tensor({d}));
    b.wq = add(p + "attn.wq", normal_tensor({d, d}, kInitStd, rng));
    b.bq = add(p + "attn.bq", Tensor({d}));
    b.wk = add(p + "attn.wk", normal_tensor({d, d}, kInitStd, rng));
    b.bk = add(p + "attn.bk", Tensor({d}));
    b.wv = add(p + "attn.wv", normal_tensor({d, d}, kInitStd, rng));
    b.bv = add(p + "attn.bv", Tensor({d}));
    b.wo = add(p + "attn.wo", normal_tensor({d, d}, kInitStd, rng));
    b.bo = add(p + "attn.bo", Tensor({d}));
    b.ln2_gain = add(p + "ln2.gain", Tensor({d}, 1.0));
    b.ln2_bias = add(p + "ln2.bias", Tensor({d}));
    b.w1 = add(p + "ffn.w1", normal_tensor({d, f}, kInitStd, rng));
    b.b1 = add(p + "ffn.b1", Tensor({f}));
    b.w2 = add(p + "ffn.w2", normal_tensor({f, d}, kInitStd, rng));
    b.b2 = add(p + "ffn.b2", Tensor({d}));
    enc.blocks.push_back(b);
  }
  enc.final_gain = add(prefix + ".final_ln.gain", Tensor({d}, 1.0));
  enc.final_bias = add(prefix + ".final_ln.bias", Tensor({d}));
  return enc;
}

ClueModel::ClueModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(derive_key(seed, 0x30de1u));
  const std::size_t d = config_.embed_dim;
  token_embedding_ = add("item.token_embedding", normal_tensor({config_.vocab_size, d}, kInitStd, rng));
  token_position_ = add("item.token_position", normal_tensor({config_.item_width, d}, kInitStd, rng));
  service_slot_ = add("service.slot_embedding", normal_tensor({config_.n_services, d}, kInitStd, rng));
  if (config_.mode == EncoderMode::stacked) {
    sequence_position_ =
        add("service.sequence_position", normal_tensor({config_.max_items + 1, d}, kInitStd, rng));
    item_encoder_ = make_encoder("item", rng);
    service_encoder_ = make_encoder("service", rng);
  } else {
    item_index_ = add("single.item_index", normal_tensor({config_.max_items, d}, kInitStd, rng));
    item_encoder_ = make_encoder("item", rng);
  }
  if (config_.reduce_dim > 0) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t s = 0; s < config_.n_services; ++s) {
      reduce_.push_back(add("reduce.block." + std::to_string(s),
                            normal_tensor({d, config_.reduce_dim}, stddev, rng)));
    }
  }
}

Parameter* ClueModel::find(std::string_view name) const {
  for (Parameter* p : order_) {
    if (p->name == name) return p;
  }
  return nullptr;
}

std::size_t ClueModel::parameter_count() const {
  std::size_t total = 0;
  for (const Parameter* p : order_) total += p->value.size();
  return total;
}

void ClueModel::zero_grad() {
  for (Parameter* p : order_) p->zero_grad();
}

std::size_t ClueModel::view_dim() const noexcept {
  return config_.reduce_dim > 0 ? config_.reduce_dim : config_.embed_dim;
}

std::size_t ClueModel::feature_dim() const noexcept {
  return config_.reduce_dim > 0 ? config_.reduce_dim : config_.n_services * config_.embed_dim;
}

Var ClueModel::run_encoder(Graph& g, const Encoder& enc, Var x, std::span<const Segment> segments,
                           std::span<const std::uint64_t> row_keys, const ForwardOptions& options,
                           std::uint64_t site) const {
  const double rate = config_.dropout;
  for (std::size_t l = 0; l < enc.blocks.size(); ++l) {
    const Block& b = enc.blocks[l];
    Var h = layer_norm(x, g.parameter(*b.ln1_gain), g.parameter(*b.ln1_bias));
    Var q = linear(h, g.parameter(*b.wq), g.parameter(*b.bq));
    Var k = linear(h, g.parameter(*b.wk), g.parameter(*b.bk));
    Var v = linear(h, g.parameter(*b.wv), g.parameter(*b.bv));
    Var attn = segment_attention(q, k, v, segments, config_.n_heads);
    Var proj = linear(attn, g.parameter(*b.wo), g.parameter(*b.bo));
    x = clue::add(x, dropout(proj, rate, options.training,
                       derive_key(options.dropout_seed, site, l, 1u), row_keys));
    h = layer_norm(x, g.parameter(*b.ln2_gain), g.parameter(*b.ln2_bias));
    Var hidden = gelu(linear(h, g.parameter(*b.w1), g.parameter(*b.b1)));
    Var ffn = linear(hidden, g.parameter(*b.w2), g.parameter(*b.b2));
    x = clue::add(x, dropout(ffn, rate, options.training,
                       derive_key(options.dropout_seed, site, l, 2u), row_keys));
  }
  return layer_norm(x, g.parameter(*enc.final_gain), g.parameter(*enc.final_bias));
}

void ClueModel::pack_item(const ItemTokenRow& row, std::uint64_t key, PackedTokens& packed) const {
  const std::size_t begin = packed.ids.size();
  for (std::size_t p = 0; p < row.ids.size(); ++p) {
    const TokenId id = row.ids[p];
    if (id == kPadId) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw DimensionError("token id " + std::to_string(id) + " outside vocabulary of " +
                           std::to_string(config_.vocab_size));
    }
    if (p >= config_.item_width) {
      throw DimensionError("item row wider than item_width " + std::to_string(config_.item_width));
    }
    packed.ids.push_back(static_cast<std::size_t>(id));
    packed.positions.push_back(p);
    packed.row_keys.push_back(token_row_key(key, packed.segments.size(), p));
  }
  if (packed.ids.size() == begin) throw DimensionError("item row contains only padding");
  packed.segments.push_back({begin, packed.ids.size()});
}

Var ClueModel::item_vectors(Graph& g, const PackedTokens& packed, const ForwardOptions& options) const {
  Var x = clue::add(embedding_lookup(g.parameter(*token_embedding_), packed.ids),
              embedding_lookup(g.parameter(*token_position_), packed.positions));
  x = dropout(x, config_.dropout, options.training, derive_key(options.dropout_seed, 1u, 0u),
              packed.row_keys);
  x = run_encoder(g, item_encoder_, x, packed.segments, packed.row_keys, options, 1u);
  return mean_pool(x, packed.segments);
}

Var ClueModel::encode_items(Graph& g, std::span<const ItemTokenRow> rows, const ForwardOptions& options,
                            std::uint64_t key) const {
  if (rows.empty()) throw DimensionError("encode_items: no items");
  PackedTokens packed;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    // Segment index is the item index here, so row keys follow (key, j, p).
    pack_item(rows[j], key, packed);
  }
  return item_vectors(g, packed, options);
}

Var ClueModel::service_stack(Graph& g, Var item_embeds, std::span<const SequenceInput> sequences,
                             std::span<const std::size_t> item_counts,
                             const ForwardOptions& options) const {
  const std::size_t n_slots = config_.n_services;
  Var slots = g.parameter(*service_slot_);
  const Var parts[] = {slots, item_embeds};
  Var source = concat_rows(parts);

  std::vector<std::size_t> gather;
  std::vector<std::size_t> positions;
  std::vector<std::uint64_t> row_keys;
  std::vector<Segment> segments;
  std::vector<std::size_t> readout;
  std::size_t item_offset = 0;
  for (std::size_t si = 0; si < sequences.size(); ++si) {
    const std::size_t n = item_counts[si];
    const std::size_t begin = gather.size();
    readout.push_back(begin);
    gather.push_back(sequences[si].service);
    positions.push_back(0);
    row_keys.push_back(slot_row_key(sequences[si].key, 0));
    for (std::size_t j = 0; j < n; ++j) {
      gather.push_back(n_slots + item_offset + j);
      positions.push_back(j + 1);
      row_keys.push_back(slot_row_key(sequences[si].key, j + 1));
    }
    item_offset += n;
    segments.push_back({begin, gather.size()});
  }
  Var x = clue::add(embedding_lookup(source, gather),
              embedding_lookup(g.parameter(*sequence_position_), positions));
  x = dropout(x, config_.dropout, options.training, derive_key(options.dropout_seed, 2u, 0u), row_keys);
  x = run_encoder(g, service_encoder_, x, segments, row_keys, options, 2u);
  Var out = embedding_lookup(x, readout);
  return config_.normalize_outputs ? l2_normalize_rows(out) : out;
}

Var ClueModel::encode_service(Graph& g, Var item_embeds, std::size_t service,
                              const ForwardOptions& options, std::uint64_t key) const {
  if (config_.mode != EncoderMode::stacked) {
    throw Error("encode_service: the single encoder has no Service Transformer");
  }
  const std::size_t n = item_embeds.value().rows();
  if (n == 0 || n > config_.max_items) {
    throw DimensionError("encode_service: need 1.." + std::to_string(config_.max_items) +
                         " items, got " + std::to_string(n));
  }
  if (service >= config_.n_services) throw DimensionError("encode_service: service out of range");
  const SequenceInput seq{nullptr, service, key};
  const std::size_t counts[] = {n};
  return service_stack(g, item_embeds, std::span(&seq, 1), counts, options);
}

Var ClueModel::single_sequences(Graph& g, std::span<const SequenceInput> sequences,
                                const ForwardOptions& options) const {
  PackedTokens packed;
  std::vector<std::size_t> item_slots;
  std::vector<std::size_t> services;
  std::vector<Segment> sequence_segments;
  for (const SequenceInput& seq : sequences) {
    const auto& items = *seq.items;
    // Keep the most recent items whose tokens fit the budget.
    std::size_t first = items.size();
    std::size_t budget = 0;
    while (first > 0) {
      const std::size_t len = strip_pads(items[first - 1].ids).size();
      if (budget + len > config_.single_max_tokens) break;
      budget += len;
      --first;
    }
    if (first == items.size()) throw DimensionError("single encoder: item exceeds token budget");
    const std::size_t begin = packed.ids.size();
    for (std::size_t j = first; j < items.size(); ++j) {
      const std::size_t before = packed.ids.size();
      pack_item(items[j], seq.key, packed);
      for (std::size_t t = before; t < packed.ids.size(); ++t) {
        item_slots.push_back(j - first);
        services.push_back(seq.service);
        packed.row_keys[t] = token_row_key(seq.key, j, packed.positions[t]);
      }
    }
    sequence_segments.push_back({begin, packed.ids.size()});
  }
  Var x = clue::add(embedding_lookup(g.parameter(*token_embedding_), packed.ids),
              embedding_lookup(g.parameter(*token_position_), packed.positions));
  x = clue::add(x, embedding_lookup(g.parameter(*item_index_), item_slots));
  x = clue::add(x, embedding_lookup(g.parameter(*service_slot_), services));
  x = dropout(x, config_.dropout, options.training, derive_key(options.dropout_seed, 3u, 0u),
              packed.row_keys);
  x = run_encoder(g, item_encoder_, x, sequence_segments, packed.row_keys, options, 3u);
  Var out = mean_pool(x, sequence_segments);
  return config_.normalize_outputs ? l2_normalize_rows(out) : out;
}

Var ClueModel::encode_sequences(Graph& g, std::span<const SequenceInput> sequences,
                                const ForwardOptions& options) const {
  if (sequences.empty()) throw DimensionError("encode_sequences: no sequences");
  for (const SequenceInput& seq : sequences) {
    if (!seq.items || seq.items->empty()) throw DimensionError("encode_sequences: empty item sequence");
    if (seq.items->size() > config_.max_items) {
      throw DimensionError("encode_sequences: " + std::to_string(seq.items->size()) +
                           " items exceed max_items " + std::to_string(config_.max_items));
    }
    if (seq.service >= config_.n_services) throw DimensionError("encode_sequences: service out of range");
  }
  if (config_.mode == EncoderMode::single) return single_sequences(g, sequences, options);

  PackedTokens packed;
  std::vector<std::size_t> counts;
  for (const SequenceInput& seq : sequences) {
    for (std::size_t j = 0; j < seq.items->size(); ++j) {
      const std::size_t before = packed.ids.size();
      pack_item((*seq.items)[j], seq.key, packed);
      for (std::size_t t = before; t < packed.ids.size(); ++t) {
        packed.row_keys[t] = token_row_key(seq.key, j, packed.positions[t]);
      }
    }
    counts.push_back(seq.items->size());
  }
  Var items = item_vectors(g, packed, options);
  return service_stack(g, items, sequences, counts, options);
}

Var ClueModel::project_views(Graph& g, Var embeddings, std::span<const std::size_t> services) const {
  if (reduce_.empty()) return embeddings;
  const std::size_t n = embeddings.value().rows();
  if (services.size() != n) throw DimensionError("project_views: one service per row required");
  // Rows are grouped by service so each block is one matmul.
  std::vector<Var> parts;
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < reduce_.size(); ++s) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < n; ++r) {
      if (services[r] == s) rows.push_back(r);
    }
    if (rows.empty()) continue;
    parts.push_back(matmul(embedding_lookup(embeddings, rows), g.parameter(*reduce_[s])));
    order.insert(order.end(), rows.begin(), rows.end());
  }
  Var stacked = concat_rows(parts);
  std::vector<std::size_t> back(n);
  for (std::size_t i = 0; i < n; ++i) back[order[i]] = i;
  Var views = embedding_lookup(stacked, back);
  return config_.normalize_outputs ? l2_normalize_rows(views) : views;
}

PairViews ClueModel::forward_batch(Graph& g, std::span<const UserExample* const> batch,
                                   std::size_t service_a, std::size_t service_b,
                                   const ForwardOptions& options) const {
  const std::size_t b = batch.size();
  std::vector<SequenceInput> sequences;
  std::vector<std::size_t> services;
  for (const std::size_t service : {service_a, service_b}) {
    for (const UserExample* ex : batch) {
      if (!ex->has_service(service)) {
        throw DimensionError("forward_batch: user " + ex->user_id + " lacks service " +
                             std::to_string(service));
      }
      sequences.push_back({&ex->services[service], service, sequence_key(ex->user_id, service)});
      services.push_back(service);
    }
  }
  Var views = project_views(g, encode_sequences(g, sequences, options), services);
  std::vector<std::size_t> rows_a(b);
  std::vector<std::size_t> rows_b(b);
  for (std::size_t i = 0; i < b; ++i) {
    rows_a[i] = i;
    rows_b[i] = b + i;
  }
  return {embedding_lookup(views, rows_a), embedding_lookup(views, rows_b)};
}

std::pair<Tensor, Tensor> ClueModel::forward_pair(const UserExample& example, std::size_t service_a,
                                                  std::size_t service_b) const {
  Graph g(false);
  const UserExample* batch[] = {&example};
  const PairViews views = forward_batch(g, batch, service_a, service_b, {});
  return {views.a.value(), views.b.value()};
}

Tensor ClueModel::user_features(std::span<const UserExample> examples) const {
  const std::size_t d = config_.embed_dim;
  Tensor out({examples.size(), feature_dim()});
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const std::size_t stop = std::min(examples.size(), start + kChunk);
    std::vector<SequenceInput> sequences;
    std::vector<std::size_t> owner;
    for (std::size_t i = start; i < stop; ++i) {
      for (std::size_t s = 0; s < config_.n_services; ++s) {
        if (!examples[i].has_service(s)) continue;
        sequences.push_back({&examples[i].services[s], s, sequence_key(examples[i].user_id, s)});
        owner.push_back(i);
      }
    }
    if (sequences.empty()) continue;
    Graph g(false);
    const Tensor embeds = encode_sequences(g, sequences, {}).value();
    if (reduce_.empty()) {
      for (std::size_t r = 0; r < sequences.size(); ++r) {
        const std::size_t offset = sequences[r].service * d;
        for (std::size_t c = 0; c < d; ++c) out(owner[r], offset + c) = embeds(r, c);
      }
      continue;
    }
    const std::size_t rd = config_.reduce_dim;
    for (std::size_t r = 0; r < sequences.size(); ++r) {
      const Tensor& w = reduce_[sequences[r].service]->value;
      for (std::size_t c = 0; c < rd; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < d; ++t) acc += embeds(r, t) * w(t, c);
        out(owner[r], c) += acc;
      }
    }
    for (std::size_t i = start; i < stop; ++i) {
      for (std::size_t c = 0; c < rd; ++c) {
        const double x = out(i, c);
        out(i, c) = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
      }
    }
  }
  return out;
}

Tensor ClueModel::user_features(const UserExample& example) const {
  return user_features(std::span(&example, 1));
}

Tensor ClueModel::item_features(std::span<const ItemTokenRow> rows) const {
  Tensor out({rows.size(), config_.embed_dim});
  constexpr std::size_t kChunk = 512;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::size_t stop = std::min(rows.size(), start + kChunk);
    Graph g(false);
    const Tensor part = encode_items(g, rows.subspan(start, stop - start)).value();
    std::copy_n(part.data(), part.size(), out.data() + start * config_.embed_dim);
  }
  return out;
}

}  // namespace clue
