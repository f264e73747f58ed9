// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "CLUE-CKPT v1\n";
constexpr std::string_view kConfigEnd = "---\n";
constexpr std::string_view kTauBlock = "objective.tau";

void append_block(std::string& buf, const std::string& name, const Tensor& value) {
  buf += name + ' ' + std::to_string(value.rank());
  for (const std::size_t d : value.shape()) buf += ' ' + std::to_string(d);
  buf += '\n';
  const auto* bytes = reinterpret_cast<const char*>(value.data());
  buf.append(bytes, value.size() * sizeof(double));
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw DataError("checkpoint: bad " + what + " '" + text + "'");
  }
}

}  // namespace

std::string canonical_config(const ModelConfig& c) {
  std::ostringstream out;
  out << "vocab_size = " << c.vocab_size << '\n'
      << "embed_dim = " << c.embed_dim << '\n'
      << "ffn_dim = " << c.ffn_dim << '\n'
      << "n_layers = " << c.n_layers << '\n'
      << "n_heads = " << c.n_heads << '\n';
  out.precision(17);
  out << "dropout = " << c.dropout << '\n'
      << "max_items = " << c.max_items << '\n'
      << "item_width = " << c.item_width << '\n'
      << "n_services = " << c.n_services << '\n'
      << "mode = " << to_string(c.mode) << '\n'
      << "reduce_dim = " << c.reduce_dim << '\n'
      << "normalize_outputs = " << (c.normalize_outputs ? "true" : "false") << '\n'
      << "single_max_tokens = " << c.single_max_tokens << '\n'
      << "activation = gelu\n"
      << "norm = pre-ln\n";
  return out.str();
}

ModelConfig parse_canonical_config(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw DataError("checkpoint config: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto take = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint config: missing key '" + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  ModelConfig c;
  c.vocab_size = parse_size(take("vocab_size"), "vocab_size");
  c.embed_dim = parse_size(take("embed_dim"), "embed_dim");
  c.ffn_dim = parse_size(take("ffn_dim"), "ffn_dim");
  c.n_layers = parse_size(take("n_layers"), "n_layers");
  c.n_heads = parse_size(take("n_heads"), "n_heads");
  try {
    c.dropout = std::stod(take("dropout"));
  } catch (const std::invalid_argument&) {
    throw DataError("checkpoint config: bad dropout");
  }
  c.max_items = parse_size(take("max_items"), "max_items");
  c.item_width = parse_size(take("item_width"), "item_width");
  c.n_services = parse_size(take("n_services"), "n_services");
  try {
    c.mode = parse_encoder_mode(take("mode"));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  c.reduce_dim = parse_size(take("reduce_dim"), "reduce_dim");
  const std::string norm_out = take("normalize_outputs");
  if (norm_out != "true" && norm_out != "false") throw DataError("checkpoint config: bad normalize_outputs");
  c.normalize_outputs = norm_out == "true";
  c.single_max_tokens = parse_size(take("single_max_tokens"), "single_max_tokens");
  if (take("activation") != "gelu") throw DataError("checkpoint config: unsupported activation");
  if (take("norm") != "pre-ln") throw DataError("checkpoint config: unsupported norm placement");
  if (!kv.empty()) throw DataError("checkpoint config: unknown key '" + kv.begin()->first + "'");
  return c;
}

void save_checkpoint(std::ostream& out, const ClueModel& model, double tau) {
  std::string buf(kMagic);
  buf += canonical_config(model.config());
  buf += kConfigEnd;
  for (const Parameter* p : model.parameters()) append_block(buf, p->name, p->value);
  append_block(buf, std::string(kTauBlock), Tensor::scalar(tau));
  const std::uint64_t sum = fnv1a64(buf);
  buf.append(reinterpret_cast<const char*>(&sum), sizeof(sum));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, const ClueModel& model, double tau) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot open " + path.string() + " for writing");
  save_checkpoint(out, model, tau);
}

Checkpoint load_checkpoint(std::istream& in) {
  const std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (buf.size() < kMagic.size() + sizeof(std::uint64_t) || buf.compare(0, kMagic.size(), kMagic) != 0) {
    throw DataError("checkpoint: missing CLUE-CKPT v1 header");
  }
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (stored != fnv1a64(std::string_view(buf).substr(0, body))) {
    throw DataError("checkpoint: checksum mismatch");
  }
  const std::size_t cfg_end = buf.find("\n---\n", kMagic.size());
  if (cfg_end == std::string::npos) throw DataError("checkpoint: missing config terminator");
  const ModelConfig config =
      parse_canonical_config(std::string_view(buf).substr(kMagic.size(), cfg_end + 1 - kMagic.size()));
  std::size_t pos = cfg_end + 5;

  std::map<std::string, Tensor> blocks;
  while (pos < body) {
    const std::size_t eol = buf.find('\n', pos);
    if (eol == std::string::npos || eol >= body) throw DataError("checkpoint: truncated block header");
    std::istringstream header(buf.substr(pos, eol - pos));
    std::string name;
    std::size_t rank = 0;
    if (!(header >> name >> rank) || rank > 8) throw DataError("checkpoint: bad block header");
    Shape shape(rank);
    for (auto& d : shape) {
      if (!(header >> d)) throw DataError("checkpoint: bad dims for block " + name);
    }
    pos = eol + 1;
    const std::size_t bytes = shape_size(shape) * sizeof(double);
    if (bytes > body - pos) throw DataError("checkpoint: truncated block " + name);
    std::vector<double> data(shape_size(shape));
    std::memcpy(data.data(), buf.data() + pos, bytes);
    pos += bytes;
    if (!blocks.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw DataError("checkpoint: duplicate block " + name);
    }
  }

  Checkpoint ckpt{ClueModel(config, 0), 0.0};
  for (Parameter* p : ckpt.model.parameters()) {
    const auto it = blocks.find(p->name);
    if (it == blocks.end()) throw DataError("checkpoint: missing block " + p->name);
    if (!it->second.same_shape(p->value)) {
      throw DataError("checkpoint: block " + p->name + " has shape " + shape_string(it->second.shape()) +
                      ", expected " + shape_string(p->value.shape()));
    }
    p->value = std::move(it->second);
    blocks.erase(it);
  }
  const auto tau = blocks.find(std::string(kTauBlock));
  if (tau == blocks.end() || tau->second.size() != 1) throw DataError("checkpoint: missing objective.tau");
  ckpt.tau = tau->second[0];
  blocks.erase(tau);
  if (!blocks.empty()) throw DataError("checkpoint: unexpected block " + blocks.begin()->first);
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  return load_checkpoint(in);
}

std::uint64_t parameter_checksum(const ClueModel& model) {
  std::uint64_t h = fnv1a64("");
  for (const Parameter* p : model.parameters()) {
    h = fnv1a64(p->name, h);
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p->value.data()),
                                 p->value.size() * sizeof(double)),
                h);
  }
  return h;
}

}  // namespace clue
