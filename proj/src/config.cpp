// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/config.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "clue/error.hpp"

namespace clue {

namespace {

constexpr std::string_view kPublished = "published recipe";
constexpr std::string_view kPublishedArch = "published best model";
constexpr std::string_view kChoice = "implementation choice";
constexpr std::string_view kProtocol = "published eval protocol";

// clang-format off
constexpr std::array kKeys{
    KeySpec{"run", "profile", "desk", "paper", kChoice, "default profile: desk or paper"},
    KeySpec{"run", "seed", "0", "0", kChoice, "all randomness derives from this seed"},

    KeySpec{"data", "services", "svc0,svc1", "svc0,svc1", kChoice, "pretraining services, in slot order"},
    KeySpec{"data", "unseen_service_slot", "0", "0", kChoice, "slot for services not listed; 'none' drops them"},
    KeySpec{"data", "vocab_size", "1024", "50257", kPublished, "byte-level BPE vocabulary size"},
    KeySpec{"data", "max_items", "512", "512", kPublished, "items kept per service (most recent)"},
    KeySpec{"data", "item_width", "32", "32", kPublished, "tokens per item row"},
    KeySpec{"data", "train_frac", "0.8", "0.8", kChoice, "user split: train fraction"},
    KeySpec{"data", "val_frac", "0.1", "0.1", kChoice, "user split: validation fraction"},
    KeySpec{"data", "test_frac", "0.1", "0.1", kChoice, "user split: test fraction"},

    KeySpec{"model", "embed_dim", "64", "720", kPublishedArch, "hidden width d"},
    KeySpec{"model", "ffn_dim", "256", "2880", kPublishedArch, "feed-forward width"},
    KeySpec{"model", "n_layers", "2", "8", kPublishedArch, "blocks per Transformer"},
    KeySpec{"model", "n_heads", "4", "6", kPublishedArch, "attention heads"},
    KeySpec{"model", "dropout", "0.1", "0.1", kPublishedArch, "dropout rate"},
    KeySpec{"model", "mode", "stacked", "stacked", kPublishedArch, "stacked or single encoder"},
    KeySpec{"model", "reduce_dim", "0", "0", kChoice, "output reduction width; 0 disables"},
    KeySpec{"model", "normalize_outputs", "true", "true", kChoice, "L2-normalize user embeddings"},
    KeySpec{"model", "single_max_tokens", "512", "2048", kChoice, "token budget of the single encoder"},

    KeySpec{"objective", "objective", "clue", "clue", kPublished, "clue (CLIP-style) or simclr"},
    KeySpec{"objective", "tau_init", "14.27", "14.27", kPublished, "initial logit scale"},
    KeySpec{"objective", "tau_min", "0.01", "0.01", kChoice, "lower clamp of the logit scale"},
    KeySpec{"objective", "tau_max", "100", "100", kPublished, "upper clamp of the logit scale"},
    KeySpec{"objective", "augment_rate", "0.2", "0.2", kChoice, "simclr augmentation rate"},
    KeySpec{"objective", "service_a", "0", "0", kChoice, "first service of the contrastive pair"},
    KeySpec{"objective", "service_b", "1", "1", kChoice, "second service of the contrastive pair"},

    KeySpec{"train", "peak_lr", "5e-4", "5e-4", kPublished, "peak learning rate"},
    KeySpec{"train", "warmup_frac", "0.01", "0.01", kPublished, "warmup share of total steps"},
    KeySpec{"train", "final_lr_frac", "0.1", "0.1", kPublished, "final lr as a share of peak"},
    KeySpec{"train", "weight_decay", "0.1", "0.1", kPublished, "AdamW decoupled weight decay"},
    KeySpec{"train", "beta1", "0.9", "0.9", kPublished, "Adam beta1"},
    KeySpec{"train", "beta2", "0.98", "0.98", kPublished, "Adam beta2"},
    KeySpec{"train", "adam_eps", "1e-6", "1e-6", kPublished, "Adam epsilon"},
    KeySpec{"train", "clip_norm", "0.01", "0.01", kPublished, "global gradient norm bound"},
    KeySpec{"train", "epochs", "8", "8", kPublished, "epochs when total_steps = 0"},
    KeySpec{"train", "global_batch", "32", "256", kPublished, "users per optimizer step"},
    KeySpec{"train", "micro_batch", "8", "4", kPublished, "users per micro-batch (one loss worker each)"},
    KeySpec{"train", "shuffle", "true", "true", kPublished, "reshuffle users every epoch"},
    KeySpec{"train", "total_steps", "0", "0", kChoice, "0 means epochs x batches per epoch"},
    KeySpec{"train", "eval_every", "0", "0", kChoice, "held-out loss interval; 0 = final step only"},

    KeySpec{"downstream", "target_service", "target", "target", kChoice, "service holding downstream targets"},
    KeySpec{"downstream", "n_negatives", "100", "100", kProtocol, "negatives per ranking case"},
    KeySpec{"downstream", "max_history", "64", "64", kProtocol, "target-service history kept per user"},
    KeySpec{"downstream", "n_targets", "3", "3", kProtocol, "held-out targets per user"},
    KeySpec{"downstream", "ks", "1,5,10", "1,5,10", kProtocol, "cutoffs for HR@k and NDCG@k"},
    KeySpec{"downstream", "head_hidden", "512,256,128,64", "512,256,128,64", kPublished, "head MLP hidden widths"},
    KeySpec{"downstream", "head_output", "64", "64", kChoice, "head output width"},
    KeySpec{"downstream", "head_epochs", "10", "10", kChoice, "head training epochs"},
    KeySpec{"downstream", "head_lr", "1e-3", "1e-3", kChoice, "head learning rate"},
    KeySpec{"downstream", "head_batch", "256", "256", kChoice, "head batch size (cases)"},

    KeySpec{"sweep", "sweep_sizes", "16x1,32x1,64x2", "16x1,32x1,64x2", kChoice, "model sizes as <d>x<layers>"},
    KeySpec{"sweep", "sweep_batches", "32", "32", kChoice, "global batch sizes"},
    KeySpec{"sweep", "sweep_seq_lens", "16", "16", kChoice, "items per service"},
    KeySpec{"sweep", "sweep_fractions", "1", "1", kChoice, "training data fractions"},
    KeySpec{"sweep", "sweep_shuffles", "true", "true", kChoice, "batch shuffling settings"},
    KeySpec{"sweep", "sweep_steps", "300", "300", kChoice, "optimizer steps per run"},
    KeySpec{"sweep", "sweep_seeds", "0", "0", kChoice, "seeds per grid point"},
    KeySpec{"sweep", "max_pf_days", "1e-3", "1e-3", kChoice, "per-run compute cap"},
};
// clang-format on

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string valid_keys() {
  std::string out;
  for (const KeySpec& k : kKeys) out += (out.empty() ? "" : ", ") + std::string(k.key);
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("config key '" + std::string(key) + "': expected " + std::string(want) + ", got '" +
                    std::string(value) + "'");
}

}  // namespace

std::string_view to_string(Profile profile) { return profile == Profile::desk ? "desk" : "paper"; }

Profile parse_profile(std::string_view text) {
  if (text == "desk") return Profile::desk;
  if (text == "paper") return Profile::paper;
  throw ConfigError("profile must be 'desk' or 'paper', got '" + std::string(text) + "'");
}

std::span<const KeySpec> config_keys() { return kKeys; }

const KeySpec* find_key(std::string_view key) {
  for (const KeySpec& k : kKeys) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

std::string describe_keys() {
  std::ostringstream out;
  std::string_view section;
  for (const KeySpec& k : kKeys) {
    if (k.section != section) {
      section = k.section;
      out << "\n[" << section << "]\n";
    }
    std::string line = "  " + std::string(k.key) + " = " + std::string(k.desk);
    line.resize(std::max<std::size_t>(line.size() + 1, 36), ' ');
    out << line << k.help;
    if (k.paper != k.desk) {
      out << " (paper profile: " << k.paper << ", " << k.provenance << ")";
    } else if (k.provenance != kChoice) {
      out << " (" << k.provenance << ")";
    }
    out << '\n';
  }
  return out.str();
}

Config::Config(Profile profile) : profile_(profile) {
  for (const KeySpec& k : kKeys) values_[std::string(k.key)] = std::string(profile == Profile::desk ? k.desk : k.paper);
  values_["profile"] = std::string(to_string(profile));
}

std::vector<std::pair<std::string, std::string>> Config::parse_ini(std::istream& in, std::string_view origin) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string section;
  std::string raw;
  std::size_t line_no = 0;
  const std::string where(origin);
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string at = where + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(at + ": malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      const bool known = std::any_of(kKeys.begin(), kKeys.end(), [&](const KeySpec& k) { return k.section == section; });
      if (!known) throw ConfigError(at + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError(at + ": unknown key '" + key + "'; valid keys: " + valid_keys());
    if (!section.empty() && spec->section != section) {
      throw ConfigError(at + ": key '" + key + "' belongs in [" + std::string(spec->section) + "]");
    }
    out.emplace_back(key, value);
  }
  return out;
}

Config Config::resolve(const std::optional<std::filesystem::path>& file,
                       std::span<const std::pair<std::string, std::string>> overrides,
                       std::optional<Profile> profile) {
  std::vector<std::pair<std::string, std::string>> entries;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    entries = parse_ini(in, file->string());
  }
  if (!profile) {
    profile = Profile::desk;
    for (const auto& [k, v] : entries) {
      if (k == "profile") profile = parse_profile(v);
    }
    for (const auto& [k, v] : overrides) {
      if (k == "profile") profile = parse_profile(v);
    }
  }
  Config cfg(*profile);
  for (const auto& [k, v] : entries) {
    if (k != "profile") cfg.set(k, v);
  }
  for (const auto& [k, v] : overrides) {
    if (k != "profile") cfg.set(k, v);
  }
  // Surface bad values now rather than mid-run.
  (void)cfg.model();
  (void)cfg.train();
  (void)cfg.objective();
  (void)cfg.head();
  (void)cfg.split();
  (void)cfg.examples();
  (void)cfg.sweep();
  return cfg;
}

void Config::set(std::string_view key, std::string_view value) {
  if (!find_key(key)) throw ConfigError("unknown key '" + std::string(key) + "'; valid keys: " + valid_keys());
  if (key == "profile") throw ConfigError("profile can only be chosen when resolving a configuration");
  values_[std::string(key)] = trim(value);
}

const std::string& Config::get(std::string_view key) const {
  const auto it = values_.find(std::string(key));
  if (it == values_.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  return it->second;
}

std::size_t Config::get_size(std::string_view key) const {
  return static_cast<std::size_t>(get_u64(key));
}

std::uint64_t Config::get_u64(std::string_view key) const {
  const std::string& v = get(key);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) bad_value(key, v, "a non-negative integer");
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    bad_value(key, v, "a non-negative integer");
  }
}

double Config::get_double(std::string_view key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || !std::isfinite(d)) bad_value(key, v, "a finite number");
  return d;
}

bool Config::get_bool(std::string_view key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

std::vector<std::string> Config::get_list(std::string_view key) const {
  std::vector<std::string> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, get(key), "a comma-separated list");
    out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> Config::get_sizes(std::string_view key) const {
  std::vector<std::size_t> out;
  for (const std::string& item : get_list(key)) {
    if (item.find_first_not_of("0123456789") != std::string::npos) bad_value(key, get(key), "a list of integers");
    out.push_back(std::stoull(item));
  }
  return out;
}

std::string Config::to_ini() const {
  std::ostringstream out;
  out << "profile = " << to_string(profile_) << '\n';
  std::string_view section;
  for (const KeySpec& k : kKeys) {
    if (k.key == "profile") continue;
    if (k.section != section) {
      section = k.section;
      out << "\n[" << section << "]\n";
    }
    out << k.key << " = " << get(k.key) << '\n';
  }
  return out.str();
}

ModelConfig Config::model() const {
  ModelConfig m;
  m.vocab_size = get_size("vocab_size");
  m.embed_dim = get_size("embed_dim");
  m.ffn_dim = get_size("ffn_dim");
  m.n_layers = get_size("n_layers");
  m.n_heads = get_size("n_heads");
  m.dropout = get_double("dropout");
  m.max_items = get_size("max_items");
  m.item_width = get_size("item_width");
  m.n_services = services().size();
  m.mode = parse_encoder_mode(get("mode"));
  m.reduce_dim = get_size("reduce_dim");
  m.normalize_outputs = get_bool("normalize_outputs");
  m.single_max_tokens = get_size("single_max_tokens");
  m.validate();
  return m;
}

TrainConfig Config::train() const {
  TrainConfig t;
  t.peak_lr = get_double("peak_lr");
  t.warmup_frac = get_double("warmup_frac");
  t.final_lr_frac = get_double("final_lr_frac");
  t.weight_decay = get_double("weight_decay");
  t.beta1 = get_double("beta1");
  t.beta2 = get_double("beta2");
  t.eps = get_double("adam_eps");
  t.clip_norm = get_double("clip_norm");
  t.epochs = get_size("epochs");
  t.global_batch = get_size("global_batch");
  t.micro_batch = get_size("micro_batch");
  t.shuffle = get_bool("shuffle");
  t.seed = seed();
  t.total_steps = get_size("total_steps");
  t.eval_every = get_size("eval_every");
  t.service_a = get_size("service_a");
  t.service_b = get_size("service_b");
  t.objective = parse_objective_kind(get("objective"));
  t.augment_rate = get_double("augment_rate");
  t.validate();
  if (t.service_a >= services().size() || t.service_b >= services().size()) {
    throw ConfigError("service_a and service_b must index the services list");
  }
  return t;
}

ObjectiveState Config::objective() const {
  return ObjectiveState(get_double("tau_init"), get_double("tau_min"), get_double("tau_max"));
}

HeadConfig Config::head() const {
  HeadConfig h;
  h.hidden = get_sizes("head_hidden");
  h.output_dim = get_size("head_output");
  h.epochs = get_size("head_epochs");
  h.lr = get_double("head_lr");
  h.batch = get_size("head_batch");
  h.seed = derive_key(seed(), 0x4eadu);
  if (h.output_dim == 0 || h.batch == 0 || !(h.lr > 0.0)) throw ConfigError("head_output, head_batch and head_lr must be positive");
  return h;
}

ExampleOptions Config::examples() const {
  ExampleOptions o;
  o.max_items = get_size("max_items");
  o.item_width = get_size("item_width");
  o.require_all_services = true;
  if (get("unseen_service_slot") != "none") {
    o.unseen_service_slot = get_size("unseen_service_slot");
    if (*o.unseen_service_slot >= services().size()) throw ConfigError("unseen_service_slot must index the services list");
  }
  return o;
}

SplitSpec Config::split() const {
  SplitSpec s;
  s.seed = seed();
  s.train = get_double("train_frac");
  s.val = get_double("val_frac");
  s.test = get_double("test_frac");
  if (s.train < 0 || s.val < 0 || s.test < 0 || std::abs(s.train + s.val + s.test - 1.0) > 1e-9) {
    throw ConfigError("train_frac + val_frac + test_frac must equal 1");
  }
  return s;
}

DownstreamOptions Config::downstream() const {
  DownstreamOptions d;
  d.n_negatives = get_size("n_negatives");
  d.max_history = get_size("max_history");
  d.n_targets = get_size("n_targets");
  d.seed = derive_key(seed(), 0xd0e5u);
  return d;
}

SweepSpec Config::sweep() const {
  SweepSpec s;
  s.model_sizes = parse_model_sizes(get("sweep_sizes"));
  s.batches = get_sizes("sweep_batches");
  s.seq_lens = get_sizes("sweep_seq_lens");
  s.data_fractions.clear();
  for (const std::string& f : get_list("sweep_fractions")) {
    char* end = nullptr;
    const double v = std::strtod(f.c_str(), &end);
    if (*end != '\0') bad_value("sweep_fractions", f, "a number");
    s.data_fractions.push_back(v);
  }
  s.shuffles.clear();
  for (const std::string& f : get_list("sweep_shuffles")) {
    if (f != "true" && f != "false") bad_value("sweep_shuffles", f, "true or false");
    s.shuffles.push_back(f == "true");
  }
  s.steps = get_size("sweep_steps");
  s.seeds.clear();
  for (const std::size_t v : get_sizes("sweep_seeds")) s.seeds.push_back(v);
  s.max_pf_days = get_double("max_pf_days");
  s.validate();
  return s;
}

}  // namespace clue
