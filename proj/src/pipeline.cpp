// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

std::vector<BehaviorEvent> read_behavior_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open behavior log " + path.string());
  return read_behavior_log(in);
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  return Vocab::load(in);
}

Vocab train_vocab(std::span<const BehaviorEvent> events, std::size_t vocab_size) {
  std::vector<std::string> corpus;
  corpus.reserve(events.size());
  for (const BehaviorEvent& e : events) corpus.push_back(e.item_text);
  return Vocab::train(corpus, vocab_size);
}

UserSplit split_log_users(std::span<const BehaviorEvent> events, const SplitSpec& spec) {
  std::set<std::string> ids;
  for (const BehaviorEvent& e : events) ids.insert(e.user_id);
  const std::vector<std::string> users(ids.begin(), ids.end());
  return split_users(users, spec);
}

PreparedData prepare_data(std::span<const BehaviorEvent> events, const Vocab& vocab, const Config& cfg) {
  PreparedData data;
  data.services = cfg.services();
  const ExampleOptions options = cfg.examples();
  data.item_width = options.item_width;
  const UserSplit split = split_log_users(events, cfg.split());
  std::map<std::string, int> part;
  for (const auto& id : split.train) part[id] = 0;
  for (const auto& id : split.val) part[id] = 1;
  for (const auto& id : split.test) part[id] = 2;

  for (const auto& [user, log] : group_by_user(events)) {
    auto example = build_user_example(log, data.services, vocab, options);
    if (!example) {
      ++data.skipped;
      continue;
    }
    switch (part.at(user)) {
      case 0: data.train.push_back(std::move(*example)); break;
      case 1: data.val.push_back(std::move(*example)); break;
      default: data.test.push_back(std::move(*example)); break;
    }
  }
  return data;
}

void save_prepared(std::ostream& out, const PreparedData& data) {
  out << "CLUE-DATA v1 " << data.services.size() << ' ' << data.item_width << "\nservices";
  for (const std::string& s : data.services) out << ' ' << s;
  out << '\n';
  auto write_part = [&](const char* name, const std::vector<UserExample>& part) {
    for (const UserExample& ex : part) {
      out << "user " << name << ' ' << ex.user_id;
      for (const auto& seq : ex.services) out << ' ' << seq.size();
      out << '\n';
      for (const auto& seq : ex.services) {
        for (const ItemTokenRow& row : seq) {
          for (std::size_t i = 0; i < row.true_length; ++i) out << (i ? " " : "") << row.ids[i];
          out << '\n';
        }
      }
    }
  };
  write_part("train", data.train);
  write_part("val", data.val);
  write_part("test", data.test);
  if (!out) throw Error("prepared data: write failed");
}

PreparedData load_prepared(std::istream& in) {
  PreparedData data;
  std::string line;
  std::size_t n_services = 0;
  {
    if (!std::getline(in, line)) throw DataError("prepared data: empty input");
    std::istringstream header(line);
    std::string magic;
    std::string version;
    if (!(header >> magic >> version >> n_services >> data.item_width) || magic != "CLUE-DATA" || version != "v1") {
      throw DataError("prepared data: missing CLUE-DATA v1 header");
    }
  }
  if (!std::getline(in, line) || line.rfind("services", 0) != 0) throw DataError("prepared data: missing services line");
  {
    std::istringstream names(line.substr(8));
    std::string name;
    while (names >> name) data.services.push_back(name);
    if (data.services.size() != n_services) throw DataError("prepared data: service count mismatch");
  }
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string tag;
    std::string part;
    UserExample ex;
    if (!(head >> tag >> part >> ex.user_id) || tag != "user") {
      throw DataError("prepared data: expected a user record on line " + std::to_string(line_no));
    }
    std::vector<std::size_t> counts(n_services);
    for (auto& c : counts) {
      if (!(head >> c)) throw DataError("prepared data: bad counts on line " + std::to_string(line_no));
    }
    ex.services.resize(n_services);
    for (std::size_t s = 0; s < n_services; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) {
        if (!std::getline(in, line)) throw DataError("prepared data: truncated user " + ex.user_id);
        ++line_no;
        std::istringstream ids(line);
        ItemTokenRow row;
        long long id = 0;
        while (ids >> id) {
          if (id <= 0 || id > INT32_MAX) throw DataError("prepared data: bad token id on line " + std::to_string(line_no));
          row.ids.push_back(static_cast<TokenId>(id));
        }
        if (row.ids.empty() || row.ids.size() > data.item_width) {
          throw DataError("prepared data: bad item row on line " + std::to_string(line_no));
        }
        row.true_length = row.ids.size();
        row.ids.resize(data.item_width, kPadId);
        ex.services[s].push_back(std::move(row));
      }
    }
    if (part == "train") {
      data.train.push_back(std::move(ex));
    } else if (part == "val") {
      data.val.push_back(std::move(ex));
    } else if (part == "test") {
      data.test.push_back(std::move(ex));
    } else {
      throw DataError("prepared data: unknown split '" + part + "'");
    }
  }
  return data;
}

PretrainResult pretrain(const PreparedData& data, const Config& cfg, const Trainer::Progress& progress) {
  ModelConfig mc = cfg.model();
  if (mc.n_services != data.services.size()) throw ConfigError("prepared data and config disagree on services");
  if (mc.item_width != data.item_width) throw ConfigError("prepared data and config disagree on item_width");
  PretrainResult result{ClueModel(mc, derive_key(cfg.seed(), 0x30deu)), cfg.objective(), {}};
  Trainer trainer(result.model, result.objective, cfg.train());
  const std::vector<UserExample>& eval = data.val.size() >= 2 ? data.val : data.test;
  result.records = trainer.train(data.train, eval, progress);
  return result;
}

TransferReport run_transfer(const ClueModel& model, const Vocab& vocab, std::span<const BehaviorEvent> events,
                            const Config& cfg) {
  const std::string target = cfg.get("target_service");
  const std::vector<std::string> services = cfg.services();
  if (std::find(services.begin(), services.end(), target) != services.end()) {
    throw ConfigError("target_service must not be a pretraining service");
  }
  std::vector<BehaviorEvent> history_events;
  std::vector<BehaviorEvent> target_events;
  for (const BehaviorEvent& e : events) (e.service_id == target ? target_events : history_events).push_back(e);
  if (target_events.empty()) throw DataError("no events for target service '" + target + "'");

  const auto cases = build_downstream_cases(group_by_user(history_events), group_by_user(target_events),
                                            cfg.downstream());
  const UserSplit split = split_log_users(events, cfg.split());
  const std::set<std::string> train_users(split.train.begin(), split.train.end());
  const std::set<std::string> test_users(split.test.begin(), split.test.end());

  ExampleOptions options = cfg.examples();
  options.require_all_services = false;
  TransferReport report;

  // One feature row per user, from the history shared by that user's cases.
  std::vector<UserExample> examples;
  std::map<std::string, std::size_t> user_row;
  for (const DownstreamCase& c : cases) {
    if (user_row.count(c.user_id) || (!train_users.count(c.user_id) && !test_users.count(c.user_id))) continue;
    auto ex = build_user_example(c.history, services, vocab, options);
    if (!ex) {
      ++report.omitted_users;
      continue;
    }
    user_row[c.user_id] = examples.size();
    examples.push_back(std::move(*ex));
  }
  std::map<std::string, std::size_t> item_row;
  std::vector<ItemTokenRow> item_rows;
  auto item_index = [&](const std::string& text) {
    const auto [it, fresh] = item_row.emplace(text, item_rows.size());
    if (fresh) item_rows.push_back(encode_item(text, vocab, model.config().item_width));
    return it->second;
  };

  TransferData train_data;
  TransferData test_data;
  for (const DownstreamCase& c : cases) {
    const auto u = user_row.find(c.user_id);
    if (u == user_row.end()) continue;
    RankingCase rc;
    rc.user = u->second;
    rc.candidates.push_back(item_index(c.positive));
    for (const std::string& neg : c.negatives) rc.candidates.push_back(item_index(neg));
    if (train_users.count(c.user_id)) {
      train_data.cases.push_back(std::move(rc));
    } else {
      test_data.cases.push_back(std::move(rc));
      report.scores.user_ids.push_back(c.user_id);
    }
  }
  if (train_data.cases.empty() || test_data.cases.empty()) {
    throw DataError("downstream: need cases for both train and test users");
  }
  train_data.users = model.user_features(examples);
  train_data.items = model.item_features(item_rows);
  test_data.users = train_data.users;
  test_data.items = train_data.items;

  const HeadConfig head_cfg = cfg.head();
  TransferHead head(train_data.users.cols(), train_data.items.cols(), head_cfg);
  report.head_losses = train_head(head, train_data, head_cfg, cfg.train());
  report.scores.scores = score_cases(head, test_data);
  report.test_loss = ranking_loss(report.scores.scores);
  report.metrics = rank_metrics(report.scores.scores, cfg.get_sizes("ks"));
  report.n_train_cases = train_data.cases.size();
  report.n_test_cases = test_data.cases.size();
  return report;
}

ModelConfig sweep_model_config(const Config& cfg, const SweepPoint& point) {
  ModelConfig mc = cfg.model();
  mc.embed_dim = point.size.embed_dim;
  mc.n_layers = point.size.n_layers;
  mc.n_heads = std::max<std::size_t>(1, mc.embed_dim / 16);
  while (mc.embed_dim % mc.n_heads != 0) --mc.n_heads;
  mc.ffn_dim = 4 * mc.embed_dim;
  mc.max_items = point.seq_len;
  mc.validate();
  return mc;
}

std::vector<RunResult> run_scaling_sweep(std::span<const BehaviorEvent> events, const Vocab& vocab,
                                         const Config& cfg, std::ostream* csv,
                                         const std::function<void(const RunResult&)>& progress) {
  const SweepSpec spec = cfg.sweep();
  std::map<std::size_t, PreparedData> prepared;
  auto data_for = [&](std::size_t seq_len) -> const PreparedData& {
    auto it = prepared.find(seq_len);
    if (it == prepared.end()) {
      Config c = cfg;
      c.set("max_items", std::to_string(seq_len));
      it = prepared.emplace(seq_len, prepare_data(events, vocab, c)).first;
    }
    return it->second;
  };
  auto counter = [&](const SweepPoint& p) { return ClueModel(sweep_model_config(cfg, p), 0).parameter_count(); };
  auto runner = [&](const SweepPoint& p) {
    const PreparedData& data = data_for(p.seq_len);
    std::vector<UserExample> train = data.train;
    const auto keep = static_cast<std::size_t>(std::llround(p.data_fraction * static_cast<double>(train.size())));
    if (keep < train.size()) {
      Rng rng(derive_key(p.seed, 0xf7acu));
      rng.shuffle(train);
      train.resize(keep);
    }
    Config c = cfg;
    c.set("seed", std::to_string(p.seed));
    c.set("max_items", std::to_string(p.seq_len));
    c.set("global_batch", std::to_string(p.batch));
    c.set("micro_batch", std::to_string(p.batch));
    c.set("total_steps", std::to_string(p.steps));
    c.set("shuffle", p.shuffle ? "true" : "false");
    ClueModel model(sweep_model_config(cfg, p), derive_key(p.seed, 0x30deu));
    ObjectiveState objective = c.objective();
    Trainer trainer(model, objective, c.train());
    trainer.train(train, {});
    RunResult r;
    r.test_loss = trainer.eval_loss(data.test);
    const TransferReport t = run_transfer(model, vocab, events, c);
    r.transfer_loss = t.test_loss;
    r.transfer_mrr = t.metrics.mrr;
    return r;
  };
  return run_sweep(spec, counter, runner, csv, progress);
}

}  // namespace clue
