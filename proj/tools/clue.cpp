// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "clue/checkpoint.hpp"
#include "clue/config.hpp"
#include "clue/error.hpp"
#include "clue/pipeline.hpp"
#include "clue/scalelab.hpp"
#include "clue/synth.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace clue;
using clue::tools::RunManifest;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string profile;
  std::string manifest;
};

void add_common(CLI::App* sub, Common& c, bool with_config = true) {
  if (with_config) {
    sub->add_option("--config", c.config, "configuration file (key = value, [section] headers)")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", c.sets, "override a key: --set key=value (repeatable)");
    sub->add_option("--profile", c.profile, "desk or paper defaults");
  }
  sub->add_option("--manifest", c.manifest, "run manifest path (default: <output>.manifest.json)");
}

Config resolve(const Common& c) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const std::string& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  std::optional<fs::path> file;
  if (!c.config.empty()) file = c.config;
  std::optional<Profile> profile;
  if (!c.profile.empty()) profile = parse_profile(c.profile);
  return Config::resolve(file, overrides, profile);
}

class Run {
 public:
  Run(std::string command, const std::vector<std::string>& argv, const Common& common)
      : manifest_path_(common.manifest) {
    m_.command = std::move(command);
    m_.argv = argv;
    m_.started = tools::utc_now();
  }

  void config(const Config& cfg) {
    m_.profile = std::string(to_string(cfg.profile()));
    m_.config = cfg.values();
    m_.seed = cfg.seed();
  }
  void setting(const std::string& key, const std::string& value) { m_.config[key] = value; }
  void seed(std::uint64_t s) { m_.seed = s; }
  void input(const fs::path& p) { m_.inputs[p.string()] = tools::file_checksum(p); }
  void output(const fs::path& p) {
    m_.outputs[p.string()] = tools::file_checksum(p);
    if (primary_.empty()) primary_ = p;
  }
  void finish() {
    m_.finished = tools::utc_now();
    fs::path path = manifest_path_;
    if (path.empty()) {
      path = primary_;
      path += ".manifest.json";
    }
    m_.write(path);
    std::cout << "manifest: " << path.string() << '\n';
  }

 private:
  RunManifest m_;
  fs::path manifest_path_;
  fs::path primary_;
};

template <class Fn>
void write_file(const fs::path& path, Fn&& fn, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  fn(out);
  if (!out) throw Error("write failed: " + path.string());
}

int run_cli(const std::vector<std::string>& args);

int replay(const fs::path& manifest_path) {
  const RunManifest m = RunManifest::read(manifest_path);
  Config cfg(m.profile.empty() ? Profile::desk : parse_profile(m.profile));
  const fs::path dir = fs::temp_directory_path();
  const fs::path ini = dir / ("clue-replay-" + std::to_string(::getpid()) + ".ini");
  const fs::path new_manifest = dir / ("clue-replay-" + std::to_string(::getpid()) + ".json");
  std::vector<std::string> args{"clue"};
  bool uses_config = false;
  for (const auto& [k, v] : m.config) {
    if (find_key(k) && k != "profile") {
      cfg.set(k, v);
      uses_config = true;
    }
  }
  for (std::size_t i = 0; i < m.argv.size(); ++i) {
    const std::string& a = m.argv[i];
    if (a == "--config" || a == "--set" || a == "--profile" || a == "--manifest") {
      ++i;
      continue;
    }
    args.push_back(a);
  }
  if (uses_config) {
    write_file(ini, [&](std::ostream& out) { out << cfg.to_ini(); });
    args.insert(args.begin() + 2, {"--config", ini.string()});
  }
  args.insert(args.begin() + 2, {"--manifest", new_manifest.string()});
  std::cout << "replaying " << m.command << '\n';
  const int code = run_cli(args);
  fs::remove(ini);
  fs::remove(new_manifest);
  if (code != kOk) return code;
  std::size_t mismatches = 0;
  for (const auto& [path, sum] : m.outputs) {
    const std::string now = tools::file_checksum(path);
    if (now != sum) {
      std::cerr << "replay: " << path << " differs (" << now << " vs " << sum << ")\n";
      ++mismatches;
    }
  }
  if (mismatches > 0) return kData;
  std::cout << "replay: " << m.outputs.size() << " output(s) identical\n";
  return kOk;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Contrastive multi-service user representation toolkit", "clue"};
  app.require_subcommand(1);
  app.footer("Configuration keys (desk profile defaults):\n" + describe_keys());

  // synth
  Common synth_common;
  SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a clustered synthetic behavior log");
  synth->add_option("--users", synth_cfg.users, "number of users")->capture_default_str();
  synth->add_option("--clusters", synth_cfg.clusters, "latent user clusters")->capture_default_str();
  synth->add_option("--services", synth_cfg.services, "services svc0..svcN-1")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "random seed")->capture_default_str();
  synth->add_option("--target-items", synth_cfg.target_items, "events per user in the 'target' service")
      ->capture_default_str();
  synth->add_option("--out", synth_out, "output log (TSV)")->required();
  add_common(synth, synth_common, false);

  // tokenizer-train
  Common tok_common;
  std::string tok_log;
  std::string tok_out;
  auto* tok = app.add_subcommand("tokenizer-train", "train the byte-level BPE vocabulary");
  tok->add_option("--log", tok_log, "behavior log")->required()->check(CLI::ExistingFile);
  tok->add_option("--out", tok_out, "vocabulary file")->required();
  add_common(tok, tok_common);

  // prepare
  Common prep_common;
  std::string prep_log;
  std::string prep_vocab;
  std::string prep_out;
  auto* prep = app.add_subcommand("prepare", "tokenize and split users into training examples");
  prep->add_option("--log", prep_log, "behavior log")->required()->check(CLI::ExistingFile);
  prep->add_option("--vocab", prep_vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  prep->add_option("--out", prep_out, "prepared data file")->required();
  add_common(prep, prep_common);

  // pretrain
  Common pre_common;
  std::string pre_data;
  std::string pre_out;
  std::string pre_loss;
  std::size_t log_every = 50;
  auto* pre = app.add_subcommand("pretrain", "contrastive pretraining");
  pre->add_option("--data", pre_data, "prepared data file")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "checkpoint path")->required();
  pre->add_option("--loss-csv", pre_loss, "loss curve CSV (default: <out>.loss.csv)");
  pre->add_option("--log-every", log_every, "progress interval in steps")->capture_default_str();
  add_common(pre, pre_common);

  // extract
  Common ext_common;
  std::string ext_ckpt;
  std::string ext_vocab;
  std::string ext_log;
  std::string ext_out;
  auto* ext = app.add_subcommand("extract", "write frozen user features");
  ext->add_option("--checkpoint", ext_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  ext->add_option("--vocab", ext_vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  ext->add_option("--log", ext_log, "behavior log of the users to featurize")->required()->check(CLI::ExistingFile);
  ext->add_option("--out", ext_out, "feature table")->required();
  add_common(ext, ext_common);

  // transfer
  Common tr_common;
  std::string tr_ckpt;
  std::string tr_vocab;
  std::string tr_log;
  std::string tr_metrics;
  std::string tr_scores;
  auto* tr = app.add_subcommand("transfer", "train a downstream head on frozen features and rank held-out users");
  tr->add_option("--checkpoint", tr_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  tr->add_option("--vocab", tr_vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  tr->add_option("--log", tr_log, "behavior log including the target service")->required()->check(CLI::ExistingFile);
  tr->add_option("--metrics", tr_metrics, "metrics CSV")->required();
  tr->add_option("--scores", tr_scores, "per-case scores CSV");
  add_common(tr, tr_common);

  // eval
  Common ev_common;
  std::string ev_scores;
  std::string ev_out;
  auto* ev = app.add_subcommand("eval", "ranking metrics from a scores CSV");
  ev->add_option("--scores", ev_scores, "scores CSV (case,user_id,positive,neg_1..)")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "metrics CSV")->required();
  add_common(ev, ev_common);

  // sweep
  Common sw_common;
  std::string sw_log;
  std::string sw_vocab;
  std::string sw_out;
  auto* sw = app.add_subcommand("sweep", "scaling sweep: pretrain and transfer per grid point");
  sw->add_option("--log", sw_log, "behavior log including the target service")->required()->check(CLI::ExistingFile);
  sw->add_option("--vocab", sw_vocab, "vocabulary file")->required()->check(CLI::ExistingFile);
  sw->add_option("--out", sw_out, "sweep CSV")->required();
  add_common(sw, sw_common);

  // fit
  Common fit_common;
  std::string fit_in;
  std::string fit_out;
  auto* fit = app.add_subcommand("fit", "power-law fit and loss correlation over a sweep CSV");
  fit->add_option("--sweep", fit_in, "sweep CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", fit_out, "fit CSV")->required();
  add_common(fit, fit_common, false);

  // replay
  std::string rp_manifest;
  auto* rp = app.add_subcommand("replay", "rerun a command from its manifest and compare outputs");
  rp->add_option("--manifest", rp_manifest, "run manifest")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  const std::vector<std::string> argv(args.begin() + 1, args.end());

  if (*synth) {
    Run run("synth", argv, synth_common);
    run.setting("users", std::to_string(synth_cfg.users));
    run.setting("clusters", std::to_string(synth_cfg.clusters));
    run.setting("services", std::to_string(synth_cfg.services));
    run.setting("target_items", std::to_string(synth_cfg.target_items));
    run.seed(synth_cfg.seed);
    const auto events = synth_corpus(synth_cfg);
    write_file(synth_out, [&](std::ostream& out) { write_behavior_log(out, events); });
    std::cout << "wrote " << events.size() << " events for " << synth_cfg.users << " users to " << synth_out << '\n';
    run.output(synth_out);
    run.finish();
  } else if (*tok) {
    const Config cfg = resolve(tok_common);
    Run run("tokenizer-train", argv, tok_common);
    run.config(cfg);
    run.input(tok_log);
    const auto events = read_behavior_log(fs::path(tok_log));
    const Vocab vocab = train_vocab(events, cfg.get_size("vocab_size"));
    write_file(tok_out, [&](std::ostream& out) { vocab.save(out); });
    std::cout << "vocabulary: " << vocab.size() << " ids (" << vocab.merge_count() << " merges)\n";
    run.output(tok_out);
    run.finish();
  } else if (*prep) {
    const Config cfg = resolve(prep_common);
    Run run("prepare", argv, prep_common);
    run.config(cfg);
    run.input(prep_log);
    run.input(prep_vocab);
    const auto events = read_behavior_log(fs::path(prep_log));
    const PreparedData data = prepare_data(events, load_vocab(prep_vocab), cfg);
    write_file(prep_out, [&](std::ostream& out) { save_prepared(out, data); });
    std::cout << "users: train " << data.train.size() << ", val " << data.val.size() << ", test " << data.test.size()
              << ", skipped " << data.skipped << '\n';
    run.output(prep_out);
    run.finish();
  } else if (*pre) {
    const Config cfg = resolve(pre_common);
    Run run("pretrain", argv, pre_common);
    run.config(cfg);
    run.input(pre_data);
    std::ifstream in(pre_data);
    const PreparedData data = load_prepared(in);
    const PretrainResult result = pretrain(data, cfg, [&](const LossRecord& r) {
      if (log_every > 0 && (r.step % log_every == 0 || r.eval_loss)) {
        std::cout << "step " << r.step << " lr " << r.lr << " tau " << r.tau << " loss " << r.train_loss;
        if (r.eval_loss) std::cout << " eval " << *r.eval_loss;
        std::cout << std::endl;
      }
    });
    save_checkpoint(fs::path(pre_out), result.model, result.objective.value());
    const fs::path loss_path = pre_loss.empty() ? fs::path(pre_out + ".loss.csv") : fs::path(pre_loss);
    write_file(loss_path, [&](std::ostream& out) { write_loss_csv(out, result.records); });
    const auto& test = data.test.size() >= 2 ? data.test : data.val;
    if (test.size() >= 2) {
      std::cout << "held-out in-batch top-1: "
                << retrieval_accuracy(result.model, test, cfg.get_size("global_batch"), cfg.get_size("service_a"),
                                      cfg.get_size("service_b"))
                << '\n';
    }
    run.output(pre_out);
    run.output(loss_path);
    run.finish();
  } else if (*ext) {
    const Config cfg = resolve(ext_common);
    Run run("extract", argv, ext_common);
    run.config(cfg);
    run.input(ext_ckpt);
    run.input(ext_vocab);
    run.input(ext_log);
    const Checkpoint ckpt = load_checkpoint(fs::path(ext_ckpt));
    const Vocab vocab = load_vocab(ext_vocab);
    const auto services = cfg.services();
    if (services.size() != ckpt.model.config().n_services) {
      throw ConfigError("config lists " + std::to_string(services.size()) + " services but the checkpoint has " +
                        std::to_string(ckpt.model.config().n_services));
    }
    ExampleOptions options = cfg.examples();
    options.require_all_services = false;
    options.max_items = ckpt.model.config().max_items;
    options.item_width = ckpt.model.config().item_width;
    std::vector<UserExample> examples;
    std::size_t omitted = 0;
    for (const auto& [user, log] : group_by_user(read_behavior_log(fs::path(ext_log)))) {
      auto ex = build_user_example(log, services, vocab, options);
      if (ex) {
        examples.push_back(std::move(*ex));
      } else {
        std::cerr << "warning: user " << user << " has no usable items; omitted\n";
        ++omitted;
      }
    }
    const FeatureTable table = extract_features(ckpt.model, examples);
    table.save(fs::path(ext_out));
    std::cout << "features: " << table.size() << " users x " << table.dim() << " dims (" << omitted << " omitted)\n";
    run.output(ext_out);
    run.finish();
  } else if (*tr) {
    const Config cfg = resolve(tr_common);
    Run run("transfer", argv, tr_common);
    run.config(cfg);
    run.input(tr_ckpt);
    run.input(tr_vocab);
    run.input(tr_log);
    const Checkpoint ckpt = load_checkpoint(fs::path(tr_ckpt));
    const auto events = read_behavior_log(fs::path(tr_log));
    const TransferReport report = run_transfer(ckpt.model, load_vocab(tr_vocab), events, cfg);
    write_file(tr_metrics, [&](std::ostream& out) { write_metrics_csv(out, report.metrics); });
    std::cout << "cases: train " << report.n_train_cases << ", test " << report.n_test_cases << "; test loss "
              << report.test_loss << ", MRR " << report.metrics.mrr << '\n';
    run.output(tr_metrics);
    if (!tr_scores.empty()) {
      write_file(tr_scores, [&](std::ostream& out) { write_scores_csv(out, report.scores); });
      run.output(tr_scores);
    }
    run.finish();
  } else if (*ev) {
    const Config cfg = resolve(ev_common);
    Run run("eval", argv, ev_common);
    run.config(cfg);
    run.input(ev_scores);
    std::ifstream in(ev_scores);
    const ScoreTable table = read_scores_csv(in);
    const MetricReport report = rank_metrics(table.scores, cfg.get_sizes("ks"));
    write_file(ev_out, [&](std::ostream& out) { write_metrics_csv(out, report); });
    std::cout << "cases " << report.n_cases << ", MRR " << report.mrr << '\n';
    run.output(ev_out);
    run.finish();
  } else if (*sw) {
    const Config cfg = resolve(sw_common);
    Run run("sweep", argv, sw_common);
    run.config(cfg);
    run.input(sw_log);
    run.input(sw_vocab);
    const auto events = read_behavior_log(fs::path(sw_log));
    std::ofstream csv(sw_out);
    if (!csv) throw Error("cannot open " + sw_out);
    run_scaling_sweep(events, load_vocab(sw_vocab), cfg, &csv, [](const RunResult& r) {
      std::cout << "run " << r.point.run_id << " " << r.point.size.label() << ": " << r.status;
      if (r.ok()) std::cout << ", test loss " << r.test_loss << ", transfer loss " << r.transfer_loss;
      std::cout << std::endl;
    });
    csv.close();
    run.output(sw_out);
    run.finish();
  } else if (*fit) {
    Run run("fit", argv, fit_common);
    run.input(fit_in);
    std::ifstream in(fit_in);
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<double, double>> compute;
    std::vector<std::pair<double, double>> losses;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream row(line);
      std::string cell;
      while (std::getline(row, cell, ',')) f.push_back(cell);
      if (f.size() != 12) throw DataError("sweep CSV: expected 12 columns in '" + line + "'");
      if (f[11] != "ok") continue;
      compute.emplace_back(std::stod(f[7]), std::stod(f[8]));
      losses.emplace_back(std::stod(f[8]), std::stod(f[9]));
    }
    const PowerLawFit pl = fit_power_law(compute);
    write_file(fit_out, [&](std::ostream& out) {
      out.precision(10);
      out << "quantity,value\n";
      out << "loss_vs_pf_days_a," << pl.a << "\nloss_vs_pf_days_b," << pl.b << "\nloss_vs_pf_days_residual,"
          << pl.residual << '\n';
      if (losses.size() >= 3) {
        const Correlation c = loss_correlation(losses);
        out << "pearson," << c.pearson << "\nspearman," << c.spearman << '\n';
      }
    });
    std::cout << "loss = " << pl.a << " * pf_days^" << pl.b << " (rms log residual " << pl.residual << ")\n";
    run.output(fit_out);
    run.finish();
  } else if (*rp) {
    return replay(rp_manifest);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(std::vector<std::string>(argv, argv + argc));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
