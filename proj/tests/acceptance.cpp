// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. `--only 3,7` restricts the run.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "clue/checkpoint.hpp"
#include "clue/config.hpp"
#include "clue/pipeline.hpp"
#include "clue/synth.hpp"
#include "grad_cases.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace clue {
namespace {

using test::random_example;
using test::random_tensor;

// Accumulates sub-check failures with a short note each.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& text) { notes_.push_back(text); }
  bool ok() const { return failures_.empty(); }
  std::string detail() const {
    std::ostringstream os;
    os << (total_ - failures_.size()) << '/' << total_ << " checks";
    for (const auto& n : notes_) os << "; " << n;
    for (std::size_t i = 0; i < failures_.size() && i < 5; ++i) os << "; failed: " << failures_[i];
    if (failures_.size() > 5) os << "; +" << failures_.size() - 5 << " more";
    return os.str();
  }

 private:
  std::size_t total_ = 0;
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

ModelConfig small_model() {
  ModelConfig c;
  c.vocab_size = 30;
  c.embed_dim = 8;
  c.ffn_dim = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.max_items = 4;
  c.item_width = 4;
  return c;
}

// --- 1 ---------------------------------------------------------------------

void gradient_suite(Checks& c) {
  std::size_t op_instances = 0;
  for (int seed = 0; seed < 10; ++seed) {
    for (const auto& [name, report] : test::op_grad_reports(seed)) {
      ++op_instances;
      c.expect(report.passed, name + " seed " + std::to_string(seed) + " " + report.summary());
    }
  }
  std::size_t model_instances = 0;
  for (int seed = 0; seed < 10; ++seed) {
    for (const EncoderMode mode : {EncoderMode::stacked, EncoderMode::single}) {
      const std::size_t reduce = seed % 2 ? 4 : 0;
      const GradCheckReport report = test::model_grad_report(seed, mode, reduce);
      ++model_instances;
      c.expect(report.passed, std::string(to_string(mode)) + " encoder seed " + std::to_string(seed));
    }
  }
  c.note(std::to_string(op_instances) + " op instances, " + std::to_string(model_instances) + " encoder instances");
}

// --- 2 ---------------------------------------------------------------------

void sharded_equivalence(Checks& c) {
  Rng rng(5);
  double worst_loss = 0.0;
  double worst_grad = 0.0;
  for (const std::size_t batch : {4u, 8u}) {
    // Embedding level, against the brute-force loss and the generic-op graph.
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor a = test::normalized(random_tensor({batch, 6}, rng));
      const Tensor b = test::normalized(random_tensor({batch, 6}, rng));
      const double tau = rng.uniform(1.0, 20.0);
      Graph g;
      Var va = g.input(a);
      Var vb = g.input(b);
      g.backward(test::reference_clip(va, vb, tau));
      const double ref_tau = (std::inner_product(a.values().begin(), a.values().end(), g.grad(va).values().begin(), 0.0)) / tau;
      for (const std::size_t workers : {1u, 2u, 4u}) {
        const LossResult s = sharded_loss(a, b, tau, ShardLayout::even(batch, workers));
        const double dl = std::abs(s.loss - test::brute_clip(a, b, tau));
        const double dg = std::max({max_abs_diff(s.grad_a, g.grad(va)), max_abs_diff(s.grad_b, g.grad(vb)),
                                    std::abs(s.grad_tau - ref_tau)});
        worst_loss = std::max(worst_loss, dl);
        worst_grad = std::max(worst_grad, dg);
        c.expect(dl <= 1e-12 && dg <= 1e-9, "embeddings B=" + std::to_string(batch) + " W=" + std::to_string(workers));
      }
    }

    // Every parameter of a model behind the loss, tau included.
    std::vector<UserExample> users;
    for (std::size_t u = 0; u < batch; ++u) users.push_back(random_example("u" + std::to_string(u), 2, 3, 4, 30, rng));
    std::vector<const UserExample*> ptrs;
    for (const auto& u : users) ptrs.push_back(&u);
    ClueModel model(small_model(), 9);
    const ForwardOptions options{true, 77};

    model.zero_grad();
    double ref_loss = 0.0;
    double ref_tau_grad = 0.0;
    std::vector<Tensor> ref_grads;
    {
      Graph g;
      const PairViews v = model.forward_batch(g, ptrs, 0, 1, options);
      Var loss = test::reference_clip(v.a, v.b, kTauInit);
      g.backward(loss);
      ref_loss = loss.value().item();
      // The loss sees tau only through tau * a; scaling a and tau are equivalent.
      const Tensor& ga = g.grad(v.a);
      ref_tau_grad = std::inner_product(v.a.value().values().begin(), v.a.value().values().end(), ga.values().begin(), 0.0) / kTauInit;
      for (const Parameter* p : model.parameters()) ref_grads.push_back(p->grad);
    }
    for (const std::size_t workers : {1u, 2u, 4u}) {
      model.zero_grad();
      ObjectiveState objective;
      Graph g;
      const PairViews v = model.forward_batch(g, ptrs, 0, 1, options);
      Var loss = clip_loss(v.a, v.b, g.parameter(objective.tau), ShardLayout::even(batch, workers));
      g.backward(loss);
      const double dl = std::abs(loss.value().item() - ref_loss);
      double dg = std::abs(objective.tau.grad[0] - ref_tau_grad);
      for (std::size_t i = 0; i < ref_grads.size(); ++i) {
        dg = std::max(dg, max_abs_diff(model.parameters()[i]->grad, ref_grads[i]));
      }
      worst_loss = std::max(worst_loss, dl);
      worst_grad = std::max(worst_grad, dg);
      c.expect(dl <= 1e-12 && dg <= 1e-9, "parameters B=" + std::to_string(batch) + " W=" + std::to_string(workers));
    }
  }
  c.note("max loss diff " + fmt(worst_loss, 3) + ", max grad diff " + fmt(worst_grad, 3));
}

// --- 3 ---------------------------------------------------------------------

void loss_anchors(Checks& c) {
  Tensor same({4, 3});
  for (std::size_t i = 0; i < 4; ++i) same.row(i)[0] = 1.0;
  const double identical = clip_symmetric_loss(same, same, kTauInit).loss;
  c.expect(std::abs(identical - std::log(4.0)) <= 1e-12, "identical rows = ln 4");
  {
    Graph g(false);
    const double through_graph =
        clip_loss(g.constant(same), g.constant(same), g.constant(Tensor::scalar(kTauInit)), ShardLayout::even(4, 2))
            .value()
            .item();
    c.expect(std::abs(through_graph - std::log(4.0)) <= 1e-12, "identical rows = ln 4 (sharded graph)");
  }

  // ln(1 + (B-1) e^-tau) is below 1e-6 only for B = 2 at tau = 14.27.
  Tensor eye({2, 2});
  for (std::size_t i = 0; i < 2; ++i) eye(i, i) = 1.0;
  const double orthonormal = clip_symmetric_loss(eye, eye, kTauInit).loss;
  c.expect(orthonormal <= 1e-6, "orthonormal diagonal <= 1e-6");
  c.expect(std::abs(orthonormal - std::log1p(std::exp(-kTauInit))) <= 1e-15, "orthonormal closed form");

  const Tensor uniform({4, 3}, 1.0 / std::sqrt(3.0));
  const double ntxent = simclr_loss(uniform, kTauInit).loss;
  c.expect(std::abs(ntxent - std::log(3.0)) <= 1e-12, "NT-Xent uniform = ln 3");
  c.note("ln4 err " + fmt(std::abs(identical - std::log(4.0)), 2) + ", orthonormal " + fmt(orthonormal, 3) +
         ", ln3 err " + fmt(std::abs(ntxent - std::log(3.0)), 2));
}

// --- 4 ---------------------------------------------------------------------

void optimizer_anchors(Checks& c) {
  const TrainConfig defaults;
  for (const std::size_t total : {100u, 1000u, 5000u, 123457u}) {
    const std::size_t warm = warmup_steps(total, defaults);
    c.expect(lr_at(warm, total, defaults) == 5e-4, "lr at warmup end, total " + std::to_string(total));
    c.expect(lr_at(total, total, defaults) == 5e-5, "lr at total, total " + std::to_string(total));
  }

  Rng rng(1);
  double worst_norm = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Parameter a("a", Tensor({3, 4}));
    Parameter b("b", Tensor({5}));
    a.grad = random_tensor({3, 4}, rng, rng.uniform(0.01, 10.0));
    b.grad = random_tensor({5}, rng, rng.uniform(0.01, 10.0));
    Parameter* params[] = {&a, &b};
    clip_global_norm(params, 0.01);
    double sq = 0.0;
    for (const Parameter* p : params) {
      for (const double g : p->grad.values()) sq += g * g;
    }
    worst_norm = std::max(worst_norm, std::sqrt(sq));
  }
  c.expect(worst_norm <= 0.01 + 1e-12, "clipped norm bound");

  // One AdamW step: m_hat = g and v_hat = g^2 after bias correction.
  {
    Parameter p("p", random_tensor({6}, rng));
    p.grad = random_tensor({6}, rng);
    const Tensor theta = p.value;
    const Tensor grad = p.grad;
    Parameter* params[] = {&p};
    OptimizerState state(params);
    const double lr = 3e-3;
    adamw_update(params, state, lr, defaults);
    double worst = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      const double g = grad[i];
      const double want = theta[i] - lr * (g / (std::abs(g) + defaults.eps) + defaults.weight_decay * theta[i]);
      worst = std::max(worst, std::abs(p.value[i] - want));
    }
    c.expect(worst <= 1e-12, "one-step AdamW vs hand derivation");
  }

  // Micro-batch accumulation (micro = global / 4) against one full batch.
  Rng data_rng(1);
  std::vector<UserExample> users;
  for (std::size_t u = 0; u < 8; ++u) {
    users.push_back(random_example("u" + std::to_string(u), 2, 1 + data_rng.index(4), 4, 30, data_rng));
  }
  std::vector<const UserExample*> batch;
  for (const auto& u : users) batch.push_back(&u);
  double worst_param = 0.0;
  for (const ObjectiveKind kind : {ObjectiveKind::clue, ObjectiveKind::simclr}) {
    ClueModel full_model(small_model(), 5);
    ClueModel micro_model(small_model(), 5);
    ObjectiveState full_obj;
    ObjectiveState micro_obj;
    TrainConfig full_cfg;
    full_cfg.global_batch = full_cfg.micro_batch = 8;
    full_cfg.peak_lr = 1e-2;
    full_cfg.clip_norm = 1.0;
    full_cfg.seed = 3;
    full_cfg.objective = kind;
    TrainConfig micro_cfg = full_cfg;
    micro_cfg.micro_batch = 2;
    Trainer full(full_model, full_obj, full_cfg);
    Trainer micro(micro_model, micro_obj, micro_cfg);
    for (std::size_t step = 1; step <= 3; ++step) {
      full.step(batch, step, 10);
      micro.step(batch, step, 10);
    }
    double worst = std::abs(full_obj.value() - micro_obj.value());
    for (std::size_t i = 0; i < full_model.parameters().size(); ++i) {
      worst = std::max(worst, max_abs_diff(full_model.parameters()[i]->value, micro_model.parameters()[i]->value));
    }
    worst_param = std::max(worst_param, worst);
    c.expect(worst <= 1e-10, std::string("micro-batch invariance ") + std::string(to_string(kind)));
  }
  c.note("max clipped norm " + fmt(worst_norm, 15) + ", micro-batch param diff " + fmt(worst_param, 3));
}

// --- 5, 6, 9: desk-scale pretraining on the synthetic corpus ---------------

struct DeskRun {
  std::uint64_t seed = 0;
  double top1 = 0.0;
  std::vector<LossRecord> records;
  std::string checkpoint;  // serialized model
  double tau = 0.0;
};

class DeskCorpus {
 public:
  DeskCorpus() {
    SynthConfig sc;
    sc.users = 2000;
    sc.clusters = 8;
    sc.services = 2;
    sc.seed = 0;
    sc.target_items = 8;  // downstream targets; kept out of pretraining below
    events_ = synth_corpus(sc);
    vocab_ = train_vocab(events_, Config().get_size("vocab_size"));
  }

  const std::vector<BehaviorEvent>& events() const { return events_; }
  const Vocab& vocab() const { return vocab_; }

  static Config config(std::uint64_t seed, std::size_t steps) {
    Config cfg(Profile::desk);
    cfg.set("seed", std::to_string(seed));
    cfg.set("total_steps", std::to_string(steps));
    cfg.set("unseen_service_slot", "none");
    return cfg;
  }

  PreparedData prepare(const Config& cfg) const { return prepare_data(events_, vocab_, cfg); }

 private:
  std::vector<BehaviorEvent> events_;
  Vocab vocab_;
};

constexpr std::size_t kDeskSteps = 2000;
constexpr std::uint64_t kDeskSeeds[] = {0, 1, 2};

bool finite_losses(const std::vector<LossRecord>& records) {
  for (const LossRecord& r : records) {
    if (!std::isfinite(r.train_loss) || (r.eval_loss && !std::isfinite(*r.eval_loss))) return false;
  }
  return !records.empty();
}

void pretraining_signal(Checks& c, const DeskCorpus& corpus, std::vector<DeskRun>& runs) {
  double mean = 0.0;
  std::string per_seed;
  for (const std::uint64_t seed : kDeskSeeds) {
    const Config cfg = DeskCorpus::config(seed, kDeskSteps);
    c.expect(cfg.get_size("global_batch") == 32, "desk batch is 32");
    const PreparedData data = corpus.prepare(cfg);
    PretrainResult result = pretrain(data, cfg);
    DeskRun run;
    run.seed = seed;
    run.top1 = retrieval_accuracy(result.model, data.test, 32, 0, 1);
    run.records = std::move(result.records);
    run.tau = result.objective.value();
    std::ostringstream ckpt;
    save_checkpoint(ckpt, result.model, run.tau);
    run.checkpoint = ckpt.str();
    c.expect(finite_losses(run.records), "finite losses seed " + std::to_string(seed));
    mean += run.top1 / static_cast<double>(std::size(kDeskSeeds));
    per_seed += (per_seed.empty() ? "" : " ") + fmt(run.top1, 3);
    runs.push_back(std::move(run));
  }
  c.expect(mean >= 0.5, "mean held-out top-1 >= 0.5");
  c.note(std::to_string(kDeskSteps) + " steps; top-1 per seed " + per_seed + "; mean " + fmt(mean, 3) +
         " (chance " + fmt(1.0 / 32.0, 3) + ")");
}

void transfer_signal(Checks& c, const DeskCorpus& corpus, const std::vector<DeskRun>& runs) {
  // Random baseline fixture first.
  Rng rng(3);
  Tensor scores({10000, 101});
  for (double& v : scores.values()) v = rng.uniform();
  double harmonic = 0.0;
  for (int r = 1; r <= 101; ++r) harmonic += 1.0 / r;
  const double uniform_mrr = rank_metrics(scores, std::vector<std::size_t>{10}).mrr;
  c.expect(std::abs(uniform_mrr - harmonic / 101.0) <= 0.005, "uniform fixture MRR");
  c.note("uniform MRR " + fmt(uniform_mrr) + " vs " + fmt(harmonic / 101.0));

  std::string per_seed;
  for (const DeskRun& run : runs) {
    std::istringstream in(run.checkpoint);
    const Checkpoint ckpt = load_checkpoint(in);
    const Config cfg = DeskCorpus::config(run.seed, kDeskSteps);
    const TransferReport report = run_transfer(ckpt.model, corpus.vocab(), corpus.events(), cfg);
    c.expect(report.metrics.mrr >= 0.103, "transfer MRR >= 0.103, seed " + std::to_string(run.seed));
    c.expect(report.n_test_cases > 0 && report.n_test_cases == report.metrics.n_cases, "test cases scored");
    per_seed += (per_seed.empty() ? "" : " ") + fmt(report.metrics.mrr, 3) + " (" +
                std::to_string(report.n_test_cases) + " cases)";
  }
  c.note("transfer MRR per seed " + per_seed);
}

// --- 7 ---------------------------------------------------------------------

void metric_oracle(Checks& c) {
  Rng rng(1);
  const std::vector<std::size_t> ks{1, 2, 5, 10, 20, 50, 101};
  Tensor scores({1000, 101});
  for (double& v : scores.values()) v = std::floor(rng.uniform() * 40.0) / 4.0;  // frequent ties
  const MetricReport got = rank_metrics(scores, ks);
  const MetricReport want = test::brute_metrics(scores, ks);
  c.expect(got.n_cases == 1000 && got.mrr == want.mrr && got.hr == want.hr && got.ndcg == want.ndcg,
           "aggregate metrics equal brute force");
  std::size_t rank_mismatch = 0;
  std::size_t perm_mismatch = 0;
  std::size_t monotone_violation = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    std::vector<double> row(scores.row(r).begin(), scores.row(r).end());
    if (positive_rank(row) != test::sorted_rank(row)) ++rank_mismatch;
    const MetricReport before = rank_metrics(Tensor({1, 101}, row), ks);
    rng.shuffle(std::span<double>(row).subspan(1));
    const MetricReport after = rank_metrics(Tensor({1, 101}, row), ks);
    if (before.mrr != after.mrr || before.hr != after.hr || before.ndcg != after.ndcg) ++perm_mismatch;
    for (std::size_t i = 1; i < ks.size(); ++i) {
      if (after.hr[i] < after.hr[i - 1]) ++monotone_violation;
    }
  }
  c.expect(rank_mismatch == 0, "per-case ranks equal brute force");
  c.expect(perm_mismatch == 0, "negative permutation invariance");
  c.expect(monotone_violation == 0, "HR@k monotone in k");
}

// --- 8 ---------------------------------------------------------------------

void scaling_harness(Checks& c, const DeskCorpus& corpus) {
  const std::vector<std::pair<double, double>> fixture{{1.0, 2.0}, {2.0, 1.0}, {4.0, 0.5}};
  const PowerLawFit exact = fit_power_law(fixture);
  c.expect(std::abs(exact.a - 2.0) <= 1e-12 && std::abs(exact.b + 1.0) <= 1e-12, "fixture fit (2, -1)");

  Config cfg = DeskCorpus::config(0, 0);
  const SweepSpec spec = cfg.sweep();
  c.expect(spec.model_sizes.size() == 3, "three model sizes");
  const std::vector<RunResult> results = run_scaling_sweep(corpus.events(), corpus.vocab(), cfg);
  std::vector<std::pair<double, double>> compute_loss;
  std::vector<std::pair<double, double>> losses;
  std::string rows;
  for (const RunResult& r : results) {
    c.expect(r.ok(), "run " + r.point.size.label() + " " + r.status);
    rows += (rows.empty() ? "" : ", ") + r.point.size.label() + " pf " + fmt(r.pf_days, 3) + " loss " +
            fmt(r.test_loss) + " transfer " + fmt(r.transfer_loss) + " mrr " + fmt(r.transfer_mrr, 3);
    if (!r.ok()) continue;
    compute_loss.emplace_back(r.pf_days, r.test_loss);
    losses.emplace_back(r.test_loss, r.transfer_loss);
  }
  c.note(rows);
  if (compute_loss.size() < 3) return;
  const PowerLawFit fit = fit_power_law(compute_loss);
  const Correlation corr = loss_correlation(losses);
  c.expect(fit.b < 0.0, "loss-vs-compute exponent < 0");
  c.expect(corr.pearson > 0.0, "Pearson(test loss, transfer loss) > 0");
  c.note("exponent " + fmt(fit.b) + ", pearson " + fmt(corr.pearson) + ", spearman " + fmt(corr.spearman));
}

// --- 9 ---------------------------------------------------------------------

void ablations(Checks& c, const DeskCorpus& corpus, const std::vector<DeskRun>& runs) {
  // Feature widths on the tiny encoder: two services of width 8 vs a 64-wide reduction.
  Rng rng(4);
  const UserExample ex = random_example("u", 2, 3, 8, 20, rng);
  for (const auto& [mode, reduce, want] : std::vector<std::tuple<EncoderMode, std::size_t, std::size_t>>{
           {EncoderMode::stacked, 0, 16}, {EncoderMode::stacked, 64, 64},
           {EncoderMode::single, 0, 16}, {EncoderMode::single, 64, 64}}) {
    const ClueModel model(test::tiny_grad_config(mode, reduce), 1);
    const Tensor f = model.user_features(ex);
    c.expect(model.feature_dim() == want && f.size() == want,
             std::string(to_string(mode)) + " reduce " + std::to_string(reduce) + " feature width " + std::to_string(want));
  }

  std::string report;
  if (!runs.empty()) report = "stacked top-1 " + fmt(runs.front().top1, 3);
  const std::vector<std::pair<std::string, std::string>> variants{{"mode", "single"}, {"reduce_dim", "64"}};
  for (const auto& [key, value] : variants) {
    Config cfg = DeskCorpus::config(0, kDeskSteps);
    cfg.set(key, value);
    const PreparedData data = corpus.prepare(cfg);
    const PretrainResult result = pretrain(data, cfg);
    c.expect(finite_losses(result.records), key + "=" + value + " finite losses");
    const Tensor features = result.model.user_features(data.test);
    const std::size_t want = key == "reduce_dim" ? 64 : 2 * cfg.get_size("embed_dim");
    c.expect(features.rows() == data.test.size() && features.cols() == want,
             key + "=" + value + " feature shape");
    bool finite = true;
    for (const double v : features.values()) finite &= std::isfinite(v);
    c.expect(finite, key + "=" + value + " finite features");
    const double top1 = retrieval_accuracy(result.model, data.test, 32, 0, 1);
    const TransferReport transfer = run_transfer(result.model, corpus.vocab(), corpus.events(), cfg);
    report += "; " + key + "=" + value + " top-1 " + fmt(top1, 3) + " mrr " + fmt(transfer.metrics.mrr, 3) +
              " width " + std::to_string(features.cols());
  }
  c.note(report);
}

}  // namespace
}  // namespace clue

int main(int argc, char** argv) {
  using namespace clue;
  CLI::App app{"Acceptance run", "clue_acceptance"};
  std::vector<int> only;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  std::optional<DeskCorpus> corpus;
  auto desk = [&]() -> const DeskCorpus& {
    if (!corpus) corpus.emplace();
    return *corpus;
  };
  std::vector<DeskRun> runs;
  auto need_runs = [&] {
    if (runs.empty()) {
      Checks ignored;
      pretraining_signal(ignored, desk(), runs);
    }
  };

  struct Criterion {
    int id;
    const char* title;
    double budget_s;  // 0: none stated
    std::function<void(Checks&)> body;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient suite", 120, gradient_suite},
      {2, "sharded-loss equivalence", 60, sharded_equivalence},
      {3, "closed-form loss anchors", 0, loss_anchors},
      {4, "optimizer and schedule anchors", 0, optimizer_anchors},
      {5, "desk-scale pretraining signal", 1800, [&](Checks& c) { pretraining_signal(c, desk(), runs); }},
      {6, "downstream transfer signal", 0,
       [&](Checks& c) {
         need_runs();
         transfer_signal(c, desk(), runs);
       }},
      {7, "metric oracle", 0, metric_oracle},
      {8, "scaling harness", 5400, [&](Checks& c) { scaling_harness(c, desk()); }},
      {9, "ablation modes", 0, [&](Checks& c) { ablations(c, desk(), runs); }},
  };

  int failed = 0;
  for (const Criterion& cr : criteria) {
    if (!wanted(cr.id)) continue;
    Checks checks;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(checks);
    } catch (const std::exception& e) {
      checks.expect(false, std::string("exception: ") + e.what());
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.budget_s > 0) checks.expect(seconds < cr.budget_s, "runtime under " + fmt(cr.budget_s) + " s");
    const bool ok = checks.ok();
    failed += ok ? 0 : 1;
    std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << cr.id << ": " << cr.title << " (" << std::fixed
              << std::setprecision(1) << seconds << " s) " << std::defaultfloat << checks.detail() << std::endl;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criteria failed" : std::string("acceptance: all passed"))
            << std::endl;
  return failed ? 1 : 0;
}
