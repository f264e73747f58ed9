// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <sstream>
#include <vector>

#include "clue/error.hpp"
#include "clue/trainer.hpp"
#include "test_util.hpp"

namespace clue {
namespace {

using test::random_example;
using test::random_tensor;

ModelConfig tiny_config() {
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

std::vector<UserExample> corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<UserExample> out;
  for (std::size_t u = 0; u < n; ++u) out.push_back(random_example("u" + std::to_string(u), 2, 1 + rng.index(4), 4, 30, rng));
  return out;
}

TEST(Schedule, Anchors) {
  TrainConfig cfg;
  const std::size_t total = 1000;
  const std::size_t warm = warmup_steps(total, cfg);
  EXPECT_EQ(warm, 10u);
  EXPECT_EQ(lr_at(0, total, cfg), 0.0);
  EXPECT_EQ(lr_at(warm, total, cfg), 5e-4);
  EXPECT_EQ(lr_at(total, total, cfg), 5e-5);
  EXPECT_NEAR(lr_at(warm + (total - warm) / 2, total, cfg), 2.75e-4, 1e-12);
  EXPECT_NEAR(lr_at(5, total, cfg), 2.5e-4, 1e-18);
}

TEST(Schedule, ContinuousAndMonotone) {
  TrainConfig cfg;
  for (const std::size_t total : {100u, 1000u, 123457u}) {
    const std::size_t warm = warmup_steps(total, cfg);
    // Continuous extension of the cosine branch at the boundary.
    const double progress = 0.0;
    const double floor = cfg.final_lr_frac * cfg.peak_lr;
    const double cosine = floor + (cfg.peak_lr - floor) * 0.5 * (1.0 + std::cos(progress));
    EXPECT_LT(std::abs(lr_at(warm, total, cfg) - cosine), 1e-12);
    EXPECT_LT(std::abs(lr_at(warm + 1, total, cfg) - lr_at(warm, total, cfg)), 1e-5);
    double prev = lr_at(warm, total, cfg);
    for (std::size_t s = warm + 1; s <= total; s += std::max<std::size_t>(1, total / 97)) {
      const double lr = lr_at(s, total, cfg);
      EXPECT_LE(lr, prev);
      EXPECT_LE(lr, cfg.peak_lr);
      prev = lr;
    }
  }
}

TEST(Schedule, ConfigValidation) {
  TrainConfig cfg;
  cfg.global_batch = 10;
  cfg.micro_batch = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.warmup_frac = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Clip, ScalesToBound) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Parameter a("a", Tensor({3, 4}));
    Parameter b("b", Tensor({5}));
    a.grad = random_tensor({3, 4}, rng, 2.0);
    b.grad = random_tensor({5}, rng, 2.0);
    const Tensor ga = a.grad;
    Parameter* params[] = {&a, &b};
    const double before = clip_global_norm(params, 0.01);
    double sq = 0.0;
    double dot = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
      sq += a.grad[i] * a.grad[i];
      dot += a.grad[i] * ga[i];
      ref += ga[i] * ga[i];
    }
    for (const double g : b.grad.values()) sq += g * g;
    EXPECT_GT(before, 0.01);
    EXPECT_LE(std::sqrt(sq), 0.01 + 1e-12);
    EXPECT_NEAR(dot / std::sqrt(ref * [&] {
      double s = 0.0;
      for (const double g : a.grad.values()) s += g * g;
      return s;
    }()), 1.0, 1e-12);
  }
}

TEST(Clip, SmallAndZeroUnchanged) {
  Parameter p("p", Tensor({2}));
  p.grad[0] = 0.003;
  p.grad[1] = 0.004;
  Parameter* params[] = {&p};
  EXPECT_NEAR(clip_global_norm(params, 0.01), 0.005, 1e-15);
  EXPECT_EQ(p.grad[0], 0.003);
  p.grad.fill(0.0);
  EXPECT_EQ(clip_global_norm(params, 0.01), 0.0);
  EXPECT_EQ(p.grad[1], 0.0);
  p.grad[0] = std::nan("");
  EXPECT_THROW(clip_global_norm(params, 0.01), NumericError);
}

TEST(AdamW, FirstStepByHand) {
  Parameter p("p", Tensor({1}));
  p.grad[0] = 1.0;
  Parameter* params[] = {&p};
  OptimizerState state(params);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_update(params, state, 1e-3, cfg);
  // m_hat = v_hat = 1 after one step.
  EXPECT_NEAR(p.value[0], -1e-3 / (1.0 + 1e-6), 1e-12);
  EXPECT_NEAR(p.value[0], -9.99999e-4, 1e-12);
  EXPECT_EQ(state.t, 1u);
}

TEST(AdamW, TwoStepsByHand) {
  Parameter p("p", Tensor::vector({0.5, -2.0}));
  Parameter* params[] = {&p};
  OptimizerState state(params);
  TrainConfig cfg;
  const double g1[] = {0.3, -1.0};
  const double g2[] = {-0.2, 0.7};
  double theta[] = {0.5, -2.0};
  double m[] = {0, 0};
  double v[] = {0, 0};
  const double lr[] = {1e-2, 5e-3};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    for (int i = 0; i < 2; ++i) {
      p.grad[static_cast<std::size_t>(i)] = g[i];
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.98 * v[i] + 0.02 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.98, t));
      theta[i] -= lr[t - 1] * (mh / (std::sqrt(vh) + 1e-6) + 0.1 * theta[i]);
    }
    adamw_update(params, state, lr[t - 1], cfg);
    EXPECT_NEAR(p.value[0], theta[0], 1e-12);
    EXPECT_NEAR(p.value[1], theta[1], 1e-12);
  }
}

TEST(AdamW, ZeroGradient) {
  Parameter p("p", Tensor::vector({1.5, -3.0}));
  Parameter frozen("tau", Tensor::scalar(14.0), false);
  Parameter* params[] = {&p, &frozen};
  OptimizerState state(params);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_update(params, state, 1e-2, cfg);
  EXPECT_EQ(p.value[0], 1.5);
  cfg.weight_decay = 0.1;
  adamw_update(params, state, 1e-2, cfg);
  EXPECT_NEAR(p.value[1], -3.0 * (1 - 1e-2 * 0.1), 1e-15);
  EXPECT_EQ(frozen.value[0], 14.0);
}

TrainConfig tiny_train(std::size_t global, std::size_t micro) {
  TrainConfig cfg;
  cfg.global_batch = global;
  cfg.micro_batch = micro;
  cfg.peak_lr = 1e-2;
  cfg.clip_norm = 1.0;
  cfg.seed = 3;
  return cfg;
}

TEST(Trainer, MicroBatchInvariance) {
  const auto users = corpus(8, 1);
  std::vector<const UserExample*> batch;
  for (const auto& u : users) batch.push_back(&u);
  for (const ObjectiveKind kind : {ObjectiveKind::clue, ObjectiveKind::simclr}) {
    ClueModel full_model(tiny_config(), 5);
    ClueModel micro_model(tiny_config(), 5);
    ObjectiveState full_obj;
    ObjectiveState micro_obj;
    TrainConfig full_cfg = tiny_train(8, 8);
    TrainConfig micro_cfg = tiny_train(8, 2);
    full_cfg.objective = micro_cfg.objective = kind;
    Trainer full(full_model, full_obj, full_cfg);
    Trainer micro(micro_model, micro_obj, micro_cfg);
    for (std::size_t step = 1; step <= 3; ++step) {
      const double a = full.step(batch, step, 10);
      const double b = micro.step(batch, step, 10);
      EXPECT_NEAR(a, b, 1e-12);
    }
    for (std::size_t i = 0; i < full_model.parameters().size(); ++i) {
      EXPECT_LT(max_abs_diff(full_model.parameters()[i]->value, micro_model.parameters()[i]->value), 1e-10);
    }
    EXPECT_NEAR(full_obj.value(), micro_obj.value(), 1e-10);
  }
}

TEST(Trainer, TenStepsFiniteAndTauBounded) {
  const auto users = corpus(24, 2);
  const auto held = corpus(8, 3);
  ClueModel model(tiny_config(), 6);
  ObjectiveState obj;
  TrainConfig cfg = tiny_train(8, 4);
  cfg.total_steps = 10;
  cfg.eval_every = 5;
  Trainer trainer(model, obj, cfg);
  std::size_t calls = 0;
  const auto records = trainer.train(users, held, [&](const LossRecord&) { ++calls; });
  ASSERT_EQ(records.size(), 10u);
  EXPECT_EQ(calls, 10u);
  for (const auto& r : records) {
    EXPECT_TRUE(std::isfinite(r.train_loss));
    EXPECT_GT(r.tau, 0.0);
    EXPECT_LE(r.tau, 100.0);
  }
  EXPECT_TRUE(records[4].eval_loss);
  EXPECT_FALSE(records[5].eval_loss);
  EXPECT_TRUE(records[9].eval_loss);
  std::ostringstream csv;
  write_loss_csv(csv, records);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "step,lr,tau,train_loss,eval_loss");
}

TEST(Trainer, TauClampedAfterStep) {
  const auto users = corpus(8, 4);
  std::vector<const UserExample*> batch;
  for (const auto& u : users) batch.push_back(&u);
  ClueModel model(tiny_config(), 7);
  ObjectiveState obj(99.9999);
  TrainConfig cfg = tiny_train(8, 8);
  cfg.peak_lr = 10.0;
  cfg.warmup_frac = 0.5;
  Trainer trainer(model, obj, cfg);
  trainer.step(batch, 1, 2);
  EXPECT_GT(obj.value(), 0.0);
  EXPECT_LE(obj.value(), 100.0);
}

TEST(Trainer, DeterministicRuns) {
  const auto users = corpus(16, 5);
  auto run = [&](bool shuffle) {
    ClueModel model(tiny_config(), 8);
    ObjectiveState obj;
    TrainConfig cfg = tiny_train(8, 4);
    cfg.shuffle = shuffle;
    cfg.total_steps = 6;
    Trainer trainer(model, obj, cfg);
    std::vector<double> curve;
    for (const auto& r : trainer.train(users, {})) curve.push_back(r.train_loss);
    return std::make_pair(curve, model.parameters().front()->value);
  };
  for (const bool shuffle : {false, true}) {
    const auto a = run(shuffle);
    const auto b = run(shuffle);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(max_abs_diff(a.second, b.second), 0.0);
  }
}

TEST(Trainer, GradientsIndependentOfHeapLayout) {
  const auto users = corpus(8, 7);
  std::vector<const UserExample*> batch;
  for (const auto& u : users) batch.push_back(&u);
  std::vector<std::vector<double>> reference;
  std::vector<std::unique_ptr<char[]>> spacers;
  for (int run = 0; run < 6; ++run) {
    spacers.push_back(std::make_unique<char[]>(8 + 8 * static_cast<std::size_t>(run)));
    ClueModel model(tiny_config(), 10);
    ObjectiveState obj;
    Trainer trainer(model, obj, tiny_train(8, 4));
    trainer.compute_gradients(batch, 1);
    std::vector<std::vector<double>> grads;
    for (const Parameter* p : model.parameters()) grads.emplace_back(p->grad.values().begin(), p->grad.values().end());
    if (run == 0) reference = grads;
    EXPECT_EQ(grads, reference) << "run " << run;
  }
}

TEST(Trainer, TotalStepsFromEpochs) {
  ClueModel model(tiny_config(), 9);
  ObjectiveState obj;
  TrainConfig cfg = tiny_train(8, 4);
  cfg.epochs = 3;
  Trainer trainer(model, obj, cfg);
  EXPECT_EQ(trainer.total_steps(20), 6u);  // two full batches per epoch
  const auto few = corpus(4, 6);
  EXPECT_THROW(trainer.train(few, {}), DataError);
}

TEST(Retrieval, OrthonormalIsPerfect) {
  Tensor a({5, 5});
  for (std::size_t i = 0; i < 5; ++i) a(i, i) = 1.0;
  EXPECT_EQ(in_batch_retrieval_accuracy(a, a), 1.0);
}

TEST(Retrieval, TiesGoToLowestIndex) {
  const Tensor a({3, 2}, 1.0);
  // Every similarity ties, so only row 0 retrieves itself.
  EXPECT_NEAR(in_batch_retrieval_accuracy(a, a), 1.0 / 3.0, 1e-15);
}

TEST(Retrieval, RandomIsChance) {
  Rng rng(10);
  const int trials = 2000;
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    total += in_batch_retrieval_accuracy(random_tensor({32, 8}, rng), random_tensor({32, 8}, rng));
  }
  const double p = 1.0 / 32.0;
  const double sigma = std::sqrt(p * (1 - p) / 32.0 / trials);
  EXPECT_NEAR(total / trials, p, 3 * sigma);
}

}  // namespace
}  // namespace clue
