// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "clue/error.hpp"
#include "clue/random.hpp"

namespace clue {

namespace {

constexpr std::size_t kEvalChunk = 64;

std::uint64_t step_key(std::uint64_t seed, std::size_t step) { return derive_key(seed, 0x57e9u, step); }

std::vector<Parameter*> trainable(const ClueModel& model, ObjectiveState& objective) {
  std::vector<Parameter*> params = model.parameters();
  params.push_back(&objective.tau);
  return params;
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) { return kind == ObjectiveKind::clue ? "clue" : "simclr"; }

ObjectiveKind parse_objective_kind(std::string_view text) {
  if (text == "clue") return ObjectiveKind::clue;
  if (text == "simclr") return ObjectiveKind::simclr;
  throw ConfigError("objective must be 'clue' or 'simclr', got '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (!(peak_lr > 0.0)) throw ConfigError("peak_lr must be positive");
  if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) throw ConfigError("warmup_frac must lie in (0, 1)");
  if (!(final_lr_frac >= 0.0 && final_lr_frac <= 1.0)) throw ConfigError("final_lr_frac must lie in [0, 1]");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (global_batch < 2) throw ConfigError("global_batch must be at least 2");
  if (micro_batch == 0 || global_batch % micro_batch != 0) {
    throw ConfigError("global_batch must be divisible by micro_batch");
  }
  if (service_a == service_b) throw ConfigError("service_a and service_b must differ");
  if (augment_rate < 0.0 || augment_rate > 1.0) throw ConfigError("augment_rate must lie in [0, 1]");
}

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg) {
  return static_cast<std::size_t>(std::ceil(cfg.warmup_frac * static_cast<double>(total_steps)));
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  const std::size_t warm = warmup_steps(total_steps, cfg);
  if (step <= warm) {
    if (warm == 0) return cfg.peak_lr;
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(warm);
  }
  const double floor = cfg.final_lr_frac * cfg.peak_lr;
  if (step >= total_steps) return floor;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(total_steps - warm);
  return floor + (cfg.peak_lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_global_norm(std::span<Parameter* const> params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    for (const double g : p->grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Parameter* p : params) {
      for (double& g : p->grad.values()) g *= factor;
    }
  }
  return norm;
}

OptimizerState::OptimizerState(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
  }
}

void adamw_update(std::span<Parameter* const> params, OptimizerState& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != params.size()) throw DimensionError("adamw: optimizer state does not match parameters");
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (!m.same_shape(p.value)) throw DimensionError("adamw: moment shape mismatch for " + p.name);
    const double wd = p.decay ? cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + wd * p.value[i]);
    }
  }
}

void write_loss_csv(std::ostream& out, std::span<const LossRecord> records) {
  out << "step,lr,tau,train_loss,eval_loss\n";
  out.precision(10);
  for (const LossRecord& r : records) {
    out << r.step << ',' << r.lr << ',' << r.tau << ',' << r.train_loss << ',';
    if (r.eval_loss) out << *r.eval_loss;
    out << '\n';
  }
}

double in_batch_retrieval_accuracy(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || !a.same_shape(b) || a.rows() < 2) {
    throw DimensionError("retrieval accuracy: need matching B×d views with B >= 2");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < a.cols(); ++t) s += a(i, t) * b(j, t);
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    hits += best == i ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(a.rows());
}

std::pair<Tensor, Tensor> embed_views(const ClueModel& model, std::span<const UserExample> examples,
                                      std::size_t service_a, std::size_t service_b) {
  const std::size_t d = model.view_dim();
  Tensor a({examples.size(), d});
  Tensor b({examples.size(), d});
  for (std::size_t start = 0; start < examples.size(); start += kEvalChunk) {
    const std::size_t stop = std::min(examples.size(), start + kEvalChunk);
    std::vector<const UserExample*> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&examples[i]);
    Graph g(false);
    const PairViews views = model.forward_batch(g, batch, service_a, service_b, {});
    std::copy_n(views.a.value().data(), views.a.value().size(), a.data() + start * d);
    std::copy_n(views.b.value().data(), views.b.value().size(), b.data() + start * d);
  }
  return {std::move(a), std::move(b)};
}

double retrieval_accuracy(const ClueModel& model, std::span<const UserExample> examples, std::size_t batch,
                          std::size_t service_a, std::size_t service_b) {
  if (batch < 2) throw ConfigError("retrieval accuracy: batch must be at least 2");
  const auto [a, b] = embed_views(model, examples, service_a, service_b);
  const std::size_t d = a.cols();
  double hits = 0.0;
  std::size_t rows = 0;
  for (std::size_t start = 0; start + 2 <= examples.size(); start += batch) {
    const std::size_t n = std::min(batch, examples.size() - start);
    Tensor ca({n, d});
    Tensor cb({n, d});
    std::copy_n(a.data() + start * d, n * d, ca.data());
    std::copy_n(b.data() + start * d, n * d, cb.data());
    hits += in_batch_retrieval_accuracy(ca, cb) * static_cast<double>(n);
    rows += n;
  }
  if (rows == 0) throw DataError("retrieval accuracy: fewer than two examples");
  return hits / static_cast<double>(rows);
}

Trainer::Trainer(ClueModel& model, ObjectiveState& objective, TrainConfig cfg)
    : model_(model), objective_(objective), cfg_(std::move(cfg)), params_(trainable(model, objective)),
      optimizer_(params_) {
  cfg_.validate();
  if (cfg_.service_a >= model.config().n_services || cfg_.service_b >= model.config().n_services) {
    throw ConfigError("training services exceed the model's n_services");
  }
}

double Trainer::batch_loss(std::span<const UserExample* const> batch, std::size_t step, bool training,
                           bool backward) const {
  const std::size_t n = batch.size();
  const std::size_t micro = training ? cfg_.micro_batch : n;
  const std::size_t n_micro = (n + micro - 1) / micro;
  const ForwardOptions options{training, step_key(cfg_.seed, step)};
  const double tau = objective_.value();

  // One graph per micro-batch; embeddings are gathered for the loss and its
  // gradient slices are fed back into each graph.
  std::vector<std::unique_ptr<Graph>> graphs;
  std::vector<Var> views_a;
  std::vector<Var> views_b;
  std::vector<Segment> ranges;
  const bool simclr = cfg_.objective == ObjectiveKind::simclr;
  const std::size_t rows_per_user = simclr ? 2 : 1;
  const std::size_t d = model_.view_dim();
  Tensor gathered_a({n * rows_per_user, d});
  Tensor gathered_b(simclr ? Tensor() : Tensor({n, d}));

  for (std::size_t k = 0; k < n_micro; ++k) {
    const std::size_t begin = k * micro;
    const std::size_t end = std::min(n, begin + micro);
    ranges.push_back({begin, end});
    graphs.push_back(std::make_unique<Graph>(backward));
    Graph& g = *graphs.back();
    const auto part = batch.subspan(begin, end - begin);
    if (simclr) {
      const std::size_t s = cfg_.service_a;
      std::vector<std::vector<ItemTokenRow>> augmented;
      augmented.reserve(part.size() * 2);
      std::vector<SequenceInput> seqs;
      for (const UserExample* ex : part) {
        if (!ex->has_service(s)) throw DimensionError("simclr: user " + ex->user_id + " lacks the service");
        const std::uint64_t user_key = derive_key(step_key(cfg_.seed, step), fnv1a64(ex->user_id));
        for (std::uint64_t view = 0; view < 2; ++view) {
          augmented.push_back(augment_view(ex->services[s], cfg_.augment_rate, derive_key(user_key, view)));
        }
      }
      for (std::size_t i = 0; i < part.size(); ++i) {
        for (std::size_t view = 0; view < 2; ++view) {
          seqs.push_back({&augmented[2 * i + view], s, sequence_key(part[i]->user_id, s, view + 1)});
        }
      }
      const std::vector<std::size_t> services(seqs.size(), s);
      Var z = model_.project_views(g, model_.encode_sequences(g, seqs, options), services);
      std::copy_n(z.value().data(), z.value().size(), gathered_a.data() + begin * 2 * d);
      views_a.push_back(z);
    } else {
      const PairViews v = model_.forward_batch(g, part, cfg_.service_a, cfg_.service_b, options);
      std::copy_n(v.a.value().data(), v.a.value().size(), gathered_a.data() + begin * d);
      std::copy_n(v.b.value().data(), v.b.value().size(), gathered_b.data() + begin * d);
      views_a.push_back(v.a);
      views_b.push_back(v.b);
    }
  }

  const LossResult result = simclr ? simclr_loss(gathered_a, tau)
                                   : sharded_loss(gathered_a, gathered_b, tau, ShardLayout{ranges});
  if (!std::isfinite(result.loss)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << step << " (tau " << tau << ")";
    throw NumericError(msg.str());
  }
  if (!backward) return result.loss;

  for (std::size_t k = 0; k < graphs.size(); ++k) {
    const Segment r = ranges[k];
    const std::size_t rows = (r.end - r.begin) * rows_per_user;
    const std::size_t offset = r.begin * rows_per_user * d;
    Tensor ga({rows, d});
    std::copy_n(result.grad_a.data() + offset, rows * d, ga.data());
    if (simclr) {
      const Graph::Seed seeds[] = {{views_a[k], &ga}};
      graphs[k]->backward(seeds);
    } else {
      Tensor gb({rows, d});
      std::copy_n(result.grad_b.data() + offset, rows * d, gb.data());
      const Graph::Seed seeds[] = {{views_a[k], &ga}, {views_b[k], &gb}};
      graphs[k]->backward(seeds);
    }
  }
  objective_.tau.grad[0] += result.grad_tau;
  return result.loss;
}

double Trainer::compute_gradients(std::span<const UserExample* const> batch, std::size_t step) {
  if (batch.size() != cfg_.global_batch) {
    throw DimensionError("batch of " + std::to_string(batch.size()) + " does not match global_batch " +
                         std::to_string(cfg_.global_batch));
  }
  for (Parameter* p : params_) p->zero_grad();
  return batch_loss(batch, step, true, true);
}

double Trainer::step(std::span<const UserExample* const> batch, std::size_t step, std::size_t total_steps) {
  const double loss = compute_gradients(batch, step);
  clip_global_norm(params_, cfg_.clip_norm);
  adamw_update(params_, optimizer_, lr_at(step, total_steps, cfg_), cfg_);
  objective_.clamp();
  return loss;
}

double Trainer::eval_loss(std::span<const UserExample> examples) const {
  if (examples.size() < 2) throw DataError("eval loss: need at least two examples");
  const std::size_t batch = std::min(cfg_.global_batch, examples.size());
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + batch <= examples.size(); start += batch) {
    std::vector<const UserExample*> part;
    for (std::size_t i = start; i < start + batch; ++i) part.push_back(&examples[i]);
    total += batch_loss(part, 0, false, false);
    ++count;
  }
  return total / static_cast<double>(count);
}

std::size_t Trainer::total_steps(std::size_t n_train) const {
  if (cfg_.total_steps > 0) return cfg_.total_steps;
  return cfg_.epochs * (n_train / cfg_.global_batch);
}

std::vector<LossRecord> Trainer::train(std::span<const UserExample> train_set,
                                       std::span<const UserExample> eval_set, const Progress& progress) {
  const std::size_t per_epoch = train_set.size() / cfg_.global_batch;
  if (per_epoch == 0) {
    throw DataError("training set of " + std::to_string(train_set.size()) + " users is smaller than global_batch " +
                    std::to_string(cfg_.global_batch));
  }
  const std::size_t total = total_steps(train_set.size());
  if (total == 0) throw ConfigError("no training steps");

  std::vector<LossRecord> records;
  std::vector<std::size_t> order(train_set.size());
  std::vector<const UserExample*> batch(cfg_.global_batch);
  for (std::size_t step = 1; step <= total; ++step) {
    const std::size_t slot = (step - 1) % per_epoch;
    if (slot == 0) {
      const std::size_t epoch = (step - 1) / per_epoch;
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      if (cfg_.shuffle) {
        Rng rng(derive_key(cfg_.seed, 0xe90cu, epoch));
        rng.shuffle(order);
      }
    }
    for (std::size_t i = 0; i < cfg_.global_batch; ++i) {
      batch[i] = &train_set[order[slot * cfg_.global_batch + i]];
    }
    LossRecord rec;
    rec.step = step;
    rec.lr = lr_at(step, total, cfg_);
    rec.train_loss = this->step(batch, step, total);
    rec.tau = objective_.value();
    const bool due = step == total || (cfg_.eval_every > 0 && step % cfg_.eval_every == 0);
    if (due && eval_set.size() >= 2) rec.eval_loss = eval_loss(eval_set);
    records.push_back(rec);
    if (progress) progress(rec);
  }
  return records;
}

}  // namespace clue
