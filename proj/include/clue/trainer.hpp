// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "clue/datapipe.hpp"
#include "clue/model.hpp"
#include "clue/objective.hpp"
#include "clue/tensor.hpp"

namespace clue {

enum class ObjectiveKind { clue, simclr };
std::string_view to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(std::string_view text);

struct TrainConfig {
  double peak_lr = 5e-4;
  double warmup_frac = 0.01;
  double final_lr_frac = 0.1;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double clip_norm = 0.01;
  std::size_t epochs = 8;
  std::size_t global_batch = 256;
  std::size_t micro_batch = 4;  // each micro-batch is one logical loss worker
  bool shuffle = true;
  std::uint64_t seed = 0;
  std::size_t total_steps = 0;  // 0: epochs * full batches per epoch
  std::size_t eval_every = 0;   // 0: evaluate only after the last step
  std::size_t service_a = 0;
  std::size_t service_b = 1;
  ObjectiveKind objective = ObjectiveKind::clue;
  double augment_rate = 0.2;

  void validate() const;
};

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg);

/// Linear warmup from 0 to peak over warmup_steps, then cosine decay to
/// final_lr_frac * peak at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

/// Scales all gradients so their global L2 norm is at most max_norm and
/// returns the norm before clipping. Throws NumericError on a non-finite norm.
double clip_global_norm(std::span<Parameter* const> params, double max_norm);

struct OptimizerState {
  explicit OptimizerState(std::span<Parameter* const> params);

  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;
};

/// Decoupled AdamW: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
/// Parameters with decay = false skip the wd term.
void adamw_update(std::span<Parameter* const> params, OptimizerState& state, double lr,
                  const TrainConfig& cfg);

struct LossRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double tau = 0.0;
  double train_loss = 0.0;
  std::optional<double> eval_loss;
};

// `step,lr,tau,train_loss,eval_loss`; eval_loss is blank when not measured.
void write_loss_csv(std::ostream& out, std::span<const LossRecord> records);

/// Fraction of rows i whose most similar b row is b_i. Ties go to the lowest index.
double in_batch_retrieval_accuracy(const Tensor& a, const Tensor& b);

// Evaluation-mode contrastive views of every example, one row each.
std::pair<Tensor, Tensor> embed_views(const ClueModel& model, std::span<const UserExample> examples,
                                      std::size_t service_a, std::size_t service_b);

// Mean in-batch accuracy over consecutive batches of `batch` rows; a
// trailing remainder of fewer than two rows is ignored.
double retrieval_accuracy(const ClueModel& model, std::span<const UserExample> examples, std::size_t batch,
                          std::size_t service_a, std::size_t service_b);

class Trainer {
 public:
  using Progress = std::function<void(const LossRecord&)>;

  Trainer(ClueModel& model, ObjectiveState& objective, TrainConfig cfg);

  const TrainConfig& config() const noexcept { return cfg_; }
  const OptimizerState& optimizer() const noexcept { return optimizer_; }
  std::span<Parameter* const> parameters() const noexcept { return params_; }

  // Forward + backward of one global batch; gradients are left in the
  // parameters (cleared first). Returns the loss.
  double compute_gradients(std::span<const UserExample* const> batch, std::size_t step);

  // One optimizer step at 1-based `step`: gradients, clipping, AdamW, tau clamp.
  double step(std::span<const UserExample* const> batch, std::size_t step, std::size_t total_steps);

  // Evaluation-mode objective averaged over consecutive global batches (a
  // single batch when fewer examples exist).
  double eval_loss(std::span<const UserExample> examples) const;

  std::size_t total_steps(std::size_t n_train) const;

  std::vector<LossRecord> train(std::span<const UserExample> train_set, std::span<const UserExample> eval_set,
                                const Progress& progress = {});

 private:
  double batch_loss(std::span<const UserExample* const> batch, std::size_t step, bool training,
                    bool backward) const;

  ClueModel& model_;
  ObjectiveState& objective_;
  TrainConfig cfg_;
  std::vector<Parameter*> params_;
  OptimizerState optimizer_;
};

}  // namespace clue
