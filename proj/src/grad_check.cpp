// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#include "clue/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "clue/ops.hpp"
#include "clue/random.hpp"

namespace clue {

namespace {

Var reduce_to_scalar(Var out, std::optional<Tensor>& weights) {
  if (out.value().size() == 1) return out;
  if (!weights) {
    Rng rng(0x9c4ec4ULL + out.value().size());
    weights = Tensor(out.shape());
    for (double& w : weights->values()) w = rng.uniform(-1.0, 1.0);
  }
  return weighted_sum(out, *weights);
}

double evaluate(const GradCheckFn& op, const std::vector<Tensor>& inputs,
                std::optional<Tensor>& weights) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(g.constant(t));
  return reduce_to_scalar(op(g, vars), weights).value().item();
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL");
  for (std::size_t i = 0; i < max_rel_error.size(); ++i) {
    os << " | input " << i << ": rel " << max_rel_error[i] << " abs " << max_abs_error[i];
  }
  return os.str();
}

GradCheckReport grad_check(const GradCheckFn& op, std::vector<Tensor> inputs, double rtol,
                           double atol, double step) {
  std::optional<Tensor> weights;
  std::vector<Tensor> analytic;
  {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(g.input(t));
    Var out = reduce_to_scalar(op(g, vars), weights);
    g.backward(out);
    for (const Var& v : vars) {
      analytic.push_back(g.has_grad(v) ? g.grad(v) : Tensor(v.shape()));
    }
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double worst_rel = 0.0;
    double worst_abs = 0.0;
    for (std::size_t e = 0; e < inputs[i].size(); ++e) {
      const double saved = inputs[i][e];
      inputs[i][e] = saved + step;
      const double up = evaluate(op, inputs, weights);
      inputs[i][e] = saved - step;
      const double down = evaluate(op, inputs, weights);
      inputs[i][e] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][e];
      const double diff = std::abs(a - numeric);
      const double magnitude = std::max(std::abs(a), std::abs(numeric));
      worst_abs = std::max(worst_abs, diff);
      if (diff > atol) worst_rel = std::max(worst_rel, diff / magnitude);
      if (diff > atol + rtol * magnitude) report.passed = false;
    }
    report.max_rel_error.push_back(worst_rel);
    report.max_abs_error.push_back(worst_abs);
  }
  return report;
}

GradCheckReport grad_check_parameters(std::span<Parameter* const> params,
                                      const std::function<Var(Graph&)>& loss, double rtol,
                                      double atol, double step) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) {
    analytic.push_back(p->grad);
    p->zero_grad();
  }
  auto evaluate_loss = [&] {
    Graph g(false);
    return loss(g).value().item();
  };

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i]->value;
    double worst_rel = 0.0;
    double worst_abs = 0.0;
    for (std::size_t e = 0; e < value.size(); ++e) {
      const double saved = value[e];
      value[e] = saved + step;
      const double up = evaluate_loss();
      value[e] = saved - step;
      const double down = evaluate_loss();
      value[e] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i][e];
      const double diff = std::abs(a - numeric);
      const double magnitude = std::max(std::abs(a), std::abs(numeric));
      worst_abs = std::max(worst_abs, diff);
      if (diff > atol) worst_rel = std::max(worst_rel, diff / magnitude);
      if (diff > atol + rtol * magnitude) report.passed = false;
    }
    report.max_rel_error.push_back(worst_rel);
    report.max_abs_error.push_back(worst_abs);
  }
  return report;
}

}  // namespace clue
