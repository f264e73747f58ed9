// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clue/autograd.hpp"

namespace clue {

struct GradCheckReport {
  // One entry per input tensor.
  std::vector<double> max_rel_error;
  std::vector<double> max_abs_error;
  bool passed = true;

  std::string summary() const;
};

using GradCheckFn = std::function<Var(Graph&, std::span<const Var>)>;

/// Compares reverse-mode gradients of `op` with central differences.
///
/// A non-scalar output is reduced with fixed pseudo-random weights first, so
/// every output element contributes. An element fails when
/// |analytic - numeric| > atol + rtol * max(|analytic|, |numeric|); the
/// reported relative error ignores elements already within atol.
/// Failures are reported, never thrown.
GradCheckReport grad_check(const GradCheckFn& op, std::vector<Tensor> inputs,
                           double rtol = 1e-3, double atol = 1e-6, double step = 1e-5);

/// The same comparison for a scalar loss over learnable parameters: the
/// analytic side is Parameter::grad after one backward pass (gradients are
/// cleared first and again on return). One report entry per parameter.
GradCheckReport grad_check_parameters(std::span<Parameter* const> params,
                                      const std::function<Var(Graph&)>& loss, double rtol = 1e-3,
                                      double atol = 1e-6, double step = 1e-5);

}  // namespace clue
