// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prefnet/core/nn.hpp"

namespace prefnet {

struct GradCheckOptions {
  std::size_t samples_per_tensor = 8;  // whole tensor when smaller
  double step = 1e-5;
  std::uint64_t seed = 0;
  // Coordinates whose analytic and numeric gradients are both below this are
  // structurally zero (e.g. a bias cancelled by a following normalization);
  // their ratio is rounding noise, so they count as exact.
  double zero_floor = 1e-8;
  // Relative disagreement between the step and half-step central differences
  // that marks a kink inside the stencil.
  double kink_tol = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst;  // "name[index]" of the worst coordinate
  std::size_t checked = 0;
  std::size_t below_floor = 0;    // checked coordinates treated as exact zeros
  std::size_t kinks_skipped = 0;  // candidates replaced because of a kink
};

/// Compares backward() against central differences of `loss_fn` on sampled
/// coordinates of each tensor in `params`. Relative error per coordinate is
/// |analytic - numeric| / (|analytic| + |numeric| + 1e-12), or 0 when both lie
/// below `zero_floor`. Candidates whose stencil straddles a non-differentiable
/// point (step and half-step differences disagree beyond `kink_tol`) are
/// replaced by further coordinates of the same tensor and counted in
/// `kinks_skipped`.
///
/// `loss_fn` must be deterministic; batch-norm layers should either run in
/// inference mode or see the same batch on every call.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           const std::vector<NamedTensor<double>>& params,
                           GradCheckOptions options = {});

}  // namespace prefnet
