// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace prefnet {

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn,
                           const std::vector<NamedTensor<double>>& params,
                           GradCheckOptions options) {
  for (auto p : params) p.tensor.zero_grad();
  loss_fn().backward();

  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) {
      auto g = p.tensor.grad();
      analytic.emplace_back(g.begin(), g.end());
    } else {
      analytic.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  NoGradGuard no_grad;
  const double base = loss_fn().item();
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor<double> tensor = params[t].tensor;
    auto data = tensor.data();
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t taken = 0;
    for (auto i : idx) {
      if (taken == options.samples_per_tensor) break;
      const double orig = data[i];
      auto probe = [&](double h) {
        data[i] = orig + h;
        const double up = loss_fn().item();
        data[i] = orig - h;
        const double down = loss_fn().item();
        data[i] = orig;
        // central difference, and the jump between the one-sided slopes
        return std::pair{(up - down) / (2 * h), (up - 2 * base + down) / h};
      };
      const auto [numeric, bend] = probe(options.step);
      const auto [numeric_half, bend_half] = probe(options.step / 2);
      // On a smooth stretch the central differences agree to O(h^2) and the
      // slope jump scales linearly with h. A relu or max kink inside the
      // stencil breaks one or the other; the difference there is no oracle,
      // so the coordinate is replaced by the next one.
      const double scale = options.kink_tol * (std::abs(numeric) + std::abs(numeric_half)) + options.zero_floor;
      if (std::abs(numeric - numeric_half) > scale || std::abs(bend - 2 * bend_half) > scale) {
        ++result.kinks_skipped;
        continue;
      }
      ++taken;
      const double a = analytic[t][i];
      const bool zero = std::abs(a) < options.zero_floor && std::abs(numeric) < options.zero_floor;
      const double rel = zero ? 0.0 : std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      ++result.checked;
      if (zero) ++result.below_floor;
      if (result.worst.empty() || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = params[t].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace prefnet
