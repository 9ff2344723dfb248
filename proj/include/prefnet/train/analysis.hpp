// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prefnet/core/checkpoint.hpp"
#include "prefnet/model/model.hpp"

namespace prefnet::train {

/// |W2 * W1| for W1 of shape [hidden, inputs] and W2 of shape [1, hidden]:
/// one magnitude per head input.
std::vector<double> weight_product_magnitudes(std::span<const double> w1, std::span<const double> w2,
                                              std::size_t hidden, std::size_t inputs);

struct WeightAnalysis {
  std::vector<double> influence;  // one value per head input
  std::size_t audio_dim = 0;      // indices [0, audio_dim) are audio, the rest subject
  bool bn_folded = false;
};

/// Influence of each head input through the two linear layers of the head.
/// The batch norm between them is skipped unless `fold_bn`, in which case its
/// inference-time scale gamma / sqrt(running_var + eps) is folded into W2.
WeightAnalysis analyze_last_mlp(const std::vector<StoredTensor>& params, const model::ModelConfig& cfg,
                                bool fold_bn = false);

/// "index,mean_abs_weight,block" rows, block being "audio" or "subject".
std::string influence_csv(const WeightAnalysis& analysis);

}  // namespace prefnet::train
