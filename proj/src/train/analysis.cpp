// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/train/analysis.hpp"

#include <cmath>
#include <sstream>

#include "prefnet/core/error.hpp"

namespace prefnet::train {

namespace {

constexpr double kBnEpsilon = 1e-5;

const StoredTensor& find(const std::vector<StoredTensor>& params, const std::string& name) {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw ValidationError("checkpoint has no tensor '" + name + "'");
}

std::vector<double> as_double(const StoredTensor& t) {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, t.values);
}

}  // namespace

std::vector<double> weight_product_magnitudes(std::span<const double> w1, std::span<const double> w2,
                                              std::size_t hidden, std::size_t inputs) {
  if (w1.size() != hidden * inputs || w2.size() != hidden) {
    throw ShapeError("weight product: expected W1 [" + std::to_string(hidden) + "," + std::to_string(inputs) +
                     "] and W2 [1," + std::to_string(hidden) + "]");
  }
  std::vector<double> out(inputs, 0.0);
  for (std::size_t h = 0; h < hidden; ++h) {
    for (std::size_t d = 0; d < inputs; ++d) out[d] += w2[h] * w1[h * inputs + d];
  }
  for (auto& v : out) v = std::abs(v);
  return out;
}

WeightAnalysis analyze_last_mlp(const std::vector<StoredTensor>& params, const model::ModelConfig& cfg,
                                bool fold_bn) {
  const auto& fc1 = find(params, "head.fc1.weight");
  const auto& fc2 = find(params, "head.fc2.weight");
  const std::size_t inputs = cfg.head_input_dim();
  if (fc1.shape.size() != 2 || fc1.shape[1] != inputs || fc2.shape.size() != 2 || fc2.shape[0] != 1 ||
      fc2.shape[1] != fc1.shape[0]) {
    throw ShapeError("analysis: head weights do not match the model config (" + std::to_string(inputs) +
                     " head inputs expected)");
  }
  const std::size_t hidden = fc1.shape[0];
  auto w2 = as_double(fc2);
  if (fold_bn) {
    const auto gamma = as_double(find(params, "head.bn.gamma"));
    const auto var = as_double(find(params, "head.bn.running_var"));
    for (std::size_t h = 0; h < hidden; ++h) w2[h] *= gamma[h] / std::sqrt(var[h] + kBnEpsilon);
  }
  WeightAnalysis a;
  a.influence = weight_product_magnitudes(as_double(fc1), w2, hidden, inputs);
  a.audio_dim = cfg.encoder.embedding_dim();
  a.bn_folded = fold_bn;
  return a;
}

std::string influence_csv(const WeightAnalysis& analysis) {
  std::ostringstream out;
  out.precision(9);
  out << "index,mean_abs_weight,block\n";
  for (std::size_t i = 0; i < analysis.influence.size(); ++i) {
    out << i << ',' << analysis.influence[i] << ',' << (i < analysis.audio_dim ? "audio" : "subject") << '\n';
  }
  return out.str();
}

}  // namespace prefnet::train
