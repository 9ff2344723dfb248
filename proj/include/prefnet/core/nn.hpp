// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "prefnet/core/ops.hpp"
#include "prefnet/core/tensor.hpp"

namespace prefnet {

enum class Mode { Training, Inference };

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

/// Trainable tensors and persistent statistics of a module tree, in a
/// stable order. Buffers never receive gradients.
template <typename T>
struct ParameterList {
  std::vector<NamedTensor<T>> params;
  std::vector<NamedTensor<T>> buffers;
};

/// Kaiming-uniform fan-in initialisation: U(-b, b), b = sqrt(6 / fan_in).
/// Values are drawn in double so both precisions see the same sequence.
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

/// Per-channel batch normalisation over axis 1 of a rank-2 [N,C] or rank-4
/// [N,C,H,W] input.
template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, T momentum = T(0.1), T eps = T(1e-5));

  /// Training mode normalises with biased batch statistics and folds the
  /// unbiased variance into the running estimate. Inference mode uses the
  /// running statistics only.
  Tensor<T> forward(const Tensor<T>& x, Mode mode);

  void collect(const std::string& prefix, ParameterList<T>& out) const;
  std::size_t channels() const { return gamma.numel(); }

  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

template <typename T>
struct Linear {
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  Tensor<T> weight;
  Tensor<T> bias;
};

/// linear(D -> hidden) -> batchnorm -> relu -> linear(hidden -> out)
template <typename T>
struct MlpBlock {
  MlpBlock() = default;
  MlpBlock(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  void collect(const std::string& prefix, ParameterList<T>& out) const;

  Linear<T> fc1;
  BatchNorm<T> bn;
  Linear<T> fc2;
};

extern template class BatchNorm<float>;
extern template class BatchNorm<double>;
extern template struct Linear<float>;
extern template struct Linear<double>;
extern template struct MlpBlock<float>;
extern template struct MlpBlock<double>;

}  // namespace prefnet
