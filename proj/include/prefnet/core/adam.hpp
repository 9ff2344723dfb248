// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prefnet/core/nn.hpp"

namespace prefnet {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam without weight decay or clipping.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NamedTensor<T>> params, AdamConfig config = {});

  /// Applies one update to every parameter. Throws ValidationError naming
  /// the first parameter without a populated gradient; nothing is modified
  /// in that case.
  void step();
  void zero_grad();

  double lr() const { return config_.lr; }
  void set_lr(double lr);
  std::size_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }

  std::span<const T> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const T> second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<NamedTensor<T>> params_;
  AdamConfig config_;
  std::size_t step_count_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace prefnet
