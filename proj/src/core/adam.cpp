// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/core/adam.hpp"

#include <cmath>
#include <utility>

#include "prefnet/core/error.hpp"

namespace prefnet {

template <typename T>
Adam<T>::Adam(std::vector<NamedTensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  set_lr(config.lr);
  if (config_.beta1 <= 0 || config_.beta1 >= 1 || config_.beta2 <= 0 || config_.beta2 >= 1) {
    throw ValidationError("adam: betas must lie in (0,1)");
  }
  if (config_.epsilon <= 0) throw ValidationError("adam: epsilon must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::set_lr(double lr) {
  if (!(lr > 0)) throw ValidationError("adam: learning rate must be positive");
  config_.lr = lr;
}

template <typename T>
void Adam<T>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) {
      throw ValidationError("adam: parameter '" + p.name + "' has no gradient");
    }
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i].tensor.data();
    auto g = std::as_const(params_[i].tensor).grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mhat = static_cast<double>(m[j]) / c1;
      const double vhat = static_cast<double>(v[j]) / c2;
      theta[j] = static_cast<T>(static_cast<double>(theta[j]) -
                                config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace prefnet
