// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "prefnet/core/tensor.hpp"

// Differentiable operators. Each returns a fresh tensor and, when grad
// recording is enabled, links it to its inputs. All are instantiated for
// float (training) and double (gradient checks, oracles).

namespace prefnet {

struct Conv2dParams {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Same data, new extents (element count must match).
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// out[n,o] = sum_d x[n,d] * w[o,d] + b[o]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Cross-correlation of x[N,C,H,W] with a shared kernel w[K,C,kh,kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, Conv2dParams p = {});

/// Like conv2d, but sample n uses its own kernel bank w[n] of shape
/// [N,K,C,kh,kw].
template <typename T>
Tensor<T> conv2d_per_sample(const Tensor<T>& x, const Tensor<T>& weight,
                            Conv2dParams p = {});

/// Non-overlapping 2x2 average pooling; a trailing odd row/column is dropped.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x);

/// Reductions that remove one axis.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis);
template <typename T>
Tensor<T> max_axis(const Tensor<T>& x, std::size_t axis);

/// Joins two rank-2 tensors along the column axis.
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b);

/// x[N,C,H,W] * gate[N,W], broadcast over channels and rows.
template <typename T>
Tensor<T> scale_last_axis(const Tensor<T>& x, const Tensor<T>& gate);

/// Row-wise softmax of a rank-2 tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

/// -(1/N) sum_n log(probs[n, target[n]]) over rows of a probability matrix.
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& probs, std::span<const int> targets);

}  // namespace prefnet
