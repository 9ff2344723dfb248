// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prefnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

// One vertex of the define-by-run graph. Parents are owned so that a loss
// tensor keeps its whole history alive until it is dropped.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reference-semantics handle to an n-dimensional row-major array that can
/// take part in reverse-mode differentiation. Copies share storage; use
/// detach() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = detail::Node<T>;
  using BackwardFn = std::function<void(Node&)>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> grad();
  void zero_grad();

  /// Reverse sweep from this scalar. Gradients accumulate into every
  /// reachable tensor that requires them.
  void backward() const;

  /// Deep copy without history.
  Tensor detach() const;

  /// Builds an op output. When grad recording is off, or no parent requires
  /// a gradient, the parents and backward closure are dropped.
  static Tensor make_result(Shape shape, std::vector<T> data,
                            std::vector<Tensor> parents, BackwardFn backward,
                            std::string_view op);

  Node& node() const;
  Node* node_ptr() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  std::shared_ptr<Node> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

/// Element-wise precision conversion; the result is a leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src, bool requires_grad = false) {
  std::vector<To> out(src.numel());
  auto in = src.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<To>(in[i]);
  return Tensor<To>(src.shape(), std::move(out), requires_grad);
}

}  // namespace prefnet
