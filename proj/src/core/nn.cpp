// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/core/nn.hpp"

#include <cmath>

#include "prefnet/core/error.hpp"

namespace prefnet {

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, T momentum_, T eps_)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      running_mean(Tensor<T>::zeros({channels})),
      running_var(Tensor<T>::full({channels}, T(1))),
      momentum(momentum_),
      eps(eps_) {}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("batchnorm: expected [N,C] or [N,C,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t N = x.dim(0), C = x.dim(1);
  if (C != channels()) {
    throw ShapeError("batchnorm: layer has " + std::to_string(channels()) +
                     " channels, input " + shape_str(x.shape()));
  }
  const std::size_t S = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const std::size_t m = N * S;
  const T* xd = x.data().data();
  const T* g = gamma.data().data();
  const T* b = beta.data().data();
  std::vector<T> out(x.numel());

  if (mode == Mode::Inference) {
    std::vector<T> inv_std(C);
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = T(1) / std::sqrt(running_var.data()[c] + eps);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t base = (n * C + c) * S;
        const T mu = running_mean.data()[c];
        for (std::size_t s = 0; s < S; ++s)
          out[base + s] = g[c] * ((xd[base + s] - mu) * inv_std[c]) + b[c];
      }
    return Tensor<T>::make_result(
        x.shape(), std::move(out), {x, gamma, beta},
        [xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr(),
         mu = std::vector<T>(running_mean.data().begin(), running_mean.data().end()),
         inv_std, N, C, S](detail::Node<T>& self) {
          if (xn->requires_grad) xn->ensure_grad();
          if (gn->requires_grad) gn->ensure_grad();
          if (bn->requires_grad) bn->ensure_grad();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
              const std::size_t base = (n * C + c) * S;
              for (std::size_t s = 0; s < S; ++s) {
                const T dy = self.grad[base + s];
                if (xn->requires_grad) xn->grad[base + s] += dy * gn->data[c] * inv_std[c];
                if (gn->requires_grad)
                  gn->grad[c] += dy * (xn->data[base + s] - mu[c]) * inv_std[c];
                if (bn->requires_grad) bn->grad[c] += dy;
              }
            }
        },
        "batchnorm_eval");
  }

  if (m < 2) {
    throw ValidationError("batchnorm: training mode needs at least 2 values per channel, got " +
                          std::to_string(m) + " (degenerate variance)");
  }
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(C);
  auto rm = running_mean.data();
  auto rv = running_var.data();
  for (std::size_t c = 0; c < C; ++c) {
    double acc = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = xd + (n * C + c) * S;
#pragma omp simd reduction(+ : acc)
      for (std::size_t s = 0; s < S; ++s) acc += p[s];
    }
    const double mu = acc / static_cast<double>(m);
    double sq = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* p = xd + (n * C + c) * S;
#pragma omp simd reduction(+ : sq)
      for (std::size_t s = 0; s < S; ++s) {
        const double d = static_cast<double>(p[s]) - mu;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[c] = static_cast<T>(is);
    for (std::size_t n = 0; n < N; ++n) {
      const T* src = xd + (n * C + c) * S;
      T* xh = xhat.data() + (n * C + c) * S;
      T* dst = out.data() + (n * C + c) * S;
      const T mu_t = static_cast<T>(mu), is_t = static_cast<T>(is), gc = g[c], bc = b[c];
#pragma omp simd
      for (std::size_t s = 0; s < S; ++s) {
        xh[s] = (src[s] - mu_t) * is_t;
        dst[s] = gc * xh[s] + bc;
      }
    }
    // Probe passes under NoGradGuard (e.g. finite differences) leave the
    // running statistics untouched.
    if (grad_enabled()) {
      const double unbiased = sq / static_cast<double>(m - 1);
      rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * mu);
      rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr(), xhat = std::move(xhat),
       inv_std = std::move(inv_std), N, C, S, m](detail::Node<T>& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t c = 0; c < C; ++c) {
          double sdy = 0, sdyx = 0;
          for (std::size_t n = 0; n < N; ++n) {
            const T* dy = self.grad.data() + (n * C + c) * S;
            const T* xh = xhat.data() + (n * C + c) * S;
#pragma omp simd reduction(+ : sdy, sdyx)
            for (std::size_t s = 0; s < S; ++s) {
              sdy += dy[s];
              sdyx += static_cast<double>(dy[s]) * xh[s];
            }
          }
          if (gn->requires_grad) gn->grad[c] += static_cast<T>(sdyx);
          if (bn->requires_grad) bn->grad[c] += static_cast<T>(sdy);
          if (!xn->requires_grad) continue;
          const double k = static_cast<double>(gn->data[c]) * inv_std[c] / static_cast<double>(m);
          for (std::size_t n = 0; n < N; ++n) {
            const T* dy = self.grad.data() + (n * C + c) * S;
            const T* xh = xhat.data() + (n * C + c) * S;
            T* gx = xn->grad.data() + (n * C + c) * S;
            const double md = static_cast<double>(m);
#pragma omp simd
            for (std::size_t s = 0; s < S; ++s) {
              gx[s] += static_cast<T>(k * (md * dy[s] - sdy - xh[s] * sdyx));
            }
          }
        }
      },
      "batchnorm");
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.params.push_back({prefix + ".gamma", gamma});
  out.params.push_back({prefix + ".beta", beta});
  out.buffers.push_back({prefix + ".running_mean", running_mean});
  out.buffers.push_back({prefix + ".running_var", running_var});
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(kaiming_uniform<T>({out, in}, in, rng)), bias(Tensor<T>::zeros({out}, true)) {}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.params.push_back({prefix + ".weight", weight});
  out.params.push_back({prefix + ".bias", bias});
}

template <typename T>
MlpBlock<T>::MlpBlock(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng)
    : fc1(in, hidden, rng), bn(hidden), fc2(hidden, out, rng) {}

template <typename T>
Tensor<T> MlpBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  return fc2.forward(relu(bn.forward(fc1.forward(x), mode)));
}

template <typename T>
void MlpBlock<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  fc1.collect(prefix + ".fc1", out);
  bn.collect(prefix + ".bn", out);
  fc2.collect(prefix + ".fc2", out);
}

template Tensor<float> kaiming_uniform<float>(Shape, std::size_t, std::mt19937_64&);
template Tensor<double> kaiming_uniform<double>(Shape, std::size_t, std::mt19937_64&);
template class BatchNorm<float>;
template class BatchNorm<double>;
template struct Linear<float>;
template struct Linear<double>;
template struct MlpBlock<float>;
template struct MlpBlock<double>;

}  // namespace prefnet
