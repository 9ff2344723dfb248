// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefnet/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <cblas.h>

#include "prefnet/core/error.hpp"

namespace prefnet {

namespace {

template <typename T>
using Node = detail::Node<T>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(x.shape()));
  }
}

// Geometry shared by the conv kernels below.
struct ConvGeom {
  std::size_t H, W, kh, kw, OH, OW;
  Conv2dParams p;

  // Output columns whose receptive column for tap j lies inside the input.
  std::pair<std::size_t, std::size_t> col_range(std::size_t j) const {
    std::ptrdiff_t lo = 0;
    auto off = static_cast<std::ptrdiff_t>(p.pad_w) - static_cast<std::ptrdiff_t>(j);
    if (off > 0) lo = (off + static_cast<std::ptrdiff_t>(p.stride_w) - 1) /
                      static_cast<std::ptrdiff_t>(p.stride_w);
    std::ptrdiff_t last = static_cast<std::ptrdiff_t>(W) - 1 + off;
    std::ptrdiff_t hi = last < 0 ? 0 : last / static_cast<std::ptrdiff_t>(p.stride_w) + 1;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(OW));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }

  // Input row for output row oh and tap i, or -1 if it falls in the padding.
  std::ptrdiff_t in_row(std::size_t oh, std::size_t i) const {
    auto ih = static_cast<std::ptrdiff_t>(oh * p.stride_h + i) -
              static_cast<std::ptrdiff_t>(p.pad_h);
    return (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) ? -1 : ih;
  }

  std::ptrdiff_t col_offset(std::size_t j) const {
    return static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(p.pad_w);
  }
};

ConvGeom conv_geometry(const Shape& xs, std::size_t kh, std::size_t kw, Conv2dParams p,
                       const char* op) {
  if (p.stride_h == 0 || p.stride_w == 0) {
    throw ShapeError(std::string(op) + ": stride must be positive");
  }
  const std::size_t H = xs[2], W = xs[3];
  if (H + 2 * p.pad_h < kh || W + 2 * p.pad_w < kw) {
    throw ShapeError(std::string(op) + ": padded input " + std::to_string(H + 2 * p.pad_h) +
                     "x" + std::to_string(W + 2 * p.pad_w) + " smaller than kernel " +
                     std::to_string(kh) + "x" + std::to_string(kw));
  }
  ConvGeom g{H, W, kh, kw, 0, 0, p};
  g.OH = (H + 2 * p.pad_h - kh) / p.stride_h + 1;
  g.OW = (W + 2 * p.pad_w - kw) / p.stride_w + 1;
  return g;
}

// Unrolls one sample [C,H,W] into columns [C*kh*kw, OH*OW]; taps that fall
// in the padding read as zero.
template <typename T>
void im2col(const ConvGeom& g, std::size_t C, const T* in, T* col) {
  const std::size_t P = g.OH * g.OW;
  for (std::size_t c = 0; c < C; ++c) {
    const T* plane = in + c * g.H * g.W;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        const auto [lo, hi] = g.col_range(j);
        const auto coff = g.col_offset(j);
        for (std::size_t oh = 0; oh < g.OH; ++oh) {
          T* dst = row + oh * g.OW;
          const auto ih = g.in_row(oh, i);
          if (ih < 0) {
            std::fill(dst, dst + g.OW, T(0));
            continue;
          }
          const T* src = plane + ih * static_cast<std::ptrdiff_t>(g.W) + coff;
          std::fill(dst, dst + lo, T(0));
          if (g.p.stride_w == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] = src[ow * g.p.stride_w];
          }
          std::fill(dst + hi, dst + g.OW, T(0));
        }
      }
    }
  }
}

// Adds columns [C*kh*kw, OH*OW] back onto one sample's input gradient [C,H,W].
template <typename T>
void col2im_add(const ConvGeom& g, std::size_t C, const T* col, T* gin) {
  const std::size_t P = g.OH * g.OW;
  for (std::size_t c = 0; c < C; ++c) {
    T* plane = gin + c * g.H * g.W;
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        const auto [lo, hi] = g.col_range(j);
        const auto coff = g.col_offset(j);
        for (std::size_t oh = 0; oh < g.OH; ++oh) {
          const auto ih = g.in_row(oh, i);
          if (ih < 0) continue;
          T* dst = plane + ih * static_cast<std::ptrdiff_t>(g.W) + coff;
          const T* src = row + oh * g.OW;
          if (g.p.stride_w == 1) {
#pragma omp simd
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow] += src[ow];
          } else {
            for (std::size_t ow = lo; ow < hi; ++ow) dst[ow * g.p.stride_w] += src[ow];
          }
        }
      }
    }
  }
}

// Row-major C = alpha * op(A) * op(B) + beta * C through OpenBLAS. The
// library runs single-threaded so results do not depend on the thread count;
// parallelism lives at the level of independent training runs.
void ensure_single_threaded_blas() {
  static const bool once = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)once;
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, float alpha, const float* a,
          std::size_t lda, const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
  ensure_single_threaded_blas();
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, double alpha, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double beta, double* c, std::size_t ldc) {
  ensure_single_threaded_blas();
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
              beta, c, static_cast<int>(ldc));
}

// Shared implementation; per_sample selects the [N,K,C,kh,kw] kernel layout.
template <typename T>
Tensor<T> conv_impl(const Tensor<T>& x, const Tensor<T>& w, Conv2dParams p, bool per_sample) {
  const char* op = per_sample ? "conv2d_per_sample" : "conv2d";
  require_rank(x, 4, op);
  require_rank(w, per_sample ? 5 : 4, op);
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t off = per_sample ? 1 : 0;
  const std::size_t N = xs[0], C = xs[1];
  const std::size_t K = ws[off], kh = ws[off + 2], kw = ws[off + 3];
  if (per_sample && ws[0] != N) {
    throw ShapeError(std::string(op) + ": kernel batch " + std::to_string(ws[0]) +
                     " != input batch " + std::to_string(N));
  }
  if (ws[off + 1] != C) {
    throw ShapeError(std::string(op) + ": kernel expects " + std::to_string(ws[off + 1]) +
                     " input channels, input " + shape_str(xs) + " has " + std::to_string(C));
  }
  const ConvGeom g = conv_geometry(xs, kh, kw, p, op);
  const std::size_t in_sample = C * g.H * g.W, P = g.OH * g.OW, R = C * kh * kw;
  const std::size_t wbank = K * R;

  std::vector<T> out(N * K * P, T(0));
  std::vector<T> col(R * P);
  const T* xd = x.data().data();
  const T* wd = w.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    im2col(g, C, xd + n * in_sample, col.data());
    // out[K,P] = w[K,R] * col[R,P]
    gemm(false, false, K, P, R, T(1), wd + (per_sample ? n * wbank : 0), R, col.data(), P, T(0),
         out.data() + n * K * P, P);
  }

  Shape os{N, K, g.OH, g.OW};
  return Tensor<T>::make_result(
      std::move(os), std::move(out), {x, w},
      [xn = x.node_ptr(), wnode = w.node_ptr(), g, N, C, K, R, P, in_sample, wbank, per_sample](Node<T>& self) {
        T* gin = nullptr;
        T* gw = nullptr;
        if (xn->requires_grad) {
          xn->ensure_grad();
          gin = xn->grad.data();
        }
        if (wnode->requires_grad) {
          wnode->ensure_grad();
          gw = wnode->grad.data();
        }
        const T* xd = xn->data.data();
        const T* wd = wnode->data.data();
        std::vector<T> col(R * P);
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t wb = per_sample ? n * wbank : 0;
          const T* go = self.grad.data() + n * K * P;
          if (gw) {
            im2col(g, C, xd + n * in_sample, col.data());
            // gw[K,R] += gout[K,P] * col[R,P]^T
            gemm(false, true, K, R, P, T(1), go, P, col.data(), P, T(1), gw + wb, R);
          }
          if (gin) {
            // gcol[R,P] = w[K,R]^T * gout[K,P]
            gemm(true, false, R, P, K, T(1), wd + wb, R, go, P, T(0), col.data(), P);
            col2im_add(g, C, col.data(), gin + n * in_sample);
          }
        }
      },
      op);
}

// Views a tensor as [outer, len, inner] around `axis`.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  return Tensor<T>::make_result(
      a.shape(), std::move(out), {a, b},
      [an = a.node_ptr(), bn = b.node_ptr()](Node<T>& self) {
        for (auto* p : {an, bn}) {
          if (!p->requires_grad) continue;
          p->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
      },
      "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  return Tensor<T>::make_result(
      a.shape(), std::move(out), {a, b},
      [an = a.node_ptr(), bn = b.node_ptr()](Node<T>& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            an->grad[i] += self.grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < self.grad.size(); ++i)
            bn->grad[i] += self.grad[i] * an->data[i];
        }
      },
      "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x},
      [xn = x.node_ptr(), factor](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * factor;
      },
      "scale");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return Tensor<T>::make_result(
      Shape{}, {acc}, {x},
      [xn = x.node_ptr()](Node<T>& self) {
        xn->ensure_grad();
        const T g = self.grad[0];
        for (auto& v : xn->grad) v += g;
      },
      "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  const T* xd = x.data().data();
  T* od = out.data();
  const std::size_t n = out.size();
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x},
      [xn = x.node_ptr()](Node<T>& self) {
        xn->ensure_grad();
        const T* in = xn->data.data();
        const T* go = self.grad.data();
        T* gi = xn->grad.data();
        const std::size_t n = self.grad.size();
#pragma omp simd
        for (std::size_t i = 0; i < n; ++i) gi[i] += in[i] > T(0) ? go[i] : T(0);
      },
      "relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xd[i]));
  return Tensor<T>::make_result(
      x.shape(), out, {x},
      [xn = x.node_ptr(), y = out](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          xn->grad[i] += self.grad[i] * y[i] * (T(1) - y[i]);
      },
      "sigmoid");
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return Tensor<T>::make_result(
      std::move(shape), std::move(out), {x},
      [xn = x.node_ptr()](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
      },
      "reshape");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear");
  require_rank(bias, 1, "linear");
  const std::size_t N = x.dim(0), D = x.dim(1), O = weight.dim(0);
  if (weight.dim(1) != D || bias.dim(0) != O) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()) +
                     " do not agree");
  }
  std::vector<T> out(N * O);
  const T* xd = x.data().data();
  const T* wd = weight.data().data();
  const T* bd = bias.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    const T* xr = xd + n * D;
    for (std::size_t o = 0; o < O; ++o) {
      const T* wr = wd + o * D;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t d = 0; d < D; ++d) acc += xr[d] * wr[d];
      out[n * O + o] = acc + bd[o];
    }
  }
  return Tensor<T>::make_result(
      Shape{N, O}, std::move(out), {x, weight, bias},
      [xn = x.node_ptr(), wn = weight.node_ptr(), bn = bias.node_ptr(), N, D, O](Node<T>& self) {
        const T* g = self.grad.data();
        if (xn->requires_grad) {
          xn->ensure_grad();
          for (std::size_t n = 0; n < N; ++n) {
            T* gx = xn->grad.data() + n * D;
            for (std::size_t o = 0; o < O; ++o) {
              const T go = g[n * O + o];
              const T* wr = wn->data.data() + o * D;
#pragma omp simd
              for (std::size_t d = 0; d < D; ++d) gx[d] += go * wr[d];
            }
          }
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          for (std::size_t n = 0; n < N; ++n) {
            const T* xr = xn->data.data() + n * D;
            for (std::size_t o = 0; o < O; ++o) {
              const T go = g[n * O + o];
              T* gw = wn->grad.data() + o * D;
#pragma omp simd
              for (std::size_t d = 0; d < D; ++d) gw[d] += go * xr[d];
            }
          }
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t o = 0; o < O; ++o) bn->grad[o] += g[n * O + o];
        }
      },
      "linear");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, Conv2dParams p) {
  return conv_impl(x, weight, p, false);
}

template <typename T>
Tensor<T> conv2d_per_sample(const Tensor<T>& x, const Tensor<T>& weight, Conv2dParams p) {
  return conv_impl(x, weight, p, true);
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x) {
  require_rank(x, 4, "avg_pool2d");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = H / 2, OW = W / 2;
  if (OH == 0 || OW == 0) {
    throw ShapeError("avg_pool2d: input " + shape_str(x.shape()) + " too small for 2x2 pooling");
  }
  std::vector<T> out(N * C * OH * OW);
  const T* xd = x.data().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* in = xd + nc * H * W;
    T* o = out.data() + nc * OH * OW;
    for (std::size_t oh = 0; oh < OH; ++oh) {
      const T* r0 = in + 2 * oh * W;
      const T* r1 = r0 + W;
      for (std::size_t ow = 0; ow < OW; ++ow) {
        o[oh * OW + ow] =
            T(0.25) * (r0[2 * ow] + r0[2 * ow + 1] + r1[2 * ow] + r1[2 * ow + 1]);
      }
    }
  }
  return Tensor<T>::make_result(
      Shape{N, C, OH, OW}, std::move(out), {x},
      [xn = x.node_ptr(), N, C, H, W, OH, OW](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t nc = 0; nc < N * C; ++nc) {
          T* gi = xn->grad.data() + nc * H * W;
          const T* go = self.grad.data() + nc * OH * OW;
          for (std::size_t oh = 0; oh < OH; ++oh) {
            for (std::size_t ow = 0; ow < OW; ++ow) {
              const T g = T(0.25) * go[oh * OW + ow];
              gi[2 * oh * W + 2 * ow] += g;
              gi[2 * oh * W + 2 * ow + 1] += g;
              gi[(2 * oh + 1) * W + 2 * ow] += g;
              gi[(2 * oh + 1) * W + 2 * ow + 1] += g;
            }
          }
        }
      },
      "avg_pool2d");
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("mean_axis: axis out of range for " + shape_str(x.shape()));
  const auto a = split_axis(x.shape(), axis);
  if (a.len == 0) throw ShapeError("mean_axis: empty axis");
  Shape os = x.shape();
  os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(a.outer * a.inner, T(0));
  const T* xd = x.data().data();
  const T inv = T(1) / static_cast<T>(a.len);
  for (std::size_t o = 0; o < a.outer; ++o) {
    T* dst = out.data() + o * a.inner;
    for (std::size_t l = 0; l < a.len; ++l) {
      const T* src = xd + (o * a.len + l) * a.inner;
      for (std::size_t i = 0; i < a.inner; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < a.inner; ++i) dst[i] *= inv;
  }
  return Tensor<T>::make_result(
      std::move(os), std::move(out), {x},
      [xn = x.node_ptr(), a, inv](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t o = 0; o < a.outer; ++o) {
          const T* go = self.grad.data() + o * a.inner;
          for (std::size_t l = 0; l < a.len; ++l) {
            T* gi = xn->grad.data() + (o * a.len + l) * a.inner;
            for (std::size_t i = 0; i < a.inner; ++i) gi[i] += go[i] * inv;
          }
        }
      },
      "mean_axis");
}

template <typename T>
Tensor<T> max_axis(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("max_axis: axis out of range for " + shape_str(x.shape()));
  const auto a = split_axis(x.shape(), axis);
  if (a.len == 0) throw ShapeError("max_axis: empty axis");
  Shape os = x.shape();
  os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(a.outer * a.inner);
  std::vector<std::size_t> arg(a.outer * a.inner, 0);
  const T* xd = x.data().data();
  for (std::size_t o = 0; o < a.outer; ++o) {
    for (std::size_t i = 0; i < a.inner; ++i) {
      std::size_t best = 0;
      T bv = xd[o * a.len * a.inner + i];
      for (std::size_t l = 1; l < a.len; ++l) {
        const T v = xd[(o * a.len + l) * a.inner + i];
        if (v > bv) {
          bv = v;
          best = l;
        }
      }
      out[o * a.inner + i] = bv;
      arg[o * a.inner + i] = best;
    }
  }
  return Tensor<T>::make_result(
      std::move(os), std::move(out), {x},
      [xn = x.node_ptr(), a, arg = std::move(arg)](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t o = 0; o < a.outer; ++o)
          for (std::size_t i = 0; i < a.inner; ++i)
            xn->grad[(o * a.len + arg[o * a.inner + i]) * a.inner + i] +=
                self.grad[o * a.inner + i];
      },
      "max_axis");
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const std::size_t N = a.dim(0), A = a.dim(1), B = b.dim(1);
  if (b.dim(0) != N) {
    throw ShapeError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(N * (A + B));
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.data().data() + n * A, A, out.data() + n * (A + B));
    std::copy_n(b.data().data() + n * B, B, out.data() + n * (A + B) + A);
  }
  return Tensor<T>::make_result(
      Shape{N, A + B}, std::move(out), {a, b},
      [an = a.node_ptr(), bn = b.node_ptr(), N, A, B](Node<T>& self) {
        for (std::size_t n = 0; n < N; ++n) {
          const T* g = self.grad.data() + n * (A + B);
          if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < A; ++i) an->grad[n * A + i] += g[i];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < B; ++i) bn->grad[n * B + i] += g[A + i];
          }
        }
      },
      "concat_cols");
}

template <typename T>
Tensor<T> scale_last_axis(const Tensor<T>& x, const Tensor<T>& gate) {
  require_rank(x, 4, "scale_last_axis");
  require_rank(gate, 2, "scale_last_axis");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gate.dim(0) != N || gate.dim(1) != W) {
    throw ShapeError("scale_last_axis: gate " + shape_str(gate.shape()) +
                     " does not match input " + shape_str(x.shape()));
  }
  std::vector<T> out(x.numel());
  const T* xd = x.data().data();
  const T* gd = gate.data().data();
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t r = 0; r < C * H; ++r) {
      const std::size_t base = (n * C * H + r) * W;
      for (std::size_t w = 0; w < W; ++w) out[base + w] = xd[base + w] * gd[n * W + w];
    }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gate},
      [xn = x.node_ptr(), gn = gate.node_ptr(), N, C, H, W](Node<T>& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (gn->requires_grad) gn->ensure_grad();
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t r = 0; r < C * H; ++r) {
            const std::size_t base = (n * C * H + r) * W;
            for (std::size_t w = 0; w < W; ++w) {
              const T g = self.grad[base + w];
              if (xn->requires_grad) xn->grad[base + w] += g * gn->data[n * W + w];
              if (gn->requires_grad) gn->grad[n * W + w] += g * xn->data[base + w];
            }
          }
      },
      "scale_last_axis");
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  require_rank(x, 2, "softmax");
  const std::size_t N = x.dim(0), K = x.dim(1);
  std::vector<T> out(N * K);
  const T* xd = x.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    const T* r = xd + n * K;
    T m = r[0];
    for (std::size_t k = 1; k < K; ++k) m = std::max(m, r[k]);
    T s = 0;
    for (std::size_t k = 0; k < K; ++k) {
      out[n * K + k] = std::exp(r[k] - m);
      s += out[n * K + k];
    }
    for (std::size_t k = 0; k < K; ++k) out[n * K + k] /= s;
  }
  return Tensor<T>::make_result(
      x.shape(), out, {x},
      [xn = x.node_ptr(), y = out, N, K](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t n = 0; n < N; ++n) {
          const T* g = self.grad.data() + n * K;
          const T* p = y.data() + n * K;
          T dot = 0;
          for (std::size_t k = 0; k < K; ++k) dot += g[k] * p[k];
          for (std::size_t k = 0; k < K; ++k) xn->grad[n * K + k] += p[k] * (g[k] - dot);
        }
      },
      "softmax");
}

template <typename T>
Tensor<T> nll_loss(const Tensor<T>& probs, std::span<const int> targets) {
  require_rank(probs, 2, "nll_loss");
  const std::size_t N = probs.dim(0), K = probs.dim(1);
  if (targets.size() != N) {
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(N) + " rows");
  }
  if (N == 0) throw ShapeError("nll_loss: empty batch");
  std::vector<int> tgt(targets.begin(), targets.end());
  for (std::size_t n = 0; n < N; ++n) {
    if (tgt[n] < 0 || static_cast<std::size_t>(tgt[n]) >= K) {
      throw ValidationError("nll_loss: target " + std::to_string(tgt[n]) + " at row " +
                            std::to_string(n) + " outside [0," + std::to_string(K) + ")");
    }
  }
  // Guard log(0) when a float softmax saturates.
  constexpr T tiny = std::numeric_limits<T>::min();
  T acc = 0;
  const T* pd = probs.data().data();
  for (std::size_t n = 0; n < N; ++n) acc -= std::log(std::max(pd[n * K + tgt[n]], tiny));
  acc /= static_cast<T>(N);
  return Tensor<T>::make_result(
      Shape{}, {acc}, {probs},
      [pn = probs.node_ptr(), tgt = std::move(tgt), N, K, tiny](Node<T>& self) {
        pn->ensure_grad();
        const T g = self.grad[0] / static_cast<T>(N);
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t i = n * K + static_cast<std::size_t>(tgt[n]);
          pn->grad[i] -= g / std::max(pn->data[i], tiny);
        }
      },
      "nll_loss");
}

#define PREFNET_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale(const Tensor<T>&, T);                                          \
  template Tensor<T> sum(const Tensor<T>&);                                               \
  template Tensor<T> mean(const Tensor<T>&);                                              \
  template Tensor<T> relu(const Tensor<T>&);                                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                    \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, Conv2dParams);            \
  template Tensor<T> conv2d_per_sample(const Tensor<T>&, const Tensor<T>&, Conv2dParams); \
  template Tensor<T> avg_pool2d(const Tensor<T>&);                                        \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> max_axis(const Tensor<T>&, std::size_t);                             \
  template Tensor<T> concat_cols(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> scale_last_axis(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> softmax(const Tensor<T>&);                                           \
  template Tensor<T> nll_loss(const Tensor<T>&, std::span<const int>);

PREFNET_INSTANTIATE_OPS(float)
PREFNET_INSTANTIATE_OPS(double)

#undef PREFNET_INSTANTIATE_OPS

}  // namespace prefnet
