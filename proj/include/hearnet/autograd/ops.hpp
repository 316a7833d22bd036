// Copyright 2026 The HearNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "hearnet/autograd/var.hpp"

namespace hearnet::ag {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
Var<T> Constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

template <class T>
Var<T> Parameter(Tensor<T> t) {
  return Var<T>(std::move(t), true);
}

namespace detail {

inline Shape BroadcastShape(const Shape& a, const Shape& b) {
  const size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    const size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    Require(da == db || da == 1 || db == 1,
            "broadcast: incompatible shapes " + ShapeString(a) + " and " +
                ShapeString(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` viewed inside broadcast shape `out`; 0 on broadcast axes.
inline std::vector<size_t> BroadcastStrides(const Shape& s, const Shape& out) {
  std::vector<size_t> st(out.size(), 0);
  size_t stride = 1;
  for (size_t i = s.size(); i-- > 0;) {
    const size_t oi = i + out.size() - s.size();
    st[oi] = s[i] == 1 ? 0 : stride;
    stride *= s[i];
  }
  return st;
}

// Calls f(out_index, a_index, b_index) for every element of the broadcast.
template <class F>
void ForEachBroadcast(const Shape& out, const std::vector<size_t>& sa,
                      const std::vector<size_t>& sb, F&& f) {
  const size_t n = NumElements(out);
  if (n == 0) return;
  if (out.empty()) {
    f(0, 0, 0);
    return;
  }
  const size_t r = out.size();
  const size_t inner = out[r - 1];
  const size_t ia_step = sa[r - 1], ib_step = sb[r - 1];
  std::vector<size_t> idx(r, 0);
  size_t ia = 0, ib = 0;
  for (size_t o = 0; o < n; o += inner) {
    size_t a = ia, b = ib;
    for (size_t j = 0; j < inner; ++j, a += ia_step, b += ib_step)
      f(o + j, a, b);
    // Advance the odometer over all but the last axis.
    for (size_t d = r - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

// Elementwise binary op with numpy broadcasting. da/db give the partial
// derivatives of f with respect to each argument.
template <class T, class F, class DA, class DB>
Var<T> BinaryOp(const Var<T>& a, const Var<T>& b, F f, DA da, DB db) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) {
    Tensor<T> out(sa);
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i], pb[i]);
    return Var<T>::MakeResult(std::move(out), {a, b}, [da, db](Node<T>& n) {
      auto& A = *n.parents[0];
      auto& B = *n.parents[1];
      const T* g = n.grad.data();
      if (A.requires_grad) {
        T* ga = A.Grad().data();
        for (size_t i = 0; i < n.value.size(); ++i)
          ga[i] += g[i] * da(A.value[i], B.value[i]);
      }
      if (B.requires_grad) {
        T* gb = B.Grad().data();
        for (size_t i = 0; i < n.value.size(); ++i)
          gb[i] += g[i] * db(A.value[i], B.value[i]);
      }
    });
  }
  const Shape os = detail::BroadcastShape(sa, sb);
  const auto sta = detail::BroadcastStrides(sa, os);
  const auto stb = detail::BroadcastStrides(sb, os);
  Tensor<T> out(os);
  {
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    T* po = out.data();
    detail::ForEachBroadcast(os, sta, stb, [&](size_t o, size_t i, size_t j) {
      po[o] = f(pa[i], pb[j]);
    });
  }
  return Var<T>::MakeResult(
      std::move(out), {a, b}, [da, db, os, sta, stb](Node<T>& n) {
        auto& A = *n.parents[0];
        auto& B = *n.parents[1];
        const T* g = n.grad.data();
        const T* pa = A.value.data();
        const T* pb = B.value.data();
        if (A.requires_grad) {
          T* ga = A.Grad().data();
          detail::ForEachBroadcast(os, sta, stb,
                                   [&](size_t o, size_t i, size_t j) {
                                     ga[i] += g[o] * da(pa[i], pb[j]);
                                   });
        }
        if (B.requires_grad) {
          T* gb = B.Grad().data();
          detail::ForEachBroadcast(os, sta, stb,
                                   [&](size_t o, size_t i, size_t j) {
                                     gb[j] += g[o] * db(pa[i], pb[j]);
                                   });
        }
      });
}

// Elementwise unary op; d(x, y) is the derivative given input x and output y.
template <class T, class F, class D>
Var<T> UnaryOp(const Var<T>& a, F f, D d) {
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i]);
  return Var<T>::MakeResult(std::move(out), {a}, [d](Node<T>& n) {
    auto& A = *n.parents[0];
    T* ga = A.Grad().data();
    const T* g = n.grad.data();
    for (size_t i = 0; i < n.value.size(); ++i)
      ga[i] += g[i] * d(A.value[i], n.value[i]);
  });
}

template <class T>
Var<T> Add(const Var<T>& a, const Var<T>& b) {
  return BinaryOp(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{1}; });
}
template <class T>
Var<T> Sub(const Var<T>& a, const Var<T>& b) {
  return BinaryOp(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T{1}; },
      [](T, T) { return T{-1}; });
}
template <class T>
Var<T> Mul(const Var<T>& a, const Var<T>& b) {
  return BinaryOp(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}
template <class T>
Var<T> Div(const Var<T>& a, const Var<T>& b) {
  return BinaryOp(
      a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T{1} / y; },
      [](T x, T y) { return -x / (y * y); });
}

// max(0,x) + slope*min(0,x); slope broadcasts against x.
template <class T>
Var<T> PRelu(const Var<T>& x, const Var<T>& slope) {
  return BinaryOp(
      x, slope, [](T v, T s) { return v > 0 ? v : s * v; },
      [](T v, T s) { return v > 0 ? T{1} : s; },
      [](T v, T) { return v > 0 ? T{0} : v; });
}

template <class T>
Var<T> AddScalar(const Var<T>& a, T s) {
  return UnaryOp(
      a, [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}
template <class T>
Var<T> MulScalar(const Var<T>& a, T s) {
  return UnaryOp(
      a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}
template <class T>
Var<T> Neg(const Var<T>& a) {
  return MulScalar(a, T{-1});
}
template <class T>
Var<T> Square(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return x * x; }, [](T x, T) { return 2 * x; });
}
template <class T>
Var<T> Pow(const Var<T>& a, T p) {
  return UnaryOp(
      a, [p](T x) { return std::pow(x, p); },
      [p](T x, T) { return p * std::pow(x, p - 1); });
}
template <class T>
Var<T> Exp(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}
template <class T>
Var<T> Log(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}
template <class T>
Var<T> Sqrt(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return y > 0 ? T{0.5} / y : T{0}; });
}
template <class T>
Var<T> Abs(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > 0 ? T{1} : (x < 0 ? T{-1} : T{0}); });
}
template <class T>
Var<T> Relu(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return x > 0 ? x : T{0}; },
      [](T x, T) { return x > 0 ? T{1} : T{0}; });
}
// max(x, lo); zero gradient where clamped.
template <class T>
Var<T> ClampMin(const Var<T>& a, T lo) {
  return UnaryOp(
      a, [lo](T x) { return x > lo ? x : lo; },
      [lo](T x, T) { return x > lo ? T{1} : T{0}; });
}
template <class T>
Var<T> Clamp(const Var<T>& a, T lo, T hi) {
  return UnaryOp(
      a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x > lo && x < hi) ? T{1} : T{0}; });
}
template <class T>
Var<T> Sigmoid(const Var<T>& a) {
  return UnaryOp(
      a,
      [](T x) {
        return x >= 0 ? T{1} / (T{1} + std::exp(-x))
                      : std::exp(x) / (T{1} + std::exp(x));
      },
      [](T, T y) { return y * (T{1} - y); });
}
template <class T>
Var<T> Tanh(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}
template <class T>
Var<T> Silu(const Var<T>& a) {
  return UnaryOp(
      a, [](T x) { return x / (T{1} + std::exp(-x)); },
      [](T x, T) {
        const T s = T{1} / (T{1} + std::exp(-x));
        return s * (T{1} + x * (T{1} - s));
      });
}
// Exact (erf) GELU.
template <class T>
Var<T> Gelu(const Var<T>& a) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return UnaryOp(
      a, [](T x) { return T{0.5} * x * (T{1} + std::erf(x * kInvSqrt2)); },
      [](T x, T) {
        return T{0.5} * (T{1} + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(T{-0.5} * x * x);
      });
}

template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return Add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return Sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return Mul(a, b); }
template <class T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) { return Div(a, b); }
template <class T>
Var<T> operator+(const Var<T>& a, T s) { return AddScalar(a, s); }
template <class T>
Var<T> operator-(const Var<T>& a, T s) { return AddScalar(a, -s); }
template <class T>
Var<T> operator*(const Var<T>& a, T s) { return MulScalar(a, s); }
template <class T>
Var<T> operator*(T s, const Var<T>& a) { return MulScalar(a, s); }

// ---------------------------------------------------------------------------
// Shape manipulation.

template <class T>
Var<T> Reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().Reshaped(std::move(s));
  return Var<T>::MakeResult(std::move(out), {a}, [](Node<T>& n) {
    T* ga = n.parents[0]->Grad().data();
    for (size_t i = 0; i < n.grad.size(); ++i) ga[i] += n.grad[i];
  });
}

namespace detail {
// Gathers src (shape `s`) permuted by `perm` into dst; if `scatter`, the
// mapping runs the other way and accumulates.
template <class T>
void PermuteCopy(const T* src, T* dst, const Shape& s,
                 const std::vector<size_t>& perm, bool scatter) {
  const size_t r = s.size();
  std::vector<size_t> in_strides(r);
  size_t st = 1;
  for (size_t i = r; i-- > 0;) {
    in_strides[i] = st;
    st *= s[i];
  }
  Shape os(r);
  std::vector<size_t> ps(r);
  for (size_t i = 0; i < r; ++i) {
    os[i] = s[perm[i]];
    ps[i] = in_strides[perm[i]];
  }
  const std::vector<size_t> zero(r, 0);
  std::vector<size_t> unit(r);
  st = 1;
  for (size_t i = r; i-- > 0;) {
    unit[i] = st;
    st *= os[i];
  }
  ForEachBroadcast(os, ps, unit, [&](size_t, size_t i, size_t o) {
    if (scatter)
      dst[i] += src[o];
    else
      dst[o] = src[i];
  });
}
}  // namespace detail

template <class T>
Var<T> Permute(const Var<T>& a, std::vector<size_t> perm) {
  const Shape& s = a.shape();
  Require(perm.size() == s.size(), "Permute: rank mismatch");
  Shape os(s.size());
  for (size_t i = 0; i < s.size(); ++i) os[i] = s.at(perm[i]);
  Tensor<T> out(os);
  detail::PermuteCopy(a.value().data(), out.data(), s, perm, false);
  return Var<T>::MakeResult(std::move(out), {a}, [perm, s](Node<T>& n) {
    detail::PermuteCopy(n.grad.data(), n.parents[0]->Grad().data(), s, perm,
                        true);
  });
}

// a[..., start:start+len, ...] along `axis`.
template <class T>
Var<T> Slice(const Var<T>& a, size_t axis, size_t start, size_t len) {
  const Shape& s = a.shape();
  Require(axis < s.size() && start + len <= s[axis], "Slice: out of range");
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const size_t ax = s[axis];
  Shape os = s;
  os[axis] = len;
  Tensor<T> out(os);
  const T* src = a.value().data();
  for (size_t o = 0; o < outer; ++o)
    std::copy_n(src + (o * ax + start) * inner, len * inner,
                out.data() + o * len * inner);
  return Var<T>::MakeResult(
      std::move(out), {a}, [outer, inner, ax, start, len](Node<T>& n) {
        T* g = n.parents[0]->Grad().data();
        for (size_t o = 0; o < outer; ++o) {
          T* dst = g + (o * ax + start) * inner;
          const T* src = n.grad.data() + o * len * inner;
          for (size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      });
}

template <class T>
Var<T> Concat(const std::vector<Var<T>>& xs, size_t axis) {
  Require(!xs.empty(), "Concat: no inputs");
  Shape os = xs[0].shape();
  Require(axis < os.size(), "Concat: axis out of range");
  size_t total = 0;
  for (const auto& x : xs) {
    Shape s = x.shape();
    Require(s.size() == os.size(), "Concat: rank mismatch");
    total += s[axis];
    s[axis] = os[axis];
    Require(s == os, "Concat: shape mismatch " + ShapeString(x.shape()));
  }
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= os[i];
  for (size_t i = axis + 1; i < os.size(); ++i) inner *= os[i];
  os[axis] = total;
  Tensor<T> out(os);
  std::vector<size_t> widths;
  size_t off = 0;
  for (const auto& x : xs) {
    const size_t w = x.shape()[axis] * inner;
    widths.push_back(w);
    for (size_t o = 0; o < outer; ++o)
      std::copy_n(x.value().data() + o * w, w,
                  out.data() + o * total * inner + off);
    off += w;
  }
  return Var<T>::MakeResult(
      std::move(out), xs, [outer, inner, total, widths](Node<T>& n) {
        size_t off = 0;
        for (size_t k = 0; k < widths.size(); ++k) {
          auto& P = *n.parents[k];
          const size_t w = widths[k];
          if (P.requires_grad) {
            T* g = P.Grad().data();
            for (size_t o = 0; o < outer; ++o) {
              const T* src = n.grad.data() + o * total * inner + off;
              for (size_t i = 0; i < w; ++i) g[o * w + i] += src[i];
            }
          }
          off += w;
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions.

template <class T>
Var<T> Sum(const Var<T>& a) {
  T s = 0;
  for (T v : a.value().vec()) s += v;
  return Var<T>::MakeResult(Tensor<T>::Scalar(s), {a}, [](Node<T>& n) {
    T* g = n.parents[0]->Grad().data();
    const T gv = n.grad[0];
    for (size_t i = 0; i < n.parents[0]->value.size(); ++i) g[i] += gv;
  });
}

template <class T>
Var<T> Mean(const Var<T>& a) {
  return MulScalar(Sum(a), T{1} / static_cast<T>(a.size()));
}

// Sum over `axis`, keeping it with extent 1.
template <class T>
Var<T> SumAxis(const Var<T>& a, size_t axis) {
  const Shape& s = a.shape();
  Require(axis < s.size(), "SumAxis: axis out of range");
  size_t outer = 1, inner = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const size_t ax = s[axis];
  Shape os = s;
  os[axis] = 1;
  Tensor<T> out(os);
  const T* src = a.value().data();
  for (size_t o = 0; o < outer; ++o)
    for (size_t k = 0; k < ax; ++k)
      for (size_t i = 0; i < inner; ++i)
        out[o * inner + i] += src[(o * ax + k) * inner + i];
  return Var<T>::MakeResult(std::move(out), {a}, [outer, inner, ax](Node<T>& n) {
    T* g = n.parents[0]->Grad().data();
    for (size_t o = 0; o < outer; ++o)
      for (size_t k = 0; k < ax; ++k)
        for (size_t i = 0; i < inner; ++i)
          g[(o * ax + k) * inner + i] += n.grad[o * inner + i];
  });
}

// Frobenius norm sqrt(sum a^2); gradient a / norm, taken as zero at 0.
template <class T>
Var<T> Norm(const Var<T>& a) {
  double acc = 0;
  for (size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a.value()[i]) * a.value()[i];
  const T nrm = static_cast<T>(std::sqrt(acc));
  return Var<T>::MakeResult(Tensor<T>::Scalar(nrm), {a}, [nrm](Node<T>& n) {
    if (nrm <= 0) return;
    T* g = n.parents[0]->Grad().data();
    const T* p = n.parents[0]->value.data();
    const T s = n.grad[0] / nrm;
    for (size_t i = 0; i < n.parents[0]->value.size(); ++i) g[i] += s * p[i];
  });
}

template <class T>
Var<T> MeanAxis(const Var<T>& a, size_t axis) {
  return MulScalar(SumAxis(a, axis), T{1} / static_cast<T>(a.shape().at(axis)));
}

// ---------------------------------------------------------------------------
// Linear algebra.

// op(a) @ op(b). `b` may be rank 2 and shared across a's leading axes, or
// both operands share identical leading batch axes.
template <class T>
Var<T> MatMul(const Var<T>& a, const Var<T>& b, bool ta = false,
              bool tb = false) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Require(sa.size() >= 2 && sb.size() >= 2, "MatMul: rank < 2");
  size_t batch = 1;
  bool shared_b = sb.size() == 2;
  size_t ar, ac;
  Shape os;
  if (shared_b && !ta) {
    // Fold a's leading axes into rows.
    ac = sa.back();
    ar = a.size() / ac;
    os = Shape(sa.begin(), sa.end() - 1);
  } else {
    Require(sa.size() == sb.size(), "MatMul: batch rank mismatch");
    for (size_t i = 0; i + 2 < sa.size(); ++i) {
      Require(sa[i] == sb[i], "MatMul: batch shape mismatch");
      batch *= sa[i];
    }
    ar = sa[sa.size() - 2];
    ac = sa.back();
    os = Shape(sa.begin(), sa.end() - 2);
    os.push_back(ta ? ac : ar);
    shared_b = false;
  }
  const size_t br = sb[sb.size() - 2], bc = sb.back();
  const size_t m = ta ? ac : ar;
  const size_t k = ta ? ar : ac;
  const size_t kb = tb ? bc : br;
  const size_t nn = tb ? br : bc;
  Require(k == kb, "MatMul: inner dimension mismatch " + ShapeString(sa) +
                       " x " + ShapeString(sb));
  os.push_back(nn);
  Tensor<T> out(os);
  const size_t a_step = ar * ac, b_step = shared_b ? 0 : br * bc,
               o_step = m * nn;
  for (size_t bi = 0; bi < batch; ++bi) {
    ConstMatMap<T> A(a.value().data() + bi * a_step, ar, ac);
    ConstMatMap<T> B(b.value().data() + bi * b_step, br, bc);
    MatMap<T> C(out.data() + bi * o_step, m, nn);
    if (!ta && !tb)
      C.noalias() = A * B;
    else if (ta && !tb)
      C.noalias() = A.transpose() * B;
    else if (!ta && tb)
      C.noalias() = A * B.transpose();
    else
      C.noalias() = A.transpose() * B.transpose();
  }
  return Var<T>::MakeResult(
      std::move(out), {a, b},
      [=](Node<T>& n) {
        auto& Pa = *n.parents[0];
        auto& Pb = *n.parents[1];
        for (size_t bi = 0; bi < batch; ++bi) {
          ConstMatMap<T> A(Pa.value.data() + bi * a_step, ar, ac);
          ConstMatMap<T> B(Pb.value.data() + bi * b_step, br, bc);
          ConstMatMap<T> G(n.grad.data() + bi * o_step, m, nn);
          if (Pa.requires_grad) {
            MatMap<T> GA(Pa.Grad().data() + bi * a_step, ar, ac);
            // d op(A) = G op(B)^T
            if (!ta && !tb)
              GA.noalias() += G * B.transpose();
            else if (!ta && tb)
              GA.noalias() += G * B;
            else if (ta && !tb)
              GA.noalias() += B * G.transpose();
            else
              GA.noalias() += B.transpose() * G.transpose();
          }
          if (Pb.requires_grad) {
            MatMap<T> GB(Pb.Grad().data() + bi * b_step, br, bc);
            // d op(B) = op(A)^T G
            if (!ta && !tb)
              GB.noalias() += A.transpose() * G;
            else if (ta && !tb)
              GB.noalias() += A * G;
            else if (!ta && tb)
              GB.noalias() += G.transpose() * A;
            else
              GB.noalias() += G.transpose() * A.transpose();
          }
        }
      });
}

// x[..., in] @ w[in, out] + bias[out].
template <class T>
Var<T> Linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  Var<T> y = MatMul(x, w);
  return bias.defined() ? Add(y, bias) : y;
}

// ---------------------------------------------------------------------------
// Normalization and attention primitives.

// (x - mean) / sqrt(var + eps) over the last axis.
template <class T>
Var<T> NormalizeLastDim(const Var<T>& x, T eps) {
  const size_t d = x.shape().back();
  const size_t rows = x.size() / d;
  Tensor<T> out(x.shape());
  std::vector<T> inv_std(rows);
  const T* px = x.value().data();
  for (size_t r = 0; r < rows; ++r) {
    const T* row = px + r * d;
    T mean = 0;
    for (size_t i = 0; i < d; ++i) mean += row[i];
    mean /= static_cast<T>(d);
    T var = 0;
    for (size_t i = 0; i < d; ++i) var += (row[i] - mean) * (row[i] - mean);
    var /= static_cast<T>(d);
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[r] = is;
    for (size_t i = 0; i < d; ++i) out[r * d + i] = (row[i] - mean) * is;
  }
  return Var<T>::MakeResult(std::move(out), {x}, [d, rows, inv_std](Node<T>& n) {
    T* g = n.parents[0]->Grad().data();
    for (size_t r = 0; r < rows; ++r) {
      const T* gy = n.grad.data() + r * d;
      const T* y = n.value.data() + r * d;
      T mg = 0, mgy = 0;
      for (size_t i = 0; i < d; ++i) {
        mg += gy[i];
        mgy += gy[i] * y[i];
      }
      mg /= static_cast<T>(d);
      mgy /= static_cast<T>(d);
      for (size_t i = 0; i < d; ++i)
        g[r * d + i] += inv_std[r] * (gy[i] - mg - y[i] * mgy);
    }
  });
}

// Softmax over the last axis of [..., L, L] scores. With `causal`, entry
// (i, j) with j > i is excluded and yields exactly zero.
template <class T>
Var<T> Softmax(const Var<T>& x, bool causal = false) {
  const Shape& s = x.shape();
  const size_t d = s.back();
  const size_t rows = x.size() / d;
  const size_t lq = s.size() >= 2 ? s[s.size() - 2] : 1;
  if (causal) Require(lq == d, "Softmax: causal mask needs square scores");
  Tensor<T> out(s);
  const T* px = x.value().data();
  for (size_t r = 0; r < rows; ++r) {
    const size_t valid = causal ? (r % lq) + 1 : d;
    const T* row = px + r * d;
    T* o = out.data() + r * d;
    T mx = -std::numeric_limits<T>::infinity();
    for (size_t i = 0; i < valid; ++i) mx = std::max(mx, row[i]);
    T sum = 0;
    for (size_t i = 0; i < valid; ++i) sum += (o[i] = std::exp(row[i] - mx));
    for (size_t i = 0; i < valid; ++i) o[i] /= sum;
  }
  return Var<T>::MakeResult(std::move(out), {x}, [d, rows, lq, causal](Node<T>& n) {
    T* g = n.parents[0]->Grad().data();
    for (size_t r = 0; r < rows; ++r) {
      const size_t valid = causal ? (r % lq) + 1 : d;
      const T* y = n.value.data() + r * d;
      const T* gy = n.grad.data() + r * d;
      T dot = 0;
      for (size_t i = 0; i < valid; ++i) dot += y[i] * gy[i];
      for (size_t i = 0; i < valid; ++i) g[r * d + i] += y[i] * (gy[i] - dot);
    }
  });
}


// For x [C, T, F]: normalizes each frame t over its (C, F) entries. Frames are
// independent of each other, which keeps time-causal networks causal.
template <class T>
Var<T> NormalizeFrames(const Var<T>& x, T eps) {
  Require(x.rank() == 3, "NormalizeFrames: expects [C, T, F]");
  const size_t C = x.dim(0), Tn = x.dim(1), F = x.dim(2);
  const T cnt = static_cast<T>(C * F);
  Tensor<T> out(x.shape());
  std::vector<T> inv_std(Tn);
  const T* px = x.value().data();
  for (size_t t = 0; t < Tn; ++t) {
    T mean = 0;
    for (size_t c = 0; c < C; ++c)
      for (size_t f = 0; f < F; ++f) mean += px[(c * Tn + t) * F + f];
    mean /= cnt;
    T var = 0;
    for (size_t c = 0; c < C; ++c)
      for (size_t f = 0; f < F; ++f) {
        const T d = px[(c * Tn + t) * F + f] - mean;
        var += d * d;
      }
    var /= cnt;
    const T is = T{1} / std::sqrt(var + eps);
    inv_std[t] = is;
    for (size_t c = 0; c < C; ++c)
      for (size_t f = 0; f < F; ++f) {
        const size_t i = (c * Tn + t) * F + f;
        out[i] = (px[i] - mean) * is;
      }
  }
  return Var<T>::MakeResult(std::move(out), {x}, [=](Node<T>& n) {
    T* g = n.parents[0]->Grad().data();
    for (size_t t = 0; t < Tn; ++t) {
      T mg = 0, mgy = 0;
      for (size_t c = 0; c < C; ++c)
        for (size_t f = 0; f < F; ++f) {
          const size_t i = (c * Tn + t) * F + f;
          mg += n.grad[i];
          mgy += n.grad[i] * n.value[i];
        }
      mg /= cnt;
      mgy /= cnt;
      for (size_t c = 0; c < C; ++c)
        for (size_t f = 0; f < F; ++f) {
          const size_t i = (c * Tn + t) * F + f;
          g[i] += inv_std[t] * (n.grad[i] - mg - n.value[i] * mgy);
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions.

struct Conv2dGeometry {
  size_t stride_h = 1, stride_w = 1;
  size_t dilation_h = 1, dilation_w = 1;
  size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
};

namespace detail {
// Output columns [lo, hi) whose input column for kernel tap j is in range.
inline std::pair<size_t, size_t> ValidRange(size_t wo, size_t w, size_t j,
                                            const Conv2dGeometry& g) {
  const long off = static_cast<long>(j * g.dilation_w) - static_cast<long>(g.pad_left);
  const long sw = static_cast<long>(g.stride_w);
  long lo = off >= 0 ? 0 : (-off + sw - 1) / sw;
  long hi = static_cast<long>(w) - off <= 0 ? 0 : (static_cast<long>(w) - off + sw - 1) / sw;
  lo = std::min<long>(lo, static_cast<long>(wo));
  hi = std::clamp<long>(hi, lo, static_cast<long>(wo));
  return {static_cast<size_t>(lo), static_cast<size_t>(hi)};
}

template <class T>
void Im2Col(const T* x, size_t cin, size_t h, size_t w, size_t kh, size_t kw,
            size_t ho, size_t wo, const Conv2dGeometry& g, T* cols) {
  for (size_t c = 0; c < cin; ++c)
    for (size_t i = 0; i < kh; ++i)
      for (size_t j = 0; j < kw; ++j) {
        T* row = cols + ((c * kh + i) * kw + j) * ho * wo;
        for (size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride_h + i * g.dilation_h) -
                          static_cast<long>(g.pad_top);
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<long>(h)) {
            std::fill_n(dst, wo, T{0});
            continue;
          }
          const T* src = x + (c * h + iy) * w;
          const auto [lo, hi] = ValidRange(wo, w, j, g);
          std::fill_n(dst, lo, T{0});
          const long off = static_cast<long>(j * g.dilation_w) - static_cast<long>(g.pad_left);
          if (g.stride_w == 1) {
            std::copy_n(src + (static_cast<long>(lo) + off), hi - lo, dst + lo);
          } else {
            for (size_t ox = lo; ox < hi; ++ox)
              dst[ox] = src[static_cast<long>(ox * g.stride_w) + off];
          }
          std::fill(dst + hi, dst + wo, T{0});
        }
      }
}

template <class T>
void Col2Im(const T* cols, size_t cin, size_t h, size_t w, size_t kh, size_t kw,
            size_t ho, size_t wo, const Conv2dGeometry& g, T* x) {
  for (size_t c = 0; c < cin; ++c)
    for (size_t i = 0; i < kh; ++i)
      for (size_t j = 0; j < kw; ++j) {
        const T* row = cols + ((c * kh + i) * kw + j) * ho * wo;
        for (size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride_h + i * g.dilation_h) -
                          static_cast<long>(g.pad_top);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          T* dst = x + (c * h + iy) * w;
          const T* src = row + oy * wo;
          const auto [lo, hi] = ValidRange(wo, w, j, g);
          const long off = static_cast<long>(j * g.dilation_w) - static_cast<long>(g.pad_left);
          for (size_t ox = lo; ox < hi; ++ox)
            dst[static_cast<long>(ox * g.stride_w) + off] += src[ox];
        }
      }
}
}  // namespace detail

// x [Cin, H, W] (*) w [Cout, Cin, kh, kw] + bias [Cout] -> [Cout, Ho, Wo].
template <class T>
Var<T> Conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
              const Conv2dGeometry& g) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  Require(sx.size() == 3 && sw.size() == 4, "Conv2d: expects [C,H,W] input");
  Require(sx[0] == sw[1], "Conv2d: channel mismatch " + ShapeString(sx) +
                              " vs weight " + ShapeString(sw));
  const size_t cin = sx[0], h = sx[1], wd = sx[2];
  const size_t cout = sw[0], kh = sw[2], kw = sw[3];
  const long eh = static_cast<long>(h + g.pad_top + g.pad_bottom) -
                  static_cast<long>(g.dilation_h * (kh - 1) + 1);
  const long ew = static_cast<long>(wd + g.pad_left + g.pad_right) -
                  static_cast<long>(g.dilation_w * (kw - 1) + 1);
  Require(eh >= 0 && ew >= 0, "Conv2d: kernel larger than padded input");
  const size_t ho = static_cast<size_t>(eh) / g.stride_h + 1;
  const size_t wo = static_cast<size_t>(ew) / g.stride_w + 1;
  const size_t kdim = cin * kh * kw, npos = ho * wo;
  std::vector<T> cols(kdim * npos);
  detail::Im2Col(x.value().data(), cin, h, wd, kh, kw, ho, wo, g, cols.data());
  Tensor<T> out(Shape{cout, ho, wo});
  {
    ConstMatMap<T> W(w.value().data(), cout, kdim);
    ConstMatMap<T> C(cols.data(), kdim, npos);
    MatMap<T> Y(out.data(), cout, npos);
    Y.noalias() = W * C;
    if (bias.defined())
      for (size_t c = 0; c < cout; ++c) Y.row(c).array() += bias.value()[c];
  }
  std::vector<Var<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return Var<T>::MakeResult(std::move(out), parents, [=](Node<T>& n) {
    auto& X = *n.parents[0];
    auto& Wn = *n.parents[1];
    ConstMatMap<T> G(n.grad.data(), cout, npos);
    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
      T* gb = n.parents[2]->Grad().data();
      for (size_t c = 0; c < cout; ++c) gb[c] += G.row(c).sum();
    }
    // Columns are recomputed instead of kept alive through the graph.
    std::vector<T> cols2(kdim * npos);
    if (Wn.requires_grad) {
      detail::Im2Col(X.value.data(), cin, h, wd, kh, kw, ho, wo, g,
                     cols2.data());
      ConstMatMap<T> C(cols2.data(), kdim, npos);
      MatMap<T> GW(Wn.Grad().data(), cout, kdim);
      GW.noalias() += G * C.transpose();
    }
    if (X.requires_grad) {
      ConstMatMap<T> W(Wn.value.data(), cout, kdim);
      MatMap<T> GC(cols2.data(), kdim, npos);
      GC.noalias() = W.transpose() * G;
      detail::Col2Im(cols2.data(), cin, h, wd, kh, kw, ho, wo, g,
                     X.Grad().data());
    }
  });
}

// Depthwise 1-D convolution along the sequence axis of x [B, L, C] with
// per-channel kernels w [C, k]. Output length L + pad_left + pad_right - k + 1.
template <class T>
Var<T> DepthwiseConv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias,
                       size_t pad_left, size_t pad_right) {
  const Shape& s = x.shape();
  Require(s.size() == 3 && w.rank() == 2 && w.dim(0) == s[2],
          "DepthwiseConv1d: expects x [B,L,C], w [C,k]");
  const size_t B = s[0], L = s[1], C = s[2], k = w.dim(1);
  Require(L + pad_left + pad_right >= k, "DepthwiseConv1d: input too short");
  const size_t lo = L + pad_left + pad_right - k + 1;
  Tensor<T> out(Shape{B, lo, C});
  const T* px = x.value().data();
  const T* pw = w.value().data();
  for (size_t b = 0; b < B; ++b)
    for (size_t t = 0; t < lo; ++t) {
      T* o = out.data() + (b * lo + t) * C;
      if (bias.defined())
        for (size_t c = 0; c < C; ++c) o[c] = bias.value()[c];
      for (size_t j = 0; j < k; ++j) {
        const long it = static_cast<long>(t + j) - static_cast<long>(pad_left);
        if (it < 0 || it >= static_cast<long>(L)) continue;
        const T* xi = px + (b * L + it) * C;
        for (size_t c = 0; c < C; ++c) o[c] += pw[c * k + j] * xi[c];
      }
    }
  std::vector<Var<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  return Var<T>::MakeResult(std::move(out), parents, [=](Node<T>& n) {
    auto& X = *n.parents[0];
    auto& Wn = *n.parents[1];
    T* gx = X.requires_grad ? X.Grad().data() : nullptr;
    T* gw = Wn.requires_grad ? Wn.Grad().data() : nullptr;
    T* gb = (n.parents.size() > 2 && n.parents[2]->requires_grad)
                ? n.parents[2]->Grad().data()
                : nullptr;
    for (size_t b = 0; b < B; ++b)
      for (size_t t = 0; t < lo; ++t) {
        const T* g = n.grad.data() + (b * lo + t) * C;
        if (gb)
          for (size_t c = 0; c < C; ++c) gb[c] += g[c];
        for (size_t j = 0; j < k; ++j) {
          const long it = static_cast<long>(t + j) - static_cast<long>(pad_left);
          if (it < 0 || it >= static_cast<long>(L)) continue;
          const size_t off = (b * L + it) * C;
          for (size_t c = 0; c < C; ++c) {
            if (gw) gw[c * k + j] += g[c] * X.value[off + c];
            if (gx) gx[off + c] += g[c] * Wn.value[c * k + j];
          }
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Complex helpers on stacked [2, ...] (real, imag) tensors.

// sqrt(re^2 + im^2) -> [...]; gradient taken as zero where the magnitude is 0.
template <class T>
Var<T> Magnitude(const Var<T>& z) {
  Require(z.rank() >= 1 && z.dim(0) == 2, "Magnitude: expects [2, ...]");
  const size_t n = z.size() / 2;
  Shape os(z.shape().begin() + 1, z.shape().end());
  Tensor<T> out(os);
  const T* p = z.value().data();
  for (size_t i = 0; i < n; ++i) out[i] = std::hypot(p[i], p[n + i]);
  return Var<T>::MakeResult(std::move(out), {z}, [n](Node<T>& nd) {
    T* g = nd.parents[0]->Grad().data();
    const T* p = nd.parents[0]->value.data();
    for (size_t i = 0; i < n; ++i) {
      const T m = nd.value[i];
      if (m > 0) {
        g[i] += nd.grad[i] * p[i] / m;
        g[n + i] += nd.grad[i] * p[n + i] / m;
      }
    }
  });
}

// (re, im) -> (cos phi, sin phi) with phi = atan2(im, re); (0,0) maps to (1,0).
template <class T>
Var<T> UnitPhasor(const Var<T>& z) {
  Require(z.rank() >= 1 && z.dim(0) == 2, "UnitPhasor: expects [2, ...]");
  const size_t n = z.size() / 2;
  Tensor<T> out(z.shape());
  const T* p = z.value().data();
  for (size_t i = 0; i < n; ++i) {
    const T m = std::hypot(p[i], p[n + i]);
    if (m > 0) {
      out[i] = p[i] / m;
      out[n + i] = p[n + i] / m;
    } else {
      out[i] = 1;
      out[n + i] = 0;
    }
  }
  return Var<T>::MakeResult(std::move(out), {z}, [n](Node<T>& nd) {
    T* g = nd.parents[0]->Grad().data();
    const T* p = nd.parents[0]->value.data();
    for (size_t i = 0; i < n; ++i) {
      const T m = std::hypot(p[i], p[n + i]);
      if (m <= 0) continue;
      const T c = nd.value[i], s = nd.value[n + i];
      const T gc = nd.grad[i], gs = nd.grad[n + i];
      // d(c,s)/d(re,im) = (1/m) [[s^2, -cs], [-cs, c^2]]
      g[i] += (gc * s * s - gs * c * s) / m;
      g[n + i] += (-gc * c * s + gs * c * c) / m;
    }
  });
}

}  // namespace hearnet::ag
