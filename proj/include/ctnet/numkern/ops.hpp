// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <string>

#include "ctnet/numkern/tensor.hpp"

namespace ctnet {

// ---------------------------------------------------------------------------
// Span kernels. Every reduction runs in ascending index order starting from
// 0.0, so results are bit-reproducible for identical inputs.
// ---------------------------------------------------------------------------

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail

/// y = W x (y is overwritten).
inline void matvec(const Tensor2D& w, std::span<const double> x, std::span<double> y) {
  detail::require(w.cols() == x.size() && w.rows() == y.size(),
                  "matvec: W" + w.shape_string() + " x[" + std::to_string(x.size()) + "] -> y[" +
                      std::to_string(y.size()) + "]");
  const std::size_t n = w.cols();
  const double* wp = w.data().data();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    const double* wr = wp + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
}

/// dx += W^T dy.
inline void matvec_transposed_accum(const Tensor2D& w, std::span<const double> dy,
                                    std::span<double> dx) {
  detail::require(w.rows() == dy.size() && w.cols() == dx.size(),
                  "matvec_transposed_accum: W" + w.shape_string());
  const std::size_t n = w.cols();
  const double* wp = w.data().data();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double d = dy[i];
    if (d == 0.0) continue;
    const double* wr = wp + i * n;
    for (std::size_t j = 0; j < n; ++j) dx[j] += wr[j] * d;
  }
}

/// G += dy x^T.
inline void outer_accum(Tensor2D& g, std::span<const double> dy, std::span<const double> x) {
  detail::require(g.rows() == dy.size() && g.cols() == x.size(), "outer_accum: G" + g.shape_string());
  const std::size_t n = g.cols();
  double* gp = g.data().data();
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double d = dy[i];
    if (d == 0.0) continue;
    double* gr = gp + i * n;
    for (std::size_t j = 0; j < n; ++j) gr[j] += d * x[j];
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// ---------------------------------------------------------------------------
// Tensor-level operations.
// ---------------------------------------------------------------------------

inline Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " + b.shape_string());
  }
  Tensor2D out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

inline Tensor2D relu(const Tensor2D& x) {
  Tensor2D out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = relu(x.data()[i]);
  return out;
}

/// Passes upstream where x > 0; the subgradient at exactly 0 is 0.
inline Tensor2D relu_backward(const Tensor2D& x, const Tensor2D& upstream) {
  if (!x.same_shape(upstream)) {
    throw DimensionError("relu_backward: " + x.shape_string() + " vs " + upstream.shape_string());
  }
  Tensor2D out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.data()[i] = x.data()[i] > 0.0 ? upstream.data()[i] : 0.0;
  }
  return out;
}

inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) noexcept {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

struct BceResult {
  double loss;
  double dloss_dlogit;
};

inline BceResult bce_with_logits(double logit, int label) {
  if (label != 0 && label != 1) throw std::invalid_argument("bce_with_logits: label must be 0 or 1");
  return {softplus(logit) - static_cast<double>(label) * logit, sigmoid(logit) - static_cast<double>(label)};
}

// ---------------------------------------------------------------------------
// Adapters. g(z) = (U1 z) * sigmoid(U2 z) for the gated kind, g(z) = U z for
// the linear kind. Neither carries a bias, so U1 = 0 (or U = 0) yields exact
// zeros.
// ---------------------------------------------------------------------------

/// Scratch for the span-level GLU: a = U1 z, s = sigmoid(U2 z).
struct GluTrace {
  std::vector<double> a;
  std::vector<double> s;
};

inline void glu_forward(const Tensor2D& u1, const Tensor2D& u2, std::span<const double> z,
                        std::span<double> out, GluTrace& trace) {
  detail::require(u1.rows() == u2.rows() && u1.cols() == u2.cols() && u1.cols() == z.size() &&
                      out.size() == u1.rows(),
                  "glu_forward: U1" + u1.shape_string() + " U2" + u2.shape_string() + " z[" +
                      std::to_string(z.size()) + "]");
  trace.a.assign(u1.rows(), 0.0);
  trace.s.assign(u1.rows(), 0.0);
  matvec(u1, z, trace.a);
  matvec(u2, z, trace.s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    trace.s[i] = sigmoid(trace.s[i]);
    out[i] = trace.a[i] * trace.s[i];
  }
}

/// Accumulates into grad_u1, grad_u2 and (when non-empty) grad_z.
inline void glu_backward(const Tensor2D& u1, const Tensor2D& u2, std::span<const double> z,
                         const GluTrace& trace, std::span<const double> upstream, Tensor2D& grad_u1,
                         Tensor2D& grad_u2, std::span<double> grad_z) {
  detail::require(upstream.size() == u1.rows(), "glu_backward: upstream length");
  std::vector<double> da(u1.rows());
  std::vector<double> db(u1.rows());
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double s = trace.s[i];
    da[i] = upstream[i] * s;
    db[i] = upstream[i] * trace.a[i] * s * (1.0 - s);
  }
  outer_accum(grad_u1, da, z);
  outer_accum(grad_u2, db, z);
  if (!grad_z.empty()) {
    matvec_transposed_accum(u1, da, grad_z);
    matvec_transposed_accum(u2, db, grad_z);
  }
}

inline Tensor2D glu_forward(const Tensor2D& u1, const Tensor2D& u2, const Tensor2D& z) {
  if (z.cols() != 1) throw DimensionError("glu_forward: z must be a column, got " + z.shape_string());
  Tensor2D out(u1.rows(), 1);
  GluTrace trace;
  glu_forward(u1, u2, z.data(), out.data(), trace);
  return out;
}

struct GluGrads {
  Tensor2D grad_u1;
  Tensor2D grad_u2;
  Tensor2D grad_z;
};

inline GluGrads glu_backward(const Tensor2D& u1, const Tensor2D& u2, const Tensor2D& z,
                             const Tensor2D& upstream) {
  if (z.cols() != 1 || upstream.cols() != 1) throw DimensionError("glu_backward: column vectors expected");
  GluTrace trace;
  Tensor2D scratch(u1.rows(), 1);
  glu_forward(u1, u2, z.data(), scratch.data(), trace);
  GluGrads g{Tensor2D(u1.rows(), u1.cols()), Tensor2D(u2.rows(), u2.cols()), Tensor2D(z.rows(), 1)};
  glu_backward(u1, u2, z.data(), trace, upstream.data(), g.grad_u1, g.grad_u2, g.grad_z.data());
  return g;
}

inline Tensor2D linear_adapter_forward(const Tensor2D& u, const Tensor2D& z) {
  if (z.cols() != 1) throw DimensionError("linear_adapter_forward: z must be a column");
  Tensor2D out(u.rows(), 1);
  matvec(u, z.data(), out.data());
  return out;
}

struct LinearAdapterGrads {
  Tensor2D grad_u;
  Tensor2D grad_z;
};

inline LinearAdapterGrads linear_adapter_backward(const Tensor2D& u, const Tensor2D& z,
                                                  const Tensor2D& upstream) {
  if (z.cols() != 1 || upstream.cols() != 1 || upstream.rows() != u.rows() || z.rows() != u.cols()) {
    throw DimensionError("linear_adapter_backward: U" + u.shape_string() + " z" + z.shape_string() +
                         " upstream" + upstream.shape_string());
  }
  LinearAdapterGrads g{Tensor2D(u.rows(), u.cols()), Tensor2D(z.rows(), 1)};
  outer_accum(g.grad_u, upstream.data(), z.data());
  matvec_transposed_accum(u, upstream.data(), g.grad_z.data());
  return g;
}

}  // namespace ctnet
