// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "ctnet/numkern/tensor.hpp"

namespace ctnet {

inline constexpr double kAdagradEps = 1e-8;

/// Thrown when a caller breaks an API precondition that is not a shape error.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Trainable tensor with gradient buffer and AdaGrad accumulator.
struct Parameter {
  std::string name;
  Tensor2D value;
  Tensor2D grad;
  Tensor2D accum;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), accum(rows, cols) {}
  Parameter(std::string n, Tensor2D v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()),
        accum(value.rows(), value.cols()) {}

  std::size_t rows() const noexcept { return value.rows(); }
  std::size_t cols() const noexcept { return value.cols(); }

  void zero_grad() { grad.fill(0.0); }
};

namespace detail {

inline void adagrad_update(double& value, double& grad, double& accum, double lr, double eps) {
  accum += grad * grad;
  value -= lr * grad / (std::sqrt(accum) + eps);
  grad = 0.0;
}

inline void require_trainable(const Parameter& p) {
  if (!p.trainable) throw ContractViolation("adagrad_step on frozen parameter '" + p.name + "'");
}

}  // namespace detail

/// Dense AdaGrad update; zeroes the gradient afterwards.
inline void adagrad_step(Parameter& p, double lr, double eps = kAdagradEps) {
  detail::require_trainable(p);
  auto v = p.value.data();
  auto g = p.grad.data();
  auto a = p.accum.data();
  for (std::size_t i = 0; i < v.size(); ++i) detail::adagrad_update(v[i], g[i], a[i], lr, eps);
}

/// Row-sparse AdaGrad update for embedding tables: only the listed rows move.
inline void adagrad_step_rows(Parameter& p, std::span<const std::uint32_t> rows, double lr,
                              double eps = kAdagradEps) {
  detail::require_trainable(p);
  for (const std::uint32_t r : rows) {
    if (r >= p.rows()) throw DimensionError("adagrad_step_rows: row out of range in '" + p.name + "'");
    auto v = p.value.row(r);
    auto g = p.grad.row(r);
    auto a = p.accum.row(r);
    for (std::size_t j = 0; j < v.size(); ++j) detail::adagrad_update(v[j], g[j], a[j], lr, eps);
  }
}

/// Rounds value and accumulator to the nearest float32, the checkpoint precision.
inline void round_to_storage(Parameter& p) {
  for (auto* t : {&p.value, &p.accum}) {
    for (double& x : t->data()) x = static_cast<double>(static_cast<float>(x));
  }
}

}  // namespace ctnet
