// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctnet/model/ctnet.hpp"
#include "ctnet/numkern/grad_check.hpp"

namespace ctnet {

namespace detail {

template <typename Model>
struct TraceFor;
template <>
struct TraceFor<SingleDomainModel> {
  using type = TowerTrace;
  static double logit(const TowerTrace& t) { return t.logit; }
};
template <>
struct TraceFor<CTNetModel> {
  using type = CtnetTrace;
  static double logit(const CtnetTrace& t) { return t.target.logit; }
};

/// Mean BCE over `batch`; with `backprop` it also accumulates the gradient of
/// that mean into the model's trainable parameters.
template <typename Model>
double batch_loss(Model& m, std::span<const Record> batch, bool backprop) {
  using Trace = TraceFor<Model>;
  typename Trace::type tr;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& r : batch) {
    m.forward(r, tr);
    const auto bce = bce_with_logits(Trace::logit(tr), r.label);
    if (!std::isfinite(bce.loss)) throw NonFiniteError("non-finite loss during training");
    total += bce.loss;
    if (backprop) m.backward(r, tr, bce.dloss_dlogit * inv_n);
  }
  return total * inv_n;
}

}  // namespace detail

/// One AdaGrad step on the mean BCE of `batch`. Returns the pre-update loss.
template <typename Model>
double train_step(Model& m, std::span<const Record> batch, double lr) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const double loss = detail::batch_loss(m, batch, true);
  m.step(lr);
  return loss;
}

/// Sequential mini-batches over `records` in stream order. Returns the mean
/// of the per-batch losses.
template <typename Model>
double train_stream(Model& m, std::span<const Record> records, std::size_t batch_size, double lr) {
  if (batch_size == 0) throw std::invalid_argument("train_stream: batch_size must be positive");
  double sum = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < records.size(); begin += batch_size) {
    const std::size_t n = std::min(batch_size, records.size() - begin);
    sum += train_step(m, records.subspan(begin, n), lr);
    ++batches;
  }
  return batches ? sum / static_cast<double>(batches) : 0.0;
}

template <typename Model>
std::vector<double> predict_logits(const Model& m, std::span<const Record> records) {
  typename detail::TraceFor<Model>::type tr;
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    m.forward(r, tr);
    const double z = detail::TraceFor<Model>::logit(tr);
    if (!std::isfinite(z)) throw NonFiniteError("non-finite logit in prediction");
    out.push_back(z);
  }
  return out;
}

/// Finite-difference check of a model's analytic gradient of the mean batch
/// loss, over every parameter (frozen ones are reported as skipped).
template <typename Model>
GradCheckReport grad_check_model(Model& m, std::span<const Record> batch, double tolerance,
                                 const GradCheckOptions& opt = {}) {
  std::vector<Parameter*> params;
  std::vector<std::string> names;
  m.for_each_named_parameter([&](const std::string& name, Parameter& p) {
    params.push_back(&p);
    names.push_back(name);
  });
  auto loss = [&] { return detail::batch_loss(m, batch, false); };
  auto backward = [&] {
    m.zero_grad();
    detail::batch_loss(m, batch, true);
  };
  auto report = grad_check(loss, backward, params, tolerance, opt, names);
  m.zero_grad();
  return report;
}

}  // namespace ctnet
