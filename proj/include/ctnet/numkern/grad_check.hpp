// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctnet/numkern/parameter.hpp"

namespace ctnet {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for the relative error, so entries whose true
  /// gradient is ~0 are judged on absolute error.
  double floor = 1e-4;
};

struct GradCheckEntry {
  std::string name;
  bool skipped = false;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed() const { return max_rel_error() < tolerance; }

  const GradCheckEntry* find(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::fabs(analytic - numeric) / std::max({std::fabs(analytic), std::fabs(numeric), floor});
}

/// Central finite differences against analytic gradients.
///
/// `loss` must be a deterministic function of the parameter values.
/// `backward` must leave d(loss)/d(value) in each trainable parameter's grad
/// (the harness zeroes grads before calling it). Frozen parameters are
/// reported as skipped. `names`, when given, labels the report entries.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  const std::function<void()>& backward,
                                  std::span<Parameter* const> params, double tolerance,
                                  const GradCheckOptions& opt = {}, std::span<const std::string> names = {}) {
  for (Parameter* p : params) p->zero_grad();
  backward();

  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter* p = params[k];
    GradCheckEntry entry{names.empty() ? p->name : names[k]};
    if (!p->trainable) {
      entry.skipped = true;
      report.entries.push_back(entry);
      continue;
    }
    auto values = p->value.data();
    auto grads = p->grad.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + opt.step;
      const double up = loss();
      values[i] = original - opt.step;
      const double down = loss();
      values[i] = original;
      const double numeric = (up - down) / (2.0 * opt.step);
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(grads[i])) {
        throw NonFiniteError("grad_check: non-finite value in parameter '" + entry.name + "' entry " +
                             std::to_string(i));
      }
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(grads[i], numeric, opt.floor));
      ++entry.checked;
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace ctnet
