// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace ctnet {

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kLoglossClip = 1e-7;

/// Scores, labels and user ids of one evaluation slice, index-aligned.
struct EvalBatch {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::uint32_t> users;
};

namespace detail {

inline void check_aligned(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("metric: scores/labels length mismatch");
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("metric: labels must be 0 or 1");
  }
}

}  // namespace detail

/// Mann-Whitney AUC with average ranks, so tied scores count one half.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_aligned(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("AUC undefined: only one class present");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

/// Impression-weighted mean of per-user AUC over users with both classes.
inline double gauc(std::span<const double> scores, std::span<const int> labels, std::span<const std::uint32_t> users) {
  detail::check_aligned(scores, labels);
  if (users.size() != scores.size()) throw std::invalid_argument("gauc: users length mismatch");
  std::map<std::uint32_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < users.size(); ++i) groups[users[i]].push_back(i);

  double weighted = 0.0;
  double weight = 0.0;
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& [user, idx] : groups) {
    s.clear();
    y.clear();
    int pos = 0;
    for (auto i : idx) {
      s.push_back(scores[i]);
      y.push_back(labels[i]);
      pos += labels[i];
    }
    if (pos == 0 || pos == static_cast<int>(idx.size())) continue;
    const double w = static_cast<double>(idx.size());
    weighted += w * auc(s, y);
    weight += w;
  }
  if (weight == 0.0) throw UndefinedMetricError("GAUC undefined: no user has both classes");
  return weighted / weight;
}

/// Mean BCE of probabilities clipped to [1e-7, 1 - 1e-7].
inline double logloss(std::span<const double> probs, std::span<const int> labels) {
  detail::check_aligned(probs, labels);
  if (probs.empty()) throw UndefinedMetricError("logloss undefined on an empty slice");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kLoglossClip, 1.0 - kLoglossClip);
    total -= labels[i] == 1 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(probs.size());
}

struct MetricTriple {
  double auc = 0.0;
  double gauc = 0.0;
  double logloss = 0.0;
};

/// `scores` are probabilities.
inline MetricTriple evaluate(const EvalBatch& b) {
  return {auc(b.scores, b.labels), gauc(b.scores, b.labels, b.users), logloss(b.scores, b.labels)};
}

}  // namespace ctnet
