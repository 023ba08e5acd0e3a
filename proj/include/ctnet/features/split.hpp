// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctnet/features/record.hpp"

namespace ctnet {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Prefix split of one target period: the leading `eval` slice is scored
/// before the model sees anything from this period, then `train` is consumed.
struct PeriodSplit {
  std::span<const Record> eval;
  std::span<const Record> train;
  std::size_t eval_begin = 0;  ///< index range of eval within the period
  std::size_t eval_end = 0;
};

inline std::size_t eval_count(std::size_t n, double fraction) {
  return std::min(n, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9)));
}

/// Period 0 is pure training; each later period t gets an eval set made of
/// its first floor(f * n) records.
inline std::vector<PeriodSplit> split_prequential(std::span<const std::vector<Record>> periods, double fraction) {
  if (periods.size() < 2) throw ProtocolError("prequential split needs at least 2 periods");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ProtocolError("eval fraction must lie in (0,1)");
  std::vector<PeriodSplit> out(periods.size());
  for (std::size_t t = 0; t < periods.size(); ++t) {
    const std::span<const Record> all(periods[t]);
    const std::size_t n_eval = t == 0 ? 0 : eval_count(all.size(), fraction);
    out[t].eval = all.first(n_eval);
    out[t].train = all.subspan(n_eval);
    out[t].eval_begin = 0;
    out[t].eval_end = n_eval;
  }
  return out;
}

}  // namespace ctnet
