// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ctnet/features/record.hpp"
#include "ctnet/numkern/parameter.hpp"
#include "ctnet/numkern/rng.hpp"

namespace ctnet {

inline constexpr double kEmbeddingInitScale = 0.01;

/// vocab x dim table. Gradients are row-sparse: only rows touched since the
/// last step are updated (and zeroed) by step().
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::string field, std::uint32_t vocab, std::size_t dim, std::string param_name = {})
      : field_(std::move(field)),
        param_(param_name.empty() ? "emb/" + field_ : std::move(param_name), vocab, dim),
        mark_(vocab, 0) {}

  const std::string& field() const noexcept { return field_; }
  std::uint32_t vocab() const noexcept { return static_cast<std::uint32_t>(param_.rows()); }
  std::size_t dim() const noexcept { return param_.cols(); }

  Parameter& param() noexcept { return param_; }
  const Parameter& param() const noexcept { return param_; }

  void init_uniform(RngStream& rng, double scale = kEmbeddingInitScale) {
    for (double& x : param_.value.data()) x = rng.uniform(-scale, scale);
  }

  std::span<const double> lookup(std::uint32_t id) const {
    if (id >= vocab()) throw ValidationError("embedding '" + field_ + "': id " + std::to_string(id) + " out of range");
    return param_.value.row(id);
  }

  /// Adds `g` into row `id`'s gradient. No-op for frozen tables.
  void accumulate_grad(std::uint32_t id, std::span<const double> g) {
    if (!param_.trainable) return;
    auto row = param_.grad.row(id);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += g[j];
    if (!mark_[id]) {
      mark_[id] = 1;
      touched_.push_back(id);
    }
  }

  std::span<const std::uint32_t> touched_rows() const noexcept { return touched_; }

  void step(double lr, double eps = kAdagradEps) {
    adagrad_step_rows(param_, touched_, lr, eps);
    clear_touched();
  }

  void zero_grad() {
    for (const auto r : touched_) {
      for (double& g : param_.grad.row(r)) g = 0.0;
    }
    clear_touched();
  }

 private:
  void clear_touched() {
    for (const auto r : touched_) mark_[r] = 0;
    touched_.clear();
  }

  std::string field_;
  Parameter param_;
  std::vector<std::uint8_t> mark_;
  std::vector<std::uint32_t> touched_;
};

/// Concatenates the rows of `tables[k]` at `record.cats[columns[k]]`.
inline void embed_concat(const Record& record, std::span<const EmbeddingTable> tables,
                         std::span<const std::size_t> columns, std::span<double> out) {
  if (tables.size() != columns.size()) throw DimensionError("embed_concat: tables/columns mismatch");
  std::size_t offset = 0;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    if (columns[k] >= record.cats.size()) throw ValidationError("embed_concat: record lacks field '" + tables[k].field() + "'");
    const auto row = tables[k].lookup(record.cats[columns[k]]);
    if (offset + row.size() > out.size()) throw DimensionError("embed_concat: output too short");
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += row.size();
  }
  if (offset != out.size()) throw DimensionError("embed_concat: output length mismatch");
}

/// Convenience form when tables follow the record's schema order one-to-one.
inline std::vector<double> embed_concat(const Record& record, std::span<const EmbeddingTable> tables) {
  std::vector<std::size_t> columns(tables.size());
  std::size_t width = 0;
  for (std::size_t k = 0; k < tables.size(); ++k) {
    columns[k] = k;
    width += tables[k].dim();
  }
  std::vector<double> out(width);
  embed_concat(record, tables, columns, out);
  return out;
}

}  // namespace ctnet
