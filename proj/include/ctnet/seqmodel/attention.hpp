// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ctnet/numkern/ops.hpp"
#include "ctnet/numkern/parameter.hpp"
#include "ctnet/numkern/rng.hpp"

namespace ctnet {

/// Multi-head scaled dot-product target attention. The candidate item is the
/// query; behaviors supply keys and values. No positional encoding.
struct AttentionParams {
  std::size_t heads = 2;
  std::size_t head_dim = 8;
  Parameter wq;
  Parameter wk;
  Parameter wv;

  AttentionParams() = default;
  AttentionParams(std::size_t h, std::size_t dh, std::size_t item_dim, const std::string& prefix = "attn")
      : heads(h),
        head_dim(dh),
        wq(prefix + "/wq", h * dh, item_dim),
        wk(prefix + "/wk", h * dh, item_dim),
        wv(prefix + "/wv", h * dh, item_dim) {
    if (h < 1 || dh < 1 || item_dim < 1) throw DimensionError("attention: heads, head_dim, item_dim must be >= 1");
  }

  std::size_t output_dim() const noexcept { return heads * head_dim; }
  std::size_t item_dim() const noexcept { return wq.cols(); }

  /// Xavier-uniform initialisation of the three projections.
  void init(RngStream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(item_dim() + output_dim()));
    for (Parameter* p : {&wq, &wk, &wv}) {
      for (double& x : p->value.data()) x = rng.uniform(-limit, limit);
    }
  }
};

/// Per-call cache for the backward pass. `alpha` is heads x n (zero on masked
/// slots); keys and values are n x (heads * head_dim).
struct AttentionTrace {
  std::vector<double> query;
  Tensor2D keys;
  Tensor2D values;
  Tensor2D alpha;
  std::vector<std::uint8_t> valid;
  bool any_valid = false;
};

namespace detail {

inline void check_attention_inputs(const AttentionParams& p, std::span<const double> target,
                                   std::span<const std::span<const double>> behaviors,
                                   std::span<const std::uint8_t> mask, std::span<double> out) {
  require(target.size() == p.item_dim(), "target_attention: target embedding has length " +
                                             std::to_string(target.size()) + ", expected " +
                                             std::to_string(p.item_dim()));
  require(out.size() == p.output_dim(), "target_attention: output length mismatch");
  require(mask.empty() || mask.size() == behaviors.size(), "target_attention: mask length mismatch");
  for (const auto& b : behaviors) {
    require(b.size() == p.item_dim(), "target_attention: behavior embedding length mismatch");
  }
}

}  // namespace detail

/// e_TA = concat_h sum_j alpha_hj v_hj, alpha_h = softmax_j(q_h . k_hj / sqrt(d_h))
/// over valid j. An empty mask means every behavior is valid. No valid
/// behaviors yields the zero vector.
inline void target_attention(const AttentionParams& p, std::span<const double> target,
                             std::span<const std::span<const double>> behaviors,
                             std::span<const std::uint8_t> mask, std::span<double> out, AttentionTrace& tr) {
  detail::check_attention_inputs(p, target, behaviors, mask, out);
  const std::size_t n = behaviors.size();
  const std::size_t hd = p.output_dim();
  const std::size_t dh = p.head_dim;
  std::fill(out.begin(), out.end(), 0.0);

  tr.valid.assign(n, 1);
  if (!mask.empty()) std::copy(mask.begin(), mask.end(), tr.valid.begin());
  tr.any_valid = std::any_of(tr.valid.begin(), tr.valid.end(), [](auto v) { return v != 0; });
  tr.query.assign(hd, 0.0);
  if (tr.keys.rows() != n || tr.keys.cols() != hd) {
    tr.keys = Tensor2D(n, hd);
    tr.values = Tensor2D(n, hd);
  }
  if (tr.alpha.rows() != p.heads || tr.alpha.cols() != n) tr.alpha = Tensor2D(p.heads, n);
  tr.alpha.fill(0.0);
  if (!tr.any_valid) return;

  matvec(p.wq.value, target, tr.query);
  for (std::size_t j = 0; j < n; ++j) {
    if (!tr.valid[j]) continue;
    matvec(p.wk.value, behaviors[j], tr.keys.row(j));
    matvec(p.wv.value, behaviors[j], tr.values.row(j));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < p.heads; ++h) {
    const std::span<const double> q(tr.query.data() + h * dh, dh);
    auto a = tr.alpha.row(h);
    double max_score = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (!tr.valid[j]) continue;
      a[j] = dot(q, tr.keys.row(j).subspan(h * dh, dh)) * scale;
      max_score = std::max(max_score, a[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!tr.valid[j]) continue;
      a[j] = std::exp(a[j] - max_score);
      total += a[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!tr.valid[j]) continue;
      a[j] /= total;
      const auto v = tr.values.row(j).subspan(h * dh, dh);
      for (std::size_t c = 0; c < dh; ++c) out[h * dh + c] += a[j] * v[c];
    }
  }
}

/// Accumulates parameter gradients into p.{wq,wk,wv}.grad (when trainable),
/// and input gradients into grad_target / grad_behaviors (when non-empty).
/// Masked behaviors receive exactly zero gradient.
inline void target_attention_backward(AttentionParams& p, std::span<const double> target,
                                      std::span<const std::span<const double>> behaviors,
                                      const AttentionTrace& tr, std::span<const double> upstream,
                                      std::span<double> grad_target, std::span<const std::span<double>> grad_behaviors) {
  detail::require(upstream.size() == p.output_dim(), "target_attention_backward: upstream length");
  detail::require(grad_behaviors.empty() || grad_behaviors.size() == behaviors.size(),
                  "target_attention_backward: grad_behaviors length");
  if (!tr.any_valid) return;
  const std::size_t n = behaviors.size();
  const std::size_t hd = p.output_dim();
  const std::size_t dh = p.head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dq(hd, 0.0);
  Tensor2D dk(n, hd);
  Tensor2D dv(n, hd);
  std::vector<double> dalpha(n);
  for (std::size_t h = 0; h < p.heads; ++h) {
    const auto a = tr.alpha.row(h);
    const std::span<const double> up = upstream.subspan(h * dh, dh);
    const std::span<const double> q(tr.query.data() + h * dh, dh);
    double weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!tr.valid[j]) continue;
      dalpha[j] = dot(up, tr.values.row(j).subspan(h * dh, dh));
      weighted += a[j] * dalpha[j];
      auto dvj = dv.row(j).subspan(h * dh, dh);
      for (std::size_t c = 0; c < dh; ++c) dvj[c] += a[j] * up[c];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!tr.valid[j]) continue;
      const double ds = a[j] * (dalpha[j] - weighted) * scale;
      const auto kj = tr.keys.row(j).subspan(h * dh, dh);
      auto dkj = dk.row(j).subspan(h * dh, dh);
      for (std::size_t c = 0; c < dh; ++c) {
        dq[h * dh + c] += ds * kj[c];
        dkj[c] += ds * q[c];
      }
    }
  }

  if (p.wq.trainable) outer_accum(p.wq.grad, dq, target);
  if (!grad_target.empty()) matvec_transposed_accum(p.wq.value, dq, grad_target);
  for (std::size_t j = 0; j < n; ++j) {
    if (!tr.valid[j]) continue;
    if (p.wk.trainable) outer_accum(p.wk.grad, dk.row(j), behaviors[j]);
    if (p.wv.trainable) outer_accum(p.wv.grad, dv.row(j), behaviors[j]);
    if (!grad_behaviors.empty()) {
      matvec_transposed_accum(p.wk.value, dk.row(j), grad_behaviors[j]);
      matvec_transposed_accum(p.wv.value, dv.row(j), grad_behaviors[j]);
    }
  }
}

}  // namespace ctnet
