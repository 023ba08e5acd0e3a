// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctnet/features/record.hpp"
#include "ctnet/numkern/ops.hpp"
#include "ctnet/numkern/rng.hpp"

namespace ctnet {

// Synthetic two-domain click stream with drifting user interests.
//
//   p_u(0) ~ N(0, I_k),  p_u(t+1) = rho p_u(t) + sqrt(1 - rho^2) eps
//   q_i    ~ static, mixed from a category centroid and item noise, N(0, I_k / k)
//   P(click | u, i, d, t) = sigmoid(p_u(t) . (M_d q_i) + b_d + beta * mean_{j in seq} q_j . q_i)
//
// Events of both domains are interleaved in a seeded random order within each
// period, and every click (either domain) is appended to the user's history.

struct SynthConfig {
  std::size_t latent_dim = 8;
  std::uint32_t users = 1000;
  std::uint32_t items = 500;
  std::uint32_t item_categories = 20;
  std::uint32_t user_groups = 10;
  std::uint32_t target_slots = 4;  ///< vocab of the target-only field
  std::size_t periods = 5;
  double drift = 0.9;              ///< rho
  double category_weight = 0.5;    ///< share of item latent variance from its category
  double domain_similarity = 0.7;  ///< correlation between M_source and M_target when generated
  double interaction_scale = 2.0;  ///< M entries ~ N(0, scale^2 / k) when generated
  double source_bias = -1.5;
  double target_bias = -1.5;
  double sequence_weight = 1.0;    ///< beta
  std::size_t source_per_period = 200000;
  std::size_t target_per_period = 20000;
  std::size_t sequence_max_len = 32;
  std::size_t embedding_dim = 8;
  std::uint64_t seed = 1;
  std::optional<Tensor2D> source_map;  ///< k x k; generated from the seed when absent
  std::optional<Tensor2D> target_map;

  void validate() const {
    if (!(drift >= 0.0 && drift <= 1.0)) throw ValidationError("synth: drift must lie in [0,1]");
    if (target_per_period < 1 || source_per_period < target_per_period) {
      throw ValidationError("synth: need source_per_period >= target_per_period >= 1");
    }
    if (latent_dim < 1 || users < 2 || items < 2 || item_categories < 2 || user_groups < 2 || target_slots < 2) {
      throw ValidationError("synth: latent_dim >= 1 and every vocab >= 2 required");
    }
    if (periods < 1) throw ValidationError("synth: periods must be >= 1");
    if (!(category_weight >= 0.0 && category_weight <= 1.0) ||
        !(domain_similarity >= -1.0 && domain_similarity <= 1.0)) {
      throw ValidationError("synth: category_weight in [0,1], domain_similarity in [-1,1]");
    }
    for (const auto* m : {&source_map, &target_map}) {
      if (*m && ((*m)->rows() != latent_dim || (*m)->cols() != latent_dim)) {
        throw ValidationError("synth: domain maps must be latent_dim x latent_dim");
      }
    }
  }
};

inline constexpr const char* kTargetOnlyField = "slot";

/// Dataset schema: user_id, item_id, item_cat, user_group, slot. The source
/// model uses every field except `slot`.
inline FeatureSchema synth_schema(const SynthConfig& cfg) {
  FeatureSchema s;
  s.sequence_max_len = cfg.sequence_max_len;
  const std::size_t d = cfg.embedding_dim;
  s.fields = {{"user_id", cfg.users, d},
              {"item_id", cfg.items, d},
              {"item_cat", cfg.item_categories, d},
              {"user_group", cfg.user_groups, d},
              {kTargetOnlyField, cfg.target_slots, d}};
  s.validate();
  return s;
}

inline FeatureSchema synth_source_schema(const SynthConfig& cfg) {
  return synth_schema(cfg).without({kTargetOnlyField});
}

struct DomainPeriod {
  std::vector<Record> records;
  std::vector<double> click_prob;  ///< generating probability, aligned with records
};

struct SynthData {
  FeatureSchema schema;
  std::vector<DomainPeriod> source;  ///< one entry per period
  std::vector<DomainPeriod> target;
  std::vector<Tensor2D> user_latents;  ///< per period, users x k
  Tensor2D item_latents;               ///< items x k
  Tensor2D source_map;
  Tensor2D target_map;
};

namespace detail {

inline Tensor2D gaussian_matrix(RngStream& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor2D m(rows, cols);
  for (double& x : m.data()) x = rng.normal(0.0, stddev);
  return m;
}

}  // namespace detail

inline SynthData synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.latent_dim;
  const RngStream master(cfg.seed);
  SynthData out;
  out.schema = synth_schema(cfg);

  // Domain maps.
  RngStream map_rng = master.split(3);
  const double map_sd = cfg.interaction_scale / std::sqrt(static_cast<double>(k));
  out.source_map = cfg.source_map ? *cfg.source_map : detail::gaussian_matrix(map_rng, k, k, map_sd);
  if (cfg.target_map) {
    out.target_map = *cfg.target_map;
  } else {
    const Tensor2D noise = detail::gaussian_matrix(map_rng, k, k, map_sd);
    const double a = cfg.domain_similarity;
    const double b = std::sqrt(1.0 - a * a);
    out.target_map = Tensor2D(k, k);
    for (std::size_t i = 0; i < k * k; ++i) {
      out.target_map.data()[i] = a * out.source_map.data()[i] + b * noise.data()[i];
    }
  }

  // Static item side: category assignment, item latents, user groups.
  RngStream item_rng = master.split(2);
  const double item_sd = 1.0 / std::sqrt(static_cast<double>(k));
  const Tensor2D centroids = detail::gaussian_matrix(item_rng, cfg.item_categories, k, item_sd);
  std::vector<std::uint32_t> item_cat(cfg.items);
  out.item_latents = Tensor2D(cfg.items, k);
  const double wc = std::sqrt(cfg.category_weight);
  const double wn = std::sqrt(1.0 - cfg.category_weight);
  for (std::uint32_t i = 0; i < cfg.items; ++i) {
    item_cat[i] = static_cast<std::uint32_t>(item_rng.below(cfg.item_categories));
    for (std::size_t j = 0; j < k; ++j) {
      out.item_latents(i, j) = wc * centroids(item_cat[i], j) + wn * item_rng.normal(0.0, item_sd);
    }
  }
  std::vector<std::uint32_t> user_group(cfg.users);
  for (auto& g : user_group) g = static_cast<std::uint32_t>(item_rng.below(cfg.user_groups));

  // User latent random walk.
  RngStream user_rng = master.split(1);
  out.user_latents.reserve(cfg.periods);
  out.user_latents.push_back(detail::gaussian_matrix(user_rng, cfg.users, k, 1.0));
  const double innov = std::sqrt(1.0 - cfg.drift * cfg.drift);
  for (std::size_t t = 1; t < cfg.periods; ++t) {
    Tensor2D next(cfg.users, k);
    const Tensor2D& prev = out.user_latents.back();
    for (std::size_t i = 0; i < next.size(); ++i) {
      next.data()[i] = cfg.drift * prev.data()[i] + innov * user_rng.normal();
    }
    out.user_latents.push_back(std::move(next));
  }

  // Per-item mapped latents M_d q_i, precomputed per domain.
  auto mapped = [&](const Tensor2D& m) {
    Tensor2D mq(cfg.items, k);
    for (std::uint32_t i = 0; i < cfg.items; ++i) matvec(m, out.item_latents.row(i), mq.row(i));
    return mq;
  };
  const Tensor2D mq_source = mapped(out.source_map);
  const Tensor2D mq_target = mapped(out.target_map);

  std::vector<std::vector<std::uint32_t>> history(cfg.users);
  const std::size_t n_events = cfg.source_per_period + cfg.target_per_period;
  std::vector<std::uint8_t> is_source(n_events);

  for (std::size_t t = 0; t < cfg.periods; ++t) {
    RngStream ev = master.split(100 + t);
    std::fill(is_source.begin(), is_source.end(), 0);
    std::fill(is_source.begin(), is_source.begin() + static_cast<std::ptrdiff_t>(cfg.source_per_period), 1);
    for (std::size_t i = n_events - 1; i > 0; --i) std::swap(is_source[i], is_source[ev.below(i + 1)]);

    DomainPeriod src;
    DomainPeriod tgt;
    src.records.reserve(cfg.source_per_period);
    src.click_prob.reserve(cfg.source_per_period);
    tgt.records.reserve(cfg.target_per_period);
    tgt.click_prob.reserve(cfg.target_per_period);
    const Tensor2D& users_t = out.user_latents[t];

    for (std::size_t e = 0; e < n_events; ++e) {
      const bool source = is_source[e] != 0;
      const auto u = static_cast<std::uint32_t>(ev.below(cfg.users));
      const auto item = static_cast<std::uint32_t>(ev.below(cfg.items));
      const auto slot = static_cast<std::uint32_t>(ev.below(cfg.target_slots));

      const Tensor2D& mq = source ? mq_source : mq_target;
      double logit = dot(users_t.row(u), mq.row(item)) + (source ? cfg.source_bias : cfg.target_bias);
      const auto& hist = history[u];
      if (!hist.empty() && cfg.sequence_weight != 0.0) {
        double affinity = 0.0;
        for (const auto j : hist) affinity += dot(out.item_latents.row(j), out.item_latents.row(item));
        logit += cfg.sequence_weight * affinity / static_cast<double>(hist.size());
      }
      const double p = sigmoid(logit);
      const bool clicked = ev.bernoulli(p);

      Record r;
      r.domain = source ? Domain::Source : Domain::Target;
      r.period = static_cast<std::uint32_t>(t);
      r.cats = {u, item, item_cat[item], user_group[u], slot};
      r.seq = hist;
      r.label = clicked ? 1 : 0;
      DomainPeriod& dst = source ? src : tgt;
      dst.records.push_back(std::move(r));
      dst.click_prob.push_back(p);

      if (clicked) {
        auto& h = history[u];
        if (h.size() == cfg.sequence_max_len) h.erase(h.begin());
        h.push_back(item);
      }
    }
    out.source.push_back(std::move(src));
    out.target.push_back(std::move(tgt));
  }
  return out;
}

}  // namespace ctnet
