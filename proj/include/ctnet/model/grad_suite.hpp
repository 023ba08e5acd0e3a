// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "ctnet/model/train.hpp"

namespace ctnet {

// Finite-difference checks of every trainable tensor at toy dimensions.

struct GradSuiteResult {
  std::string model;
  GradCheckReport report;
};

inline FeatureSchema toy_schema() {
  FeatureSchema s;
  s.sequence_max_len = 4;
  s.fields = {{"user_id", 5, 3}, {"item_id", 6, 3}, {"item_cat", 3, 2}, {"slot", 2, 2}};
  s.validate();
  return s;
}

inline TowerConfig toy_tower() { return TowerConfig{{5, 4}, 2, 2}; }

/// Four records with histories of length 0..3, labels mixed.
inline std::vector<Record> toy_batch() {
  std::vector<Record> b;
  const std::vector<std::vector<std::uint32_t>> seqs = {{}, {2}, {1, 4}, {0, 5, 3}};
  for (std::uint32_t i = 0; i < 4; ++i) {
    Record r;
    r.domain = Domain::Target;
    r.cats = {i % 5, (i * 2 + 1) % 6, i % 3, i % 2};
    r.seq = seqs[i];
    r.label = static_cast<std::uint8_t>(i % 2);
    b.push_back(std::move(r));
  }
  return b;
}

namespace detail {

/// Moves every tensor away from its (small or zero) initial value so that
/// all gradient paths are exercised.
inline void randomize(Parameter& p, RngStream& rng, double scale) {
  for (double& x : p.value.data()) x = rng.normal(0.0, scale);
}

}  // namespace detail

inline std::vector<GradSuiteResult> run_grad_suite(double tolerance, const GradCheckOptions& opt = {}) {
  const FeatureSchema data = toy_schema();
  const FeatureSchema src_schema = data.without({"slot"});
  const auto batch = toy_batch();
  std::vector<GradSuiteResult> out;

  RngStream rng(7);
  SingleDomainModel single(data, toy_tower(), data, rng);
  single.for_each_parameter([&](Parameter& p) { detail::randomize(p, rng, 0.5); });
  out.push_back({"single_domain", grad_check_model(single, batch, tolerance, opt)});

  for (auto kind : {AdapterKind::Glu, AdapterKind::Linear}) {
    SingleDomainModel src(src_schema, toy_tower(), data, rng);
    SingleDomainModel tgt(data, toy_tower(), data, rng);
    src.for_each_parameter([&](Parameter& p) { detail::randomize(p, rng, 0.5); });
    tgt.for_each_parameter([&](Parameter& p) { detail::randomize(p, rng, 0.5); });
    CTNetModel m = warm_start(tgt, src, kind, rng);
    m.adapters().for_each_parameter([&](Parameter& p) { detail::randomize(p, rng, 0.3); });
    out.push_back({"ctnet_" + to_string(kind), grad_check_model(m, batch, tolerance, opt)});
  }
  return out;
}

}  // namespace ctnet
