// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ctnet/features/synth.hpp"
#include "ctnet/model/single_domain.hpp"

namespace ctnet {

enum class MethodKind { Base, SourceModel, FinetuneEmbeddings, FinetuneAll, ExtraEmbedding, CtnetGlu, CtnetLinear };
enum class TransferMode { NoTransfer, OneTime, Continual };

inline constexpr MethodKind kAllMethodKinds[] = {MethodKind::Base,         MethodKind::SourceModel,
                                                 MethodKind::FinetuneEmbeddings, MethodKind::FinetuneAll,
                                                 MethodKind::ExtraEmbedding,  MethodKind::CtnetGlu,
                                                 MethodKind::CtnetLinear};

inline std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::Base: return "base";
    case MethodKind::SourceModel: return "source_model";
    case MethodKind::FinetuneEmbeddings: return "finetune_embeddings";
    case MethodKind::FinetuneAll: return "finetune_all";
    case MethodKind::ExtraEmbedding: return "extra_embedding";
    case MethodKind::CtnetGlu: return "ctnet";
    case MethodKind::CtnetLinear: return "ctnet_linear";
  }
  return "?";
}

inline std::string to_string(TransferMode m) {
  switch (m) {
    case TransferMode::NoTransfer: return "none";
    case TransferMode::OneTime: return "one_time";
    case TransferMode::Continual: return "continual";
  }
  return "?";
}

inline MethodKind method_kind_from_string(std::string_view s) {
  for (auto k : kAllMethodKinds) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown method '" + std::string(s) + "'");
}

inline TransferMode transfer_mode_from_string(std::string_view s) {
  for (auto m : {TransferMode::NoTransfer, TransferMode::OneTime, TransferMode::Continual}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown transfer mode '" + std::string(s) + "'");
}

inline bool mode_allowed(MethodKind k, TransferMode m) {
  switch (k) {
    case MethodKind::Base:
    case MethodKind::SourceModel: return m == TransferMode::NoTransfer;
    case MethodKind::FinetuneEmbeddings:
    case MethodKind::FinetuneAll: return m == TransferMode::OneTime;
    case MethodKind::ExtraEmbedding:
    case MethodKind::CtnetGlu:
    case MethodKind::CtnetLinear: return m != TransferMode::NoTransfer;
  }
  return false;
}

struct MethodSpec {
  MethodKind kind = MethodKind::Base;
  TransferMode mode = TransferMode::NoTransfer;

  std::string label() const { return to_string(kind) + "/" + to_string(mode); }
  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

inline std::vector<MethodSpec> default_methods() {
  using K = MethodKind;
  using M = TransferMode;
  return {{K::Base, M::NoTransfer},        {K::SourceModel, M::NoTransfer}, {K::FinetuneEmbeddings, M::OneTime},
          {K::FinetuneAll, M::OneTime},    {K::ExtraEmbedding, M::OneTime}, {K::ExtraEmbedding, M::Continual},
          {K::CtnetLinear, M::OneTime},    {K::CtnetLinear, M::Continual},  {K::CtnetGlu, M::OneTime},
          {K::CtnetGlu, M::Continual}};
}

/// Periods are numbered 0..periods-1. Models pretrain on [0, deploy_period);
/// transfer methods deploy right after the evaluation at boundary
/// deploy_period, and boundaries deploy_period..periods-1 are reported.
struct ExperimentPlan {
  SynthConfig synth;
  std::string data_dir;  ///< when set, datasets are read from <data_dir>/seed_<n>/ instead of generated
  TowerConfig source_tower;
  TowerConfig target_tower;
  std::size_t periods = 5;
  std::size_t deploy_period = 1;
  double eval_fraction = 0.2;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  bool share_sequence = false;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<MethodSpec> methods = default_methods();

  void validate() const {
    if (periods < 2) throw ValidationError("plan: periods must be >= 2");
    if (deploy_period < 1 || deploy_period >= periods) {
      throw ValidationError("plan: deploy_period must satisfy 1 <= deploy_period < periods (got " +
                            std::to_string(deploy_period) + ", periods " + std::to_string(periods) + ")");
    }
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw ValidationError("plan: eval_fraction must lie in (0,1)");
    if (batch_size < 1) throw ValidationError("plan: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("plan: learning_rate must be positive");
    if (seeds.empty()) throw ValidationError("plan: at least one seed required");
    if (methods.empty()) throw ValidationError("plan: at least one method required");
    for (const auto& m : methods) {
      if (!mode_allowed(m.kind, m.mode)) {
        throw ValidationError("plan: method " + to_string(m.kind) + " cannot run in mode " + to_string(m.mode));
      }
    }
    if (synth.periods != periods) throw ValidationError("plan: synth.periods must equal periods");
    source_tower.validate();
    target_tower.validate();
    if (source_tower.widths.size() != target_tower.widths.size()) {
      throw ValidationError("plan: source and target towers need the same depth");
    }
    synth.validate();
  }
};

// -- JSON form ----------------------------------------------------------------

namespace detail {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, const std::string& ctx) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto name : known) ok = ok || k == name;
    if (!ok) throw ValidationError(ctx + ": unknown key '" + k + "'");
  }
}

inline TowerConfig tower_from_json(const nlohmann::json& j, const std::string& ctx) {
  reject_unknown(j, {"widths", "heads", "head_dim"}, ctx);
  TowerConfig t;
  take(j, "widths", t.widths);
  take(j, "heads", t.heads);
  take(j, "head_dim", t.head_dim);
  return t;
}

inline nlohmann::json tower_to_json(const TowerConfig& t) {
  return {{"widths", t.widths}, {"heads", t.heads}, {"head_dim", t.head_dim}};
}

}  // namespace detail

inline nlohmann::json plan_to_json(const ExperimentPlan& p) {
  const auto& s = p.synth;
  nlohmann::json synth = {{"latent_dim", s.latent_dim},
                          {"users", s.users},
                          {"items", s.items},
                          {"item_categories", s.item_categories},
                          {"user_groups", s.user_groups},
                          {"target_slots", s.target_slots},
                          {"drift", s.drift},
                          {"category_weight", s.category_weight},
                          {"domain_similarity", s.domain_similarity},
                          {"interaction_scale", s.interaction_scale},
                          {"source_bias", s.source_bias},
                          {"target_bias", s.target_bias},
                          {"sequence_weight", s.sequence_weight},
                          {"source_per_period", s.source_per_period},
                          {"target_per_period", s.target_per_period},
                          {"sequence_max_len", s.sequence_max_len},
                          {"embedding_dim", s.embedding_dim}};
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : p.methods) methods.push_back({{"kind", to_string(m.kind)}, {"mode", to_string(m.mode)}});
  nlohmann::json j = {{"periods", p.periods},
                      {"deploy_period", p.deploy_period},
                      {"eval_fraction", p.eval_fraction},
                      {"batch_size", p.batch_size},
                      {"learning_rate", p.learning_rate},
                      {"share_sequence", p.share_sequence},
                      {"seeds", p.seeds},
                      {"source_tower", detail::tower_to_json(p.source_tower)},
                      {"target_tower", detail::tower_to_json(p.target_tower)},
                      {"synth", synth},
                      {"methods", methods}};
  if (!p.data_dir.empty()) j["data_dir"] = p.data_dir;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected. The result is
/// validated.
inline ExperimentPlan plan_from_json(const nlohmann::json& j) {
  ExperimentPlan p;
  try {
    detail::reject_unknown(j,
                           {"periods", "deploy_period", "eval_fraction", "batch_size", "learning_rate",
                            "share_sequence", "seeds", "source_tower", "target_tower", "synth", "methods", "data_dir"},
                           "plan");
    detail::take(j, "periods", p.periods);
    detail::take(j, "deploy_period", p.deploy_period);
    detail::take(j, "eval_fraction", p.eval_fraction);
    detail::take(j, "batch_size", p.batch_size);
    detail::take(j, "learning_rate", p.learning_rate);
    detail::take(j, "share_sequence", p.share_sequence);
    detail::take(j, "seeds", p.seeds);
    detail::take(j, "data_dir", p.data_dir);
    if (j.contains("source_tower")) p.source_tower = detail::tower_from_json(j.at("source_tower"), "plan.source_tower");
    if (j.contains("target_tower")) p.target_tower = detail::tower_from_json(j.at("target_tower"), "plan.target_tower");
    p.synth.periods = p.periods;
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      detail::reject_unknown(s,
                             {"latent_dim", "users", "items", "item_categories", "user_groups", "target_slots",
                              "drift", "category_weight", "domain_similarity", "interaction_scale", "source_bias",
                              "target_bias", "sequence_weight", "source_per_period", "target_per_period",
                              "sequence_max_len", "embedding_dim"},
                             "plan.synth");
      auto& c = p.synth;
      detail::take(s, "latent_dim", c.latent_dim);
      detail::take(s, "users", c.users);
      detail::take(s, "items", c.items);
      detail::take(s, "item_categories", c.item_categories);
      detail::take(s, "user_groups", c.user_groups);
      detail::take(s, "target_slots", c.target_slots);
      detail::take(s, "drift", c.drift);
      detail::take(s, "category_weight", c.category_weight);
      detail::take(s, "domain_similarity", c.domain_similarity);
      detail::take(s, "interaction_scale", c.interaction_scale);
      detail::take(s, "source_bias", c.source_bias);
      detail::take(s, "target_bias", c.target_bias);
      detail::take(s, "sequence_weight", c.sequence_weight);
      detail::take(s, "source_per_period", c.source_per_period);
      detail::take(s, "target_per_period", c.target_per_period);
      detail::take(s, "sequence_max_len", c.sequence_max_len);
      detail::take(s, "embedding_dim", c.embedding_dim);
    }
    if (j.contains("methods")) {
      p.methods.clear();
      for (const auto& m : j.at("methods")) {
        detail::reject_unknown(m, {"kind", "mode"}, "plan.methods[]");
        p.methods.push_back({method_kind_from_string(m.at("kind").get<std::string>()),
                             transfer_mode_from_string(m.at("mode").get<std::string>())});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("plan: ") + e.what());
  }
  p.validate();
  return p;
}

inline ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open plan file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("plan '" + path + "' is not valid JSON: " + e.what());
  }
  return plan_from_json(j);
}

}  // namespace ctnet
