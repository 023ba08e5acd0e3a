// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "ctnet/model/single_domain.hpp"

namespace ctnet {

enum class AdapterKind { Glu, Linear };

inline std::string to_string(AdapterKind k) { return k == AdapterKind::Glu ? "glu" : "linear"; }

inline AdapterKind adapter_kind_from_string(std::string_view s) {
  if (s == "glu") return AdapterKind::Glu;
  if (s == "linear") return AdapterKind::Linear;
  throw ValidationError("unknown adapter kind '" + std::string(s) + "'");
}

inline constexpr double kGateInitStddev = 1e-3;

/// One adapter per tower level. GLU: g(z) = (U1 z) * sigmoid(U2 z).
/// Linear: g(z) = U1 z (u2 is empty).
struct Adapter {
  Parameter u1;
  Parameter u2;
};

struct AdapterStack {
  AdapterKind kind = AdapterKind::Glu;
  std::vector<Adapter> levels;  ///< index 0 maps e^S -> e, index l maps z^S_l -> pre_l

  void for_each_parameter(const std::function<void(Parameter&)>& fn) {
    for (auto& a : levels) {
      fn(a.u1);
      if (kind == AdapterKind::Glu) fn(a.u2);
    }
  }
};

struct CtnetTrace {
  TowerTrace source;
  TowerTrace target;
  std::vector<std::vector<double>> inject;
  std::vector<GluTrace> glu;
};

/// Frozen source tower + trainable target tower joined by layer-wise adapters:
///   z_0 = e + g_0(e^S),  z_l = ReLU(W_l z_{l-1} + b_l + g_l(z^S_l)).
/// The prediction comes from the target head.
class CTNetModel {
 public:
  CTNetModel() = default;

  /// Adapters start at U1 = 0 (and U = 0 for Linear); U2 ~ N(0, 1e-3^2).
  CTNetModel(SingleDomainModel source, SingleDomainModel target, AdapterKind kind, bool share_sequence,
             RngStream& rng)
      : source_(std::move(source)), target_(std::move(target)), share_sequence_(share_sequence) {
    check_compatible(source_, target_, share_sequence_);
    source_.set_trainable(false);
    adapters_.kind = kind;
    for (std::size_t l = 0; l <= target_.depth(); ++l) {
      const std::string base = "adapter/" + std::to_string(l);
      Adapter a;
      a.u1 = Parameter(base + "/u1", target_.width(l), source_.width(l));
      if (kind == AdapterKind::Glu) {
        a.u2 = Parameter(base + "/u2", target_.width(l), source_.width(l));
        for (double& x : a.u2.value.data()) x = rng.normal(0.0, kGateInitStddev);
      }
      adapters_.levels.push_back(std::move(a));
    }
  }

  static void check_compatible(const SingleDomainModel& source, const SingleDomainModel& target, bool share) {
    if (source.depth() != target.depth()) {
      throw ValidationError("ctnet: source depth " + std::to_string(source.depth()) + " != target depth " +
                            std::to_string(target.depth()));
    }
    for (const auto& f : source.schema().fields) {
      if (!target.schema().index_of(f.name)) {
        throw ValidationError("ctnet: source field '" + f.name + "' absent from target schema");
      }
    }
    if (share && source.attention().output_dim() != target.attention().output_dim()) {
      throw ValidationError("ctnet: sequence sharing needs equal attention output widths");
    }
  }

  const SingleDomainModel& source() const noexcept { return source_; }
  const SingleDomainModel& target() const noexcept { return target_; }
  SingleDomainModel& target() noexcept { return target_; }
  const AdapterStack& adapters() const noexcept { return adapters_; }
  AdapterStack& adapters() noexcept { return adapters_; }
  AdapterKind kind() const noexcept { return adapters_.kind; }
  bool share_sequence() const noexcept { return share_sequence_; }
  void set_share_sequence(bool s) {
    check_compatible(source_, target_, s);
    share_sequence_ = s;
  }

  void bind(const FeatureSchema& data_schema) {
    source_.bind(data_schema);
    target_.bind(data_schema);
  }

  void forward(const Record& r, CtnetTrace& tr) const {
    source_.forward(r, tr.source);
    const std::size_t L = target_.depth();
    tr.inject.resize(L + 1);
    tr.glu.resize(L + 1);
    for (std::size_t l = 0; l <= L; ++l) {
      const auto zs = source_level(tr.source, l);
      tr.inject[l].resize(target_.width(l));
      const Adapter& a = adapters_.levels[l];
      if (adapters_.kind == AdapterKind::Glu) {
        glu_forward(a.u1.value, a.u2.value, zs, tr.inject[l], tr.glu[l]);
      } else {
        matvec(a.u1.value, zs, tr.inject[l]);
      }
    }
    std::span<const double> shared_ta;
    if (share_sequence_) {
      shared_ta = std::span<const double>(tr.source.e)
                      .subspan(source_.schema().embedding_width(), source_.attention().output_dim());
    }
    target_.forward(r, tr.target, shared_ta, tr.inject);
  }

  double forward(const Record& r) const {
    CtnetTrace tr;
    forward(r, tr);
    return tr.target.logit;
  }

  /// The source tower is frozen and has no trainable upstream, so nothing
  /// propagates into it.
  void backward(const Record& r, CtnetTrace& tr, double dlogit) {
    target_.backward(r, tr.target, dlogit);
    for (std::size_t l = 0; l < adapters_.levels.size(); ++l) {
      Adapter& a = adapters_.levels[l];
      const auto zs = source_level(tr.source, l);
      const std::span<const double> up = l == 0 ? std::span<const double>(tr.target.dz0)
                                                : std::span<const double>(tr.target.dpre[l]);
      if (adapters_.kind == AdapterKind::Glu) {
        if (a.u1.trainable && a.u2.trainable) {
          glu_backward(a.u1.value, a.u2.value, zs, tr.glu[l], up, a.u1.grad, a.u2.grad, {});
        }
      } else if (a.u1.trainable) {
        outer_accum(a.u1.grad, up, zs);
      }
    }
  }

  void step(double lr) {
    target_.step(lr);
    adapters_.for_each_parameter([&](Parameter& p) {
      if (p.trainable) adagrad_step(p, lr);
    });
  }

  void zero_grad() {
    target_.zero_grad();
    source_.zero_grad();
    adapters_.for_each_parameter([](Parameter& p) { p.zero_grad(); });
  }

  /// Source tower first (frozen), then target tower, then adapters.
  void for_each_named_parameter(const std::function<void(const std::string&, Parameter&)>& fn) {
    source_.for_each_parameter([&](Parameter& p) { fn("source/" + p.name, p); });
    target_.for_each_parameter([&](Parameter& p) { fn("target/" + p.name, p); });
    adapters_.for_each_parameter([&](Parameter& p) { fn(p.name, p); });
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for_each_named_parameter([&](const std::string&, Parameter& p) { out.push_back(&p); });
    return out;
  }

  /// Swaps in newer source weights; the copy stays frozen, target tower and
  /// adapters are untouched.
  void refresh_source(const SingleDomainModel& latest) {
    if (!same_architecture(source_, latest)) throw ValidationError("refresh_source: architecture mismatch");
    SingleDomainModel copy = latest;
    copy.bind_like(source_);
    copy.set_trainable(false);
    source_ = std::move(copy);
  }

  static bool same_architecture(const SingleDomainModel& a, const SingleDomainModel& b) {
    if (!(a.schema() == b.schema()) || !(a.config() == b.config()) || a.aux().size() != b.aux().size()) return false;
    std::vector<std::pair<std::string, std::string>> sa;
    std::vector<std::pair<std::string, std::string>> sb;
    a.visit_parameters([&](const Parameter& p) { sa.emplace_back(p.name, p.value.shape_string()); });
    b.visit_parameters([&](const Parameter& p) { sb.emplace_back(p.name, p.value.shape_string()); });
    return sa == sb;
  }

 private:
  std::span<const double> source_level(const TowerTrace& s, std::size_t l) const {
    return l == 0 ? std::span<const double>(s.e) : std::span<const double>(s.z[l]);
  }

  friend struct ModelCodec;

  SingleDomainModel source_;
  SingleDomainModel target_;
  AdapterStack adapters_;
  bool share_sequence_ = false;
};

/// Builds CTNet from the latest production models: the target tower is a
/// deep copy of `prev_target` (weights and AdaGrad state), the source tower a
/// frozen copy of `latest_source`.
inline CTNetModel warm_start(const SingleDomainModel& prev_target, const SingleDomainModel& latest_source,
                             AdapterKind kind, RngStream& rng, bool share_sequence = false) {
  return CTNetModel(latest_source, prev_target, kind, share_sequence, rng);
}

}  // namespace ctnet
