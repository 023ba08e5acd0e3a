// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ctnet/features/embedding.hpp"
#include "ctnet/features/record.hpp"
#include "ctnet/numkern/ops.hpp"
#include "ctnet/numkern/parameter.hpp"
#include "ctnet/numkern/rng.hpp"
#include "ctnet/seqmodel/attention.hpp"

namespace ctnet {

/// Tower shape. Hidden layers use ReLU; the head is one linear unit.
struct TowerConfig {
  std::vector<std::size_t> widths{64, 32, 16};
  std::size_t heads = 2;
  std::size_t head_dim = 8;

  friend bool operator==(const TowerConfig&, const TowerConfig&) = default;

  void validate() const {
    if (widths.empty()) throw ValidationError("tower: at least one hidden layer required");
    for (auto w : widths) {
      if (w < 1) throw ValidationError("tower: layer widths must be >= 1");
    }
    if (heads < 1 || head_dim < 1) throw ValidationError("tower: heads and head_dim must be >= 1");
  }
};

struct DenseLayer {
  Parameter w;
  Parameter b;
};

/// Frozen copy of another model's embedding table, fed as an extra input
/// block keyed by a data column (user_id or item_id).
struct AuxTable {
  EmbeddingTable table;
  std::string column_field;
  std::size_t column = 0;
};

/// Named slice of the tower input e.
struct InputSegment {
  std::string name;  ///< "field:<name>", "ta" or "aux:<name>"
  std::size_t offset;
  std::size_t width;
};

/// Activations of one forward pass, reused across records. z[0] is the
/// tower input (after any injection), z[l] the output of hidden layer l.
struct TowerTrace {
  std::vector<double> e;
  std::vector<std::vector<double>> pre;  ///< index l = 1..L
  std::vector<std::vector<double>> z;    ///< index l = 0..L
  std::vector<std::span<const double>> behaviors;
  AttentionTrace attn;
  bool ta_overridden = false;
  double logit = 0.0;
  // Filled by backward: d(loss)/d(z_0) and d(loss)/d(pre_l).
  std::vector<std::vector<double>> dpre;
  std::vector<double> dz0;
};

/// Embedding tables + target attention + ReLU MLP + linear head.
///
/// e = [e_FEAT, e_TA, aux...];  z_0 = e (+ inj_0);
/// z_l = ReLU(W_l z_{l-1} + b_l (+ inj_l));  logit = w_h . z_L + b_h.
class SingleDomainModel {
 public:
  SingleDomainModel() = default;

  SingleDomainModel(FeatureSchema schema, TowerConfig cfg, const FeatureSchema& data_schema, RngStream& rng)
      : schema_(std::move(schema)), cfg_(std::move(cfg)) {
    schema_.validate();
    cfg_.validate();
    for (const auto& f : schema_.fields) tables_.emplace_back(f.name, f.vocab_size, f.embedding_dim);
    for (auto& t : tables_) t.init_uniform(rng);
    attn_ = AttentionParams(cfg_.heads, cfg_.head_dim, schema_.item_field().embedding_dim);
    attn_.init(rng);
    build_layers(rng);
    bind(data_schema);
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const TowerConfig& config() const noexcept { return cfg_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t input_dim() const noexcept {
    std::size_t d = schema_.embedding_width() + attn_.output_dim();
    for (const auto& a : aux_) d += a.table.dim();
    return d;
  }
  /// Width of z_l: l = 0 is the input, l = 1..L hidden layers.
  std::size_t width(std::size_t l) const { return l == 0 ? input_dim() : cfg_.widths.at(l - 1); }

  std::vector<EmbeddingTable>& tables() noexcept { return tables_; }
  const std::vector<EmbeddingTable>& tables() const noexcept { return tables_; }
  EmbeddingTable& table(std::string_view field) { return tables_.at(field_index(field)); }
  const EmbeddingTable& table(std::string_view field) const { return tables_.at(field_index(field)); }
  AttentionParams& attention() noexcept { return attn_; }
  const AttentionParams& attention() const noexcept { return attn_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  DenseLayer& head() noexcept { return head_; }
  const DenseLayer& head() const noexcept { return head_; }
  std::vector<AuxTable>& aux() noexcept { return aux_; }
  const std::vector<AuxTable>& aux() const noexcept { return aux_; }
  std::span<const std::size_t> columns() const noexcept { return columns_; }

  /// Resolves each model field (and aux key) to a column of `data_schema` by name.
  void bind(const FeatureSchema& data_schema) {
    columns_.clear();
    for (const auto& f : schema_.fields) {
      auto idx = data_schema.index_of(f.name);
      if (!idx) throw ValidationError("model field '" + f.name + "' missing from data schema");
      if (data_schema.fields[*idx].vocab_size != f.vocab_size) {
        throw ValidationError("model field '" + f.name + "' vocab differs from data schema");
      }
      columns_.push_back(*idx);
    }
    for (auto& a : aux_) {
      auto idx = data_schema.index_of(a.column_field);
      if (!idx) throw ValidationError("aux key '" + a.column_field + "' missing from data schema");
      a.column = *idx;
    }
  }

  /// Reuses another model's column binding (same fields, same data schema).
  void bind_like(const SingleDomainModel& other) {
    columns_ = other.columns_;
    for (std::size_t i = 0; i < aux_.size() && i < other.aux_.size(); ++i) aux_[i].column = other.aux_[i].column;
  }

  std::vector<InputSegment> input_segments() const {
    std::vector<InputSegment> segs;
    std::size_t off = 0;
    for (const auto& t : tables_) {
      segs.push_back({"field:" + t.field(), off, t.dim()});
      off += t.dim();
    }
    segs.push_back({"ta", off, attn_.output_dim()});
    off += attn_.output_dim();
    for (const auto& a : aux_) {
      segs.push_back({"aux:" + a.table.field(), off, a.table.dim()});
      off += a.table.dim();
    }
    return segs;
  }

  /// Every Parameter, embedding tables first, in a fixed order.
  void for_each_parameter(const std::function<void(Parameter&)>& fn) {
    for (auto& t : tables_) fn(t.param());
    for (Parameter* p : {&attn_.wq, &attn_.wk, &attn_.wv}) fn(*p);
    for (auto& l : layers_) {
      fn(l.w);
      fn(l.b);
    }
    fn(head_.w);
    fn(head_.b);
    for (auto& a : aux_) fn(a.table.param());
  }
  void for_each_named_parameter(const std::function<void(const std::string&, Parameter&)>& fn) {
    for_each_parameter([&](Parameter& p) { fn(p.name, p); });
  }
  void visit_parameters(const std::function<void(const Parameter&)>& fn) const {
    const_cast<SingleDomainModel*>(this)->for_each_parameter([&](Parameter& p) { fn(p); });
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for_each_parameter([&](Parameter& p) { out.push_back(&p); });
    return out;
  }

  /// Aux tables stay frozen regardless.
  void set_trainable(bool trainable) {
    for_each_parameter([&](Parameter& p) { p.trainable = trainable; });
    for (auto& a : aux_) a.table.param().trainable = false;
  }

  /// Forward pass. `e_ta_override` replaces this tower's attention output;
  /// `inject` (size L+1, may be empty) is added to z_0 and each pre-activation.
  void forward(const Record& r, TowerTrace& tr, std::span<const double> e_ta_override = {},
               std::span<const std::vector<double>> inject = {}) const {
    if (columns_.size() != tables_.size()) throw ContractViolation("model is not bound to a data schema");
    if (!inject.empty() && inject.size() != depth() + 1) throw DimensionError("forward: injection count");
    const std::size_t feat_w = schema_.embedding_width();
    const std::size_t ta_w = attn_.output_dim();
    tr.e.resize(input_dim());
    embed_concat(r, tables_, columns_, std::span<double>(tr.e).first(feat_w));

    std::span<double> ta(tr.e.data() + feat_w, ta_w);
    tr.ta_overridden = !e_ta_override.empty();
    if (tr.ta_overridden) {
      if (e_ta_override.size() != ta_w) throw DimensionError("forward: e_TA override length");
      std::copy(e_ta_override.begin(), e_ta_override.end(), ta.begin());
    } else {
      const auto& items = tables_[1];
      tr.behaviors.clear();
      for (const auto id : r.seq) tr.behaviors.push_back(items.lookup(id));
      target_attention(attn_, items.lookup(r.cats[columns_[1]]), tr.behaviors, {}, ta, tr.attn);
    }
    std::size_t off = feat_w + ta_w;
    for (const auto& a : aux_) {
      const auto row = a.table.lookup(r.cats.at(a.column));
      std::copy(row.begin(), row.end(), tr.e.begin() + static_cast<std::ptrdiff_t>(off));
      off += row.size();
    }

    const std::size_t L = depth();
    tr.z.resize(L + 1);
    tr.pre.resize(L + 1);
    tr.z[0] = tr.e;
    if (!inject.empty()) {
      for (std::size_t i = 0; i < tr.z[0].size(); ++i) tr.z[0][i] += inject[0][i];
    }
    for (std::size_t l = 1; l <= L; ++l) {
      const DenseLayer& layer = layers_[l - 1];
      auto& pre = tr.pre[l];
      pre.resize(layer.w.rows());
      matvec(layer.w.value, tr.z[l - 1], pre);
      const auto bias = layer.b.value.data();
      for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += bias[i];
      if (!inject.empty()) {
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += inject[l][i];
      }
      auto& z = tr.z[l];
      z.resize(pre.size());
      for (std::size_t i = 0; i < pre.size(); ++i) z[i] = relu(pre[i]);
    }
    tr.logit = dot(head_.w.value.data(), tr.z[L]) + head_.b.value(0, 0);
  }

  double forward(const Record& r) const {
    TowerTrace tr;
    forward(r, tr);
    return tr.logit;
  }

  /// Backpropagates d(loss)/d(logit) through the pass recorded in `tr`,
  /// accumulating into trainable parameters and filling tr.dpre / tr.dz0.
  void backward(const Record& r, TowerTrace& tr, double dlogit) {
    const std::size_t L = depth();
    tr.dpre.resize(L + 1);
    std::vector<double> dz(tr.z[L].size());
    if (head_.w.trainable) {
      outer_accum(head_.w.grad, std::span<const double>(&dlogit, 1), tr.z[L]);
    }
    if (head_.b.trainable) head_.b.grad(0, 0) += dlogit;
    matvec_transposed_accum(head_.w.value, std::span<const double>(&dlogit, 1), dz);

    for (std::size_t l = L; l >= 1; --l) {
      DenseLayer& layer = layers_[l - 1];
      auto& dpre = tr.dpre[l];
      dpre.resize(dz.size());
      for (std::size_t i = 0; i < dz.size(); ++i) dpre[i] = tr.pre[l][i] > 0.0 ? dz[i] : 0.0;
      if (layer.w.trainable) outer_accum(layer.w.grad, dpre, tr.z[l - 1]);
      if (layer.b.trainable) {
        auto gb = layer.b.grad.data();
        for (std::size_t i = 0; i < dpre.size(); ++i) gb[i] += dpre[i];
      }
      std::vector<double> dprev(tr.z[l - 1].size(), 0.0);
      matvec_transposed_accum(layer.w.value, dpre, dprev);
      dz = std::move(dprev);
    }
    tr.dz0 = dz;

    // Embedding slices.
    std::size_t off = 0;
    for (std::size_t k = 0; k < tables_.size(); ++k) {
      auto& t = tables_[k];
      t.accumulate_grad(r.cats[columns_[k]], std::span<const double>(dz).subspan(off, t.dim()));
      off += t.dim();
    }
    if (!tr.ta_overridden && tr.attn.any_valid) {
      auto& items = tables_[1];
      const std::size_t item_dim = items.dim();
      const auto target_id = r.cats[columns_[1]];
      std::vector<double> d_target(item_dim, 0.0);
      std::vector<std::vector<double>> d_beh(r.seq.size(), std::vector<double>(item_dim, 0.0));
      std::vector<std::span<double>> d_beh_spans(d_beh.begin(), d_beh.end());
      target_attention_backward(attn_, items.lookup(target_id), tr.behaviors, tr.attn,
                                std::span<const double>(dz).subspan(off, attn_.output_dim()), d_target,
                                d_beh_spans);
      items.accumulate_grad(target_id, d_target);
      for (std::size_t j = 0; j < r.seq.size(); ++j) items.accumulate_grad(r.seq[j], d_beh[j]);
    }
  }

  /// AdaGrad on every trainable parameter (row-sparse for embeddings).
  void step(double lr) {
    for (auto& t : tables_) {
      if (t.param().trainable) {
        t.step(lr);
      } else {
        t.zero_grad();
      }
    }
    for (Parameter* p : dense_parameters()) {
      if (p->trainable) adagrad_step(*p, lr);
    }
  }

  void zero_grad() {
    for (auto& t : tables_) t.zero_grad();
    for (Parameter* p : dense_parameters()) p->zero_grad();
  }

  // -- Structural edits used by the baselines -------------------------------

  /// Rebuilds the model over `new_schema` with `aux_fields` (source tables to
  /// cache), keeping every existing tensor whose role survives. Input columns
  /// of the first layer that are new start at exactly zero, so the function
  /// computed by the model is unchanged until training moves them.
  SingleDomainModel with_inputs(const FeatureSchema& new_schema, const std::vector<AuxTable>& new_aux,
                                const FeatureSchema& data_schema, RngStream& rng) const {
    SingleDomainModel out;
    out.schema_ = new_schema;
    out.schema_.validate();
    out.cfg_ = cfg_;
    for (const auto& f : out.schema_.fields) {
      auto idx = schema_.index_of(f.name);
      if (idx && schema_.fields[*idx] == f) {
        out.tables_.push_back(tables_[*idx]);
      } else {
        out.tables_.emplace_back(f.name, f.vocab_size, f.embedding_dim);
        out.tables_.back().init_uniform(rng);
      }
    }
    out.attn_ = attn_;
    if (out.schema_.item_field().embedding_dim != attn_.item_dim()) {
      throw ValidationError("with_inputs: item embedding dim must not change");
    }
    out.aux_ = new_aux;
    for (auto& a : out.aux_) {
      a.table.param().trainable = false;
      a.table.param().name = "aux/" + a.table.field();
    }
    out.layers_ = layers_;
    out.head_ = head_;

    const auto old_segs = input_segments();
    const auto new_segs = out.input_segments();
    const DenseLayer& old_first = layers_.front();
    DenseLayer& first = out.layers_.front();
    first.w = Parameter(old_first.w.name, old_first.w.rows(), out.input_dim());
    first.w.trainable = old_first.w.trainable;
    for (const auto& ns : new_segs) {
      for (const auto& os : old_segs) {
        if (os.name != ns.name || os.width != ns.width) continue;
        for (std::size_t r = 0; r < first.w.rows(); ++r) {
          for (std::size_t c = 0; c < ns.width; ++c) {
            first.w.value(r, ns.offset + c) = old_first.w.value(r, os.offset + c);
            first.w.accum(r, ns.offset + c) = old_first.w.accum(r, os.offset + c);
          }
        }
      }
    }
    out.bind(data_schema);
    return out;
  }

 private:
  std::size_t field_index(std::string_view field) const {
    auto i = schema_.index_of(field);
    if (!i) throw ValidationError("model has no field '" + std::string(field) + "'");
    return *i;
  }

  std::vector<Parameter*> dense_parameters() {
    std::vector<Parameter*> out{&attn_.wq, &attn_.wk, &attn_.wv};
    for (auto& l : layers_) {
      out.push_back(&l.w);
      out.push_back(&l.b);
    }
    out.push_back(&head_.w);
    out.push_back(&head_.b);
    return out;
  }

  void build_layers(RngStream& rng) {
    std::size_t in = input_dim();
    layers_.clear();
    for (std::size_t l = 0; l < cfg_.widths.size(); ++l) {
      const std::size_t out = cfg_.widths[l];
      DenseLayer layer{Parameter("mlp/" + std::to_string(l) + "/w", out, in),
                       Parameter("mlp/" + std::to_string(l) + "/b", out, 1)};
      xavier(layer.w, rng);
      layers_.push_back(std::move(layer));
      in = out;
    }
    head_ = DenseLayer{Parameter("head/w", 1, in), Parameter("head/b", 1, 1)};
    xavier(head_.w, rng);
  }

  static void xavier(Parameter& p, RngStream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(p.rows() + p.cols()));
    for (double& x : p.value.data()) x = rng.uniform(-limit, limit);
  }

  friend struct ModelCodec;

  FeatureSchema schema_;
  TowerConfig cfg_;
  std::vector<EmbeddingTable> tables_;
  AttentionParams attn_;
  std::vector<DenseLayer> layers_;
  DenseLayer head_;
  std::vector<AuxTable> aux_;
  std::vector<std::size_t> columns_;
};

}  // namespace ctnet
