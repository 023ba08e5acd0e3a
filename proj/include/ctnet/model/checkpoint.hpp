// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ctnet/model/ctnet.hpp"

namespace ctnet {

// Binary layout (all integers little-endian):
//   "CTN1" | u16 version | u32 meta_len | meta_len bytes of key=value text
//   then per tensor: u32 name_len | name | u32 rows | u32 cols
//                    | rows*cols f32 values | rows*cols f32 accumulators

inline constexpr char kCheckpointMagic[4] = {'C', 'T', 'N', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using AnyModel = std::variant<SingleDomainModel, CTNetModel>;

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, double v) { put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated reading ") + what + " at byte offset " +
                            std::to_string(pos_));
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  template <typename T>
  T le(const char* what) {
    const auto s = take(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return static_cast<T>(u);
  }

  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(le<std::uint32_t>(what))); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> split_sizes(std::string_view s, const std::string& ctx) {
  std::vector<std::size_t> out;
  while (!s.empty()) {
    const auto c = s.find(',');
    out.push_back(parse_number<std::size_t>(s.substr(0, c), ctx));
    if (c == std::string_view::npos) break;
    s.remove_prefix(c + 1);
  }
  return out;
}

/// Ordered multimap view of the metadata text.
struct Meta {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(std::string k, std::string v) { entries.emplace_back(std::move(k), std::move(v)); }

  const std::string& get(const std::string& k) const {
    for (const auto& [key, val] : entries) {
      if (key == k) return val;
    }
    throw CheckpointError("checkpoint metadata lacks '" + k + "'");
  }
  std::vector<std::string> all(const std::string& k) const {
    std::vector<std::string> out;
    for (const auto& [key, val] : entries) {
      if (key == k) out.push_back(val);
    }
    return out;
  }

  std::string text() const {
    std::string s;
    for (const auto& [k, v] : entries) s += k + "=" + v + "\n";
    return s;
  }

  static Meta parse(std::string_view text) {
    Meta m;
    while (!text.empty()) {
      const auto nl = text.find('\n');
      const auto line = text.substr(0, nl);
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw CheckpointError("malformed checkpoint metadata line");
      m.add(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
      if (nl == std::string_view::npos) break;
      text.remove_prefix(nl + 1);
    }
    return m;
  }
};

}  // namespace detail

/// Serialises models to the checkpoint format and rebuilds them from it.
struct ModelCodec {
  static void describe(const SingleDomainModel& m, const std::string& pre, detail::Meta& meta) {
    for (const auto& f : m.schema_.fields) {
      meta.add(pre + "field", f.name + ":" + std::to_string(f.vocab_size) + ":" + std::to_string(f.embedding_dim));
    }
    meta.add(pre + "sequence_max_len", std::to_string(m.schema_.sequence_max_len));
    meta.add(pre + "widths", detail::join_sizes(m.cfg_.widths));
    meta.add(pre + "heads", std::to_string(m.cfg_.heads));
    meta.add(pre + "head_dim", std::to_string(m.cfg_.head_dim));
    meta.add(pre + "binding", detail::join_sizes(m.columns_));
    for (const auto& a : m.aux_) {
      meta.add(pre + "aux", a.table.field() + ":" + a.column_field + ":" + std::to_string(a.table.vocab()) + ":" +
                                std::to_string(a.table.dim()) + ":" + std::to_string(a.column));
    }
  }

  static std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    while (true) {
      const auto c = s.find(sep);
      out.emplace_back(s.substr(0, c));
      if (c == std::string_view::npos) break;
      s.remove_prefix(c + 1);
    }
    return out;
  }

  /// Skeleton with correctly shaped (zero) tensors; values come from the file.
  static SingleDomainModel skeleton(const detail::Meta& meta, const std::string& pre) {
    const std::string ctx = "checkpoint metadata";
    SingleDomainModel m;
    for (const auto& f : meta.all(pre + "field")) {
      const auto parts = split(f, ':');
      if (parts.size() != 3) throw CheckpointError("bad field entry '" + f + "'");
      m.schema_.fields.push_back({parts[0], detail::parse_number<std::uint32_t>(parts[1], ctx),
                                  detail::parse_number<std::size_t>(parts[2], ctx)});
    }
    m.schema_.sequence_max_len = detail::parse_number<std::size_t>(meta.get(pre + "sequence_max_len"), ctx);
    m.cfg_.widths = detail::split_sizes(meta.get(pre + "widths"), ctx);
    m.cfg_.heads = detail::parse_number<std::size_t>(meta.get(pre + "heads"), ctx);
    m.cfg_.head_dim = detail::parse_number<std::size_t>(meta.get(pre + "head_dim"), ctx);
    try {
      m.schema_.validate();
      m.cfg_.validate();
    } catch (const ValidationError& e) {
      throw CheckpointError(std::string("checkpoint metadata invalid: ") + e.what());
    }
    for (const auto& f : m.schema_.fields) m.tables_.emplace_back(f.name, f.vocab_size, f.embedding_dim);
    m.attn_ = AttentionParams(m.cfg_.heads, m.cfg_.head_dim, m.schema_.item_field().embedding_dim);
    for (const auto& a : meta.all(pre + "aux")) {
      const auto parts = split(a, ':');
      if (parts.size() != 5) throw CheckpointError("bad aux entry '" + a + "'");
      AuxTable aux{EmbeddingTable(parts[0], detail::parse_number<std::uint32_t>(parts[2], ctx),
                                  detail::parse_number<std::size_t>(parts[3], ctx), "aux/" + parts[0]),
                   parts[1], detail::parse_number<std::size_t>(parts[4], ctx)};
      aux.table.param().trainable = false;
      m.aux_.push_back(std::move(aux));
    }
    std::size_t in = m.input_dim();
    for (std::size_t l = 0; l < m.cfg_.widths.size(); ++l) {
      const std::size_t out = m.cfg_.widths[l];
      m.layers_.push_back(DenseLayer{Parameter("mlp/" + std::to_string(l) + "/w", out, in),
                                     Parameter("mlp/" + std::to_string(l) + "/b", out, 1)});
      in = out;
    }
    m.head_ = DenseLayer{Parameter("head/w", 1, in), Parameter("head/b", 1, 1)};
    m.columns_ = detail::split_sizes(meta.get(pre + "binding"), ctx);
    if (m.columns_.size() != m.tables_.size()) throw CheckpointError("binding does not match field count");
    return m;
  }

  static std::vector<std::pair<std::string, Parameter*>> tensors(AnyModel& model) {
    std::vector<std::pair<std::string, Parameter*>> out;
    std::visit([&](auto& m) { m.for_each_named_parameter([&](const std::string& n, Parameter& p) { out.emplace_back(n, &p); }); },
               model);
    return out;
  }

  static std::string encode(const AnyModel& model) {
    detail::Meta meta;
    if (const auto* s = std::get_if<SingleDomainModel>(&model)) {
      meta.add("model", "single");
      describe(*s, "", meta);
    } else {
      const auto& c = std::get<CTNetModel>(model);
      meta.add("model", "ctnet");
      meta.add("adapter_kind", to_string(c.adapters_.kind));
      meta.add("share_sequence", c.share_sequence_ ? "1" : "0");
      describe(c.source_, "source.", meta);
      describe(c.target_, "target.", meta);
    }
    auto params = tensors(const_cast<AnyModel&>(model));
    meta.add("tensors", std::to_string(params.size()));
    for (const auto& [name, p] : params) meta.add("trainable." + name, p->trainable ? "1" : "0");

    std::string out(kCheckpointMagic, 4);
    detail::put_le<std::uint16_t>(out, kCheckpointVersion);
    const std::string text = meta.text();
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out += text;
    for (const auto& [name, p] : params) {
      detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out += name;
      detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->rows()));
      detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p->cols()));
      for (const double v : p->value.data()) detail::put_f32(out, v);
      for (const double v : p->accum.data()) detail::put_f32(out, v);
    }
    return out;
  }

  static AnyModel decode(std::string_view bytes) {
    detail::ByteReader in(bytes);
    if (in.take(4, "magic") != std::string_view(kCheckpointMagic, 4)) throw CheckpointError("not a CTN1 checkpoint (bad magic)");
    const auto version = in.le<std::uint16_t>("version");
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto meta_len = in.le<std::uint32_t>("metadata length");
    const auto meta = detail::Meta::parse(in.take(meta_len, "metadata"));

    AnyModel model;
    const auto& kind = meta.get("model");
    if (kind == "single") {
      model = skeleton(meta, "");
    } else if (kind == "ctnet") {
      CTNetModel c;
      c.source_ = skeleton(meta, "source.");
      c.target_ = skeleton(meta, "target.");
      try {
        CTNetModel::check_compatible(c.source_, c.target_, meta.get("share_sequence") == "1");
        c.adapters_.kind = adapter_kind_from_string(meta.get("adapter_kind"));
      } catch (const ValidationError& e) {
        throw CheckpointError(std::string("checkpoint metadata invalid: ") + e.what());
      }
      c.share_sequence_ = meta.get("share_sequence") == "1";
      for (std::size_t l = 0; l <= c.target_.depth(); ++l) {
        const std::string base = "adapter/" + std::to_string(l);
        Adapter a;
        a.u1 = Parameter(base + "/u1", c.target_.width(l), c.source_.width(l));
        if (c.adapters_.kind == AdapterKind::Glu) a.u2 = Parameter(base + "/u2", c.target_.width(l), c.source_.width(l));
        c.adapters_.levels.push_back(std::move(a));
      }
      model = std::move(c);
    } else {
      throw CheckpointError("unknown model kind '" + kind + "'");
    }

    auto params = tensors(model);
    const auto expected = detail::parse_number<std::size_t>(meta.get("tensors"), "checkpoint metadata");
    if (expected != params.size()) throw CheckpointError("tensor count does not match architecture");
    for (const auto& [name, p] : params) {
      const auto name_len = in.le<std::uint32_t>("tensor name length");
      const auto got = in.take(name_len, "tensor name");
      if (got != name) {
        throw CheckpointError("expected tensor '" + name + "' at byte offset " + std::to_string(in.offset() - name_len) +
                              ", found '" + std::string(got) + "'");
      }
      const auto rows = in.le<std::uint32_t>("tensor rows");
      const auto cols = in.le<std::uint32_t>("tensor cols");
      if (rows != p->rows() || cols != p->cols()) {
        throw CheckpointError("tensor '" + name + "' has shape (" + std::to_string(rows) + "x" + std::to_string(cols) +
                              "), architecture needs " + p->value.shape_string());
      }
      for (double& v : p->value.data()) v = in.f32("tensor values");
      for (double& v : p->accum.data()) v = in.f32("tensor accumulators");
      p->trainable = meta.get("trainable." + name) == "1";
    }
    if (!in.at_end()) throw CheckpointError("trailing bytes after last tensor at byte offset " + std::to_string(in.offset()));
    return model;
  }
};

inline std::string encode_checkpoint(const AnyModel& m) { return ModelCodec::encode(m); }
inline AnyModel decode_checkpoint(std::string_view bytes) { return ModelCodec::decode(bytes); }

inline void save_checkpoint(const AnyModel& m, const std::string& path) {
  const std::string bytes = encode_checkpoint(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for '" + path + "'");
}

inline AnyModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

/// Rounds every value and accumulator to float32, i.e. to exactly what a
/// checkpoint stores. Afterwards save/load is lossless for this model.
inline void round_to_storage(SingleDomainModel& m) {
  m.for_each_parameter([](Parameter& p) { round_to_storage(p); });
}
inline void round_to_storage(CTNetModel& m) {
  m.for_each_named_parameter([](const std::string&, Parameter& p) { round_to_storage(p); });
}

}  // namespace ctnet
