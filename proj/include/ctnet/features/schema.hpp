// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctnet {

/// Bad input data: schema violations, malformed files, out-of-range ids.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldSpec {
  std::string name;
  std::uint32_t vocab_size = 0;
  std::size_t embedding_dim = 0;

  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

inline constexpr std::string_view kUserField = "user_id";
inline constexpr std::string_view kItemField = "item_id";

/// Ordered categorical fields. user_id and item_id are mandatory and always
/// occupy columns 0 and 1.
struct FeatureSchema {
  std::vector<FieldSpec> fields;
  std::size_t sequence_max_len = 32;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;

  void validate() const {
    if (fields.size() < 2 || fields[0].name != kUserField || fields[1].name != kItemField) {
      throw ValidationError("schema: first two fields must be user_id and item_id");
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto& f = fields[i];
      if (f.name.empty()) throw ValidationError("schema: empty field name");
      if (f.vocab_size < 2) throw ValidationError("schema: field '" + f.name + "' needs vocab_size >= 2");
      if (f.embedding_dim < 1) throw ValidationError("schema: field '" + f.name + "' needs embedding_dim >= 1");
      for (std::size_t j = 0; j < i; ++j) {
        if (fields[j].name == f.name) throw ValidationError("schema: duplicate field '" + f.name + "'");
      }
    }
    if (sequence_max_len < 1) throw ValidationError("schema: sequence_max_len must be >= 1");
  }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].name == name) return i;
    }
    return std::nullopt;
  }

  const FieldSpec& field(std::string_view name) const {
    if (auto i = index_of(name)) return fields[*i];
    throw ValidationError("schema: unknown field '" + std::string(name) + "'");
  }

  const FieldSpec& item_field() const { return fields.at(1); }

  std::size_t embedding_width() const {
    std::size_t w = 0;
    for (const auto& f : fields) w += f.embedding_dim;
    return w;
  }

  /// Copy restricted to `names`, keeping this schema's order.
  FeatureSchema without(const std::vector<std::string>& names) const {
    FeatureSchema out;
    out.sequence_max_len = sequence_max_len;
    for (const auto& f : fields) {
      bool drop = false;
      for (const auto& n : names) drop = drop || n == f.name;
      if (!drop) out.fields.push_back(f);
    }
    return out;
  }

  /// True when every field here exists in `other` with identical vocab and dim.
  bool is_subset_of(const FeatureSchema& other) const {
    for (const auto& f : fields) {
      auto i = other.index_of(f.name);
      if (!i || other.fields[*i] != f) return false;
    }
    return true;
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view text, const std::string& context) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ValidationError(context + ": cannot parse '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace detail

/// `name=vocab:dim` per field, in declaration order, then `sequence_max_len=N`.
inline std::string schema_to_text(const FeatureSchema& s) {
  std::ostringstream os;
  for (const auto& f : s.fields) os << f.name << '=' << f.vocab_size << ':' << f.embedding_dim << '\n';
  os << "sequence_max_len=" << s.sequence_max_len << '\n';
  return os.str();
}

inline FeatureSchema schema_from_text(std::string_view text) {
  FeatureSchema s;
  bool saw_len = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const std::string ctx = "schema line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ValidationError(ctx + ": expected key=value");
    const std::string_view key = line.substr(0, eq);
    const std::string_view val = line.substr(eq + 1);
    if (key == "sequence_max_len") {
      s.sequence_max_len = detail::parse_number<std::size_t>(val, ctx);
      saw_len = true;
      continue;
    }
    const auto colon = val.find(':');
    if (colon == std::string_view::npos) throw ValidationError(ctx + ": expected vocab_size:embedding_dim");
    s.fields.push_back({std::string(key), detail::parse_number<std::uint32_t>(val.substr(0, colon), ctx),
                        detail::parse_number<std::size_t>(val.substr(colon + 1), ctx)});
  }
  if (!saw_len) throw ValidationError("schema: missing sequence_max_len");
  s.validate();
  return s;
}

inline void write_schema_file(const FeatureSchema& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << schema_to_text(s);
}

inline FeatureSchema read_schema_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return schema_from_text(ss.str());
}

}  // namespace ctnet
