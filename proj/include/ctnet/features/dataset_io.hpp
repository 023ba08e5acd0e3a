// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ctnet/features/record.hpp"

namespace ctnet {

// CSV layout: domain,period,<schema fields...>,seq,label. Since the schema
// starts with user_id,item_id the header reads
// domain,period,user_id,item_id,<other fields...>,seq,label.

inline std::string dataset_header(const FeatureSchema& schema) {
  std::string h = "domain,period";
  for (const auto& f : schema.fields) h += "," + f.name;
  h += ",seq,label";
  return h;
}

namespace detail {

inline void append_uint(std::string& out, std::uint64_t v) {
  char buf[24];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace detail

inline void write_dataset(std::span<const Record> records, const FeatureSchema& schema, std::ostream& out) {
  std::string line = dataset_header(schema);
  line += '\n';
  out << line;
  for (const auto& r : records) {
    validate_record(r, schema);
    line.clear();
    line += domain_code(r.domain);
    line += ',';
    detail::append_uint(line, r.period);
    for (const auto c : r.cats) {
      line += ',';
      detail::append_uint(line, c);
    }
    line += ',';
    for (std::size_t i = 0; i < r.seq.size(); ++i) {
      if (i) line += '|';
      detail::append_uint(line, r.seq[i]);
    }
    line += ',';
    line += r.label ? '1' : '0';
    line += '\n';
    out << line;
  }
}

inline void write_dataset(std::span<const Record> records, const FeatureSchema& schema, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_dataset(records, schema, out);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline std::vector<Record> read_dataset(std::istream& in, const FeatureSchema& schema) {
  std::vector<Record> records;
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ValidationError("line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != dataset_header(schema)) {
    throw ValidationError("line 1: header does not match schema (expected '" + dataset_header(schema) + "')");
  }
  const std::size_t n_cats = schema.fields.size();
  std::vector<std::string_view> cols;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string ctx = "line " + std::to_string(line_no);
    cols.clear();
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      cols.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cols.size() != n_cats + 4) {
      throw ValidationError(ctx + ": expected " + std::to_string(n_cats + 4) + " columns, got " +
                            std::to_string(cols.size()));
    }
    Record r;
    if (cols[0] == "S") {
      r.domain = Domain::Source;
    } else if (cols[0] == "T") {
      r.domain = Domain::Target;
    } else {
      throw ValidationError(ctx + ": domain must be S or T");
    }
    r.period = detail::parse_number<std::uint32_t>(cols[1], ctx);
    r.cats.resize(n_cats);
    for (std::size_t i = 0; i < n_cats; ++i) r.cats[i] = detail::parse_number<std::uint32_t>(cols[2 + i], ctx);
    std::string_view seq = cols[2 + n_cats];
    while (!seq.empty()) {
      const auto bar = seq.find('|');
      r.seq.push_back(detail::parse_number<std::uint32_t>(seq.substr(0, bar), ctx));
      if (bar == std::string_view::npos) break;
      seq.remove_prefix(bar + 1);
      if (seq.empty()) throw ValidationError(ctx + ": trailing '|' in seq");
    }
    const auto label = cols[3 + n_cats];
    if (label != "0" && label != "1") throw ValidationError(ctx + ": label must be 0 or 1");
    r.label = label == "1" ? 1 : 0;
    try {
      validate_record(r, schema);
    } catch (const ValidationError& e) {
      throw ValidationError(ctx + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<Record> read_dataset(const std::string& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_dataset(in, schema);
}

}  // namespace ctnet
