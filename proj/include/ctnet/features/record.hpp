// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctnet/features/schema.hpp"

namespace ctnet {

enum class Domain : std::uint8_t { Source, Target };

inline char domain_code(Domain d) { return d == Domain::Source ? 'S' : 'T'; }

/// One impression. `cats` is aligned with the dataset schema, so cats[0] is
/// the user id and cats[1] the item id. `seq` is most-recent-last.
struct Record {
  Domain domain = Domain::Target;
  std::uint32_t period = 0;
  std::vector<std::uint32_t> cats;
  std::vector<std::uint32_t> seq;
  std::uint8_t label = 0;

  std::uint32_t user_id() const { return cats.at(0); }
  std::uint32_t item_id() const { return cats.at(1); }

  friend bool operator==(const Record&, const Record&) = default;
};

inline void validate_record(const Record& r, const FeatureSchema& schema) {
  if (r.cats.size() != schema.fields.size()) {
    throw ValidationError("record has " + std::to_string(r.cats.size()) + " categorical values, schema has " +
                          std::to_string(schema.fields.size()));
  }
  for (std::size_t i = 0; i < r.cats.size(); ++i) {
    if (r.cats[i] >= schema.fields[i].vocab_size) {
      throw ValidationError("id " + std::to_string(r.cats[i]) + " out of range for field '" +
                            schema.fields[i].name + "' (vocab " + std::to_string(schema.fields[i].vocab_size) +
                            ")");
    }
  }
  if (r.seq.size() > schema.sequence_max_len) {
    throw ValidationError("sequence length " + std::to_string(r.seq.size()) + " exceeds sequence_max_len");
  }
  const std::uint32_t items = schema.item_field().vocab_size;
  for (const auto id : r.seq) {
    if (id >= items) throw ValidationError("sequence item id " + std::to_string(id) + " out of range");
  }
  if (r.label > 1) throw ValidationError("label must be 0 or 1");
}

}  // namespace ctnet
