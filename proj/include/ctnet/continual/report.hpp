// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctnet/continual/pipeline.hpp"

namespace ctnet {

inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// `points` is a metric difference times 100, printed like "+0.65%".
inline std::string format_points(double points) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f%%", points);
  std::string s(buf);
  if (s == "-0.00%") s = "+0.00%";
  return s;
}

/// e.g. 0.7548 against 0.7483 -> "+0.65%".
inline std::string format_delta(double value, double reference) { return format_points((value - reference) * 100.0); }

struct ReportRow {
  MethodSpec spec;
  std::size_t seeds = 0;
  std::vector<MetricTriple> median;  ///< aligned with CompareReport::boundaries
  std::vector<double> delta_auc;     ///< (median - reference median) * 100
  std::vector<double> delta_gauc;
  std::size_t wins = 0;  ///< boundaries where median GAUC beats the reference
  std::size_t losses = 0;
};

struct CompareReport {
  std::vector<std::size_t> boundaries;
  MethodSpec reference;
  std::vector<ReportRow> rows;  ///< ranked by median GAUC at the last boundary, best first

  const ReportRow* find(const MethodSpec& s) const {
    for (const auto& r : rows) {
      if (r.spec == s) return &r;
    }
    return nullptr;
  }

  std::string text() const {
    std::string out;
    char buf[128];
    auto header = [&](const char* metric) {
      std::snprintf(buf, sizeof buf, "%-4s %-32s", "rank", metric);
      out += buf;
      for (auto b : boundaries) {
        std::snprintf(buf, sizeof buf, " %17s", ("b" + std::to_string(b)).c_str());
        out += buf;
      }
      out += '\n';
    };
    auto block = [&](const char* metric, auto value, auto delta) {
      header(metric);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%-4zu %-32s", i + 1, rows[i].spec.label().c_str());
        out += buf;
        for (std::size_t k = 0; k < boundaries.size(); ++k) {
          const double v = value(rows[i].median[k]);
          if (delta) {
            std::snprintf(buf, sizeof buf, " %.4f (%s)", v, format_points(delta(rows[i], k)).c_str());
          } else {
            std::snprintf(buf, sizeof buf, " %17.4f", v);
          }
          out += buf;
        }
        out += '\n';
      }
      out += '\n';
    };
    using DeltaFn = double (*)(const ReportRow&, std::size_t);
    block("AUC (median)", [](const MetricTriple& m) { return m.auc; },
          DeltaFn([](const ReportRow& r, std::size_t k) { return r.delta_auc[k]; }));
    block("GAUC (median)", [](const MetricTriple& m) { return m.gauc; },
          DeltaFn([](const ReportRow& r, std::size_t k) { return r.delta_gauc[k]; }));
    block("logloss (median)", [](const MetricTriple& m) { return m.logloss; }, DeltaFn(nullptr));
    out += "GAUC vs " + reference.label() + " (wins-losses over boundaries):\n";
    for (const auto& r : rows) {
      if (r.spec == reference) continue;
      std::snprintf(buf, sizeof buf, "  %-32s %zu-%zu\n", r.spec.label().c_str(), r.wins, r.losses);
      out += buf;
    }
    return out;
  }
};

/// Medians across seeds per method and boundary, with deltas against the
/// Base run (or the first method when Base is absent).
inline CompareReport compare_report(std::span<const MethodRun> runs) {
  if (runs.empty()) throw std::invalid_argument("compare_report: no completed runs");
  CompareReport rep;
  std::vector<MethodSpec> order;
  std::map<std::string, std::vector<const MethodRun*>> by_method;
  for (const auto& r : runs) {
    if (!by_method.count(r.spec.label())) order.push_back(r.spec);
    by_method[r.spec.label()].push_back(&r);
    for (const auto& b : r.boundaries) {
      if (std::find(rep.boundaries.begin(), rep.boundaries.end(), b.boundary) == rep.boundaries.end()) {
        rep.boundaries.push_back(b.boundary);
      }
    }
  }
  std::sort(rep.boundaries.begin(), rep.boundaries.end());
  rep.reference = order.front();
  for (const auto& s : order) {
    if (s.kind == MethodKind::Base) rep.reference = s;
  }

  for (const auto& spec : order) {
    ReportRow row;
    row.spec = spec;
    const auto& list = by_method[spec.label()];
    row.seeds = list.size();
    for (auto b : rep.boundaries) {
      std::vector<double> a, g, l;
      for (const MethodRun* r : list) {
        for (const auto& x : r->boundaries) {
          if (x.boundary != b) continue;
          a.push_back(x.metrics.auc);
          g.push_back(x.metrics.gauc);
          l.push_back(x.metrics.logloss);
        }
      }
      if (a.empty()) throw std::invalid_argument("compare_report: " + spec.label() + " lacks boundary " + std::to_string(b));
      row.median.push_back({median(a), median(g), median(l)});
    }
    rep.rows.push_back(std::move(row));
  }
  const ReportRow ref = *rep.find(rep.reference);
  for (auto& row : rep.rows) {
    for (std::size_t k = 0; k < rep.boundaries.size(); ++k) {
      row.delta_auc.push_back((row.median[k].auc - ref.median[k].auc) * 100.0);
      row.delta_gauc.push_back((row.median[k].gauc - ref.median[k].gauc) * 100.0);
      if (row.spec == rep.reference) continue;
      if (row.median[k].gauc > ref.median[k].gauc) ++row.wins;
      if (row.median[k].gauc < ref.median[k].gauc) ++row.losses;
    }
  }
  std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const ReportRow& x, const ReportRow& y) {
    return x.median.back().gauc > y.median.back().gauc;
  });
  return rep;
}

}  // namespace ctnet
