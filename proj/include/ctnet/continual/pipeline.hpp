// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ctnet/continual/plan.hpp"
#include "ctnet/features/dataset_io.hpp"
#include "ctnet/features/split.hpp"
#include "ctnet/metrics/metrics.hpp"
#include "ctnet/model/checkpoint.hpp"
#include "ctnet/model/train.hpp"

namespace ctnet {

namespace fs = std::filesystem;

/// All records of one seed, per period and domain, aligned to `schema`.
struct SeedData {
  FeatureSchema schema;
  FeatureSchema source_schema;  ///< fields the source model uses
  std::vector<std::vector<Record>> source;
  std::vector<std::vector<Record>> target;
};

inline SynthConfig seed_config(const ExperimentPlan& plan, std::uint64_t seed) {
  SynthConfig c = plan.synth;
  c.periods = plan.periods;
  c.seed = seed;
  return c;
}

inline SeedData generate_seed_data(const ExperimentPlan& plan, std::uint64_t seed) {
  const SynthConfig cfg = seed_config(plan, seed);
  SynthData synth = synth_generate(cfg);
  SeedData d;
  d.schema = synth.schema;
  d.source_schema = synth_source_schema(cfg);
  for (auto& p : synth.source) d.source.push_back(std::move(p.records));
  for (auto& p : synth.target) d.target.push_back(std::move(p.records));
  return d;
}

inline fs::path seed_dir(const fs::path& root, std::uint64_t seed) { return root / ("seed_" + std::to_string(seed)); }

inline void write_seed_data(const SeedData& d, const fs::path& dir) {
  fs::create_directories(dir);
  write_schema_file(d.schema, (dir / "schema.txt").string());
  write_schema_file(d.source_schema, (dir / "source_schema.txt").string());
  for (std::size_t t = 0; t < d.target.size(); ++t) {
    write_dataset(d.source[t], d.schema, (dir / ("source_p" + std::to_string(t) + ".csv")).string());
    write_dataset(d.target[t], d.schema, (dir / ("target_p" + std::to_string(t) + ".csv")).string());
  }
}

inline SeedData read_seed_data(const fs::path& dir, std::size_t periods) {
  auto need = [](const fs::path& p) {
    if (!fs::exists(p)) throw ProtocolError("missing period data: " + p.string());
    return p.string();
  };
  SeedData d;
  d.schema = read_schema_file(need(dir / "schema.txt"));
  d.source_schema = read_schema_file(need(dir / "source_schema.txt"));
  if (!d.source_schema.is_subset_of(d.schema)) throw ValidationError("source schema is not a subset of the data schema");
  for (std::size_t t = 0; t < periods; ++t) {
    d.source.push_back(read_dataset(need(dir / ("source_p" + std::to_string(t) + ".csv")), d.schema));
    d.target.push_back(read_dataset(need(dir / ("target_p" + std::to_string(t) + ".csv")), d.schema));
  }
  return d;
}

inline SeedData seed_data(const ExperimentPlan& plan, std::uint64_t seed) {
  if (plan.data_dir.empty()) return generate_seed_data(plan, seed);
  return read_seed_data(seed_dir(plan.data_dir, seed), plan.periods);
}

// -- Pretraining ----------------------------------------------------------------

/// Random streams for model construction, disjoint from the data generator's.
enum class InitStream : std::uint64_t { Source = 1001, Base = 1002, Deploy = 1003 };

inline RngStream init_rng(std::uint64_t seed, InitStream s) {
  return RngStream(seed).split(static_cast<std::uint64_t>(s));
}

struct Pretrained {
  std::vector<SingleDomainModel> source;  ///< [t]: after source period t, t = 0..T-2
  std::vector<SingleDomainModel> base;    ///< [t]: after target period t, t = 0..deploy_period-1
};

/// One incremental training period, then rounding to checkpoint precision so
/// that every model state reachable at a boundary is exactly storable.
template <typename Model>
void train_period(Model& m, std::span<const Record> records, const ExperimentPlan& plan) {
  if (!records.empty()) train_stream(m, records, plan.batch_size, plan.learning_rate);
  round_to_storage(m);
}

inline Pretrained run_pretrain(const ExperimentPlan& plan, const SeedData& data, std::uint64_t seed) {
  plan.validate();
  if (data.source.size() < plan.periods || data.target.size() < plan.periods) {
    throw ProtocolError("missing period data: plan needs " + std::to_string(plan.periods) + " periods");
  }
  Pretrained out;
  RngStream src_rng = init_rng(seed, InitStream::Source);
  SingleDomainModel source(data.source_schema, plan.source_tower, data.schema, src_rng);
  round_to_storage(source);
  for (std::size_t t = 0; t + 1 < plan.periods; ++t) {
    train_period(source, data.source[t], plan);
    out.source.push_back(source);
  }
  const auto splits = split_prequential(data.target, plan.eval_fraction);
  RngStream base_rng = init_rng(seed, InitStream::Base);
  SingleDomainModel base(data.schema, plan.target_tower, data.schema, base_rng);
  round_to_storage(base);
  for (std::size_t t = 0; t < plan.deploy_period; ++t) {
    train_period(base, splits[t].train, plan);
    out.base.push_back(base);
  }
  return out;
}

inline void save_pretrained(const Pretrained& p, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < p.source.size(); ++t) {
    save_checkpoint(AnyModel(p.source[t]), (dir / ("source_p" + std::to_string(t) + ".ckpt")).string());
  }
  for (std::size_t t = 0; t < p.base.size(); ++t) {
    save_checkpoint(AnyModel(p.base[t]), (dir / ("base_p" + std::to_string(t) + ".ckpt")).string());
  }
}

inline Pretrained load_pretrained(const fs::path& dir, const ExperimentPlan& plan) {
  auto load_single = [](const fs::path& path) {
    if (!fs::exists(path)) throw ProtocolError("missing pretrain checkpoint: " + path.string());
    auto m = load_checkpoint(path.string());
    if (!std::holds_alternative<SingleDomainModel>(m)) throw CheckpointError(path.string() + " is not a single-domain model");
    return std::get<SingleDomainModel>(std::move(m));
  };
  Pretrained p;
  for (std::size_t t = 0; t + 1 < plan.periods; ++t) p.source.push_back(load_single(dir / ("source_p" + std::to_string(t) + ".ckpt")));
  for (std::size_t t = 0; t < plan.deploy_period; ++t) p.base.push_back(load_single(dir / ("base_p" + std::to_string(t) + ".ckpt")));
  return p;
}

// -- Methods ----------------------------------------------------------------------

struct BoundaryResult {
  std::size_t boundary = 0;
  MetricTriple metrics;
};

struct MethodRun {
  MethodSpec spec;
  std::uint64_t seed = 0;
  std::vector<BoundaryResult> boundaries;
};

/// Optional observers of a run. `evaluated` sees the exact model that
/// produced a boundary's metrics, together with that boundary's eval slice.
struct RunHooks {
  std::function<void(std::size_t boundary, std::span<const Record>)> on_eval;
  std::function<void(std::size_t period, std::span<const Record>)> on_train;
  std::function<void(std::size_t boundary, const AnyModel&, std::span<const Record>)> evaluated;
};

template <typename Model>
EvalBatch score_records(const Model& m, std::span<const Record> records) {
  EvalBatch b;
  const auto logits = predict_logits(m, records);
  b.scores.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    b.scores.push_back(sigmoid(logits[i]));
    b.labels.push_back(records[i].label);
    b.users.push_back(records[i].user_id());
  }
  return b;
}

inline EvalBatch score_records(const AnyModel& m, std::span<const Record> records) {
  return std::visit([&](const auto& x) { return score_records(x, records); }, m);
}

namespace detail {

/// Overwrites target embedding rows (values and AdaGrad state) for every
/// field the source model shares with identical vocab and width.
inline void copy_shared_embeddings(SingleDomainModel& target, const SingleDomainModel& source) {
  for (auto& t : target.tables()) {
    const auto idx = source.schema().index_of(t.field());
    if (!idx) continue;
    const auto& s = source.tables()[*idx];
    if (s.vocab() != t.vocab() || s.dim() != t.dim()) continue;
    t.param().value = s.param().value;
    t.param().accum = s.param().accum;
  }
}

inline std::vector<AuxTable> cached_identity_tables(const SingleDomainModel& source, const FeatureSchema& data_schema) {
  std::vector<AuxTable> aux;
  for (auto field : {kUserField, kItemField}) {
    const std::string name(field);
    aux.push_back(AuxTable{source.table(name), name, *data_schema.index_of(name)});
  }
  return aux;
}

inline void refresh_aux(SingleDomainModel& m, const SingleDomainModel& source) {
  for (auto& a : m.aux()) a.table.param().value = source.table(a.table.field()).param().value;
}

}  // namespace detail

/// Runs one method for one seed over boundaries deploy_period..periods-1.
/// At each boundary the model is scored on the period's eval slice first;
/// deployment (at deploy_period) or a Continual refresh happens next, then
/// training on the period's remaining records.
inline MethodRun run_method(const MethodSpec& spec, const ExperimentPlan& plan, const SeedData& data,
                            const Pretrained& pre, std::uint64_t seed, const RunHooks& hooks = {}) {
  plan.validate();
  if (!mode_allowed(spec.kind, spec.mode)) {
    throw ValidationError("method " + to_string(spec.kind) + " cannot run in mode " + to_string(spec.mode));
  }
  const std::size_t t0 = plan.deploy_period;
  const std::size_t T = plan.periods;
  if (pre.base.size() < t0 || pre.source.size() + 1 < T) throw ProtocolError("pretrain checkpoints are missing");
  const auto splits = split_prequential(data.target, plan.eval_fraction);
  RngStream deploy_rng = init_rng(seed, InitStream::Deploy);

  MethodRun run{spec, seed, {}};
  AnyModel model = spec.kind == MethodKind::SourceModel ? pre.source[t0 - 1] : pre.base[t0 - 1];

  for (std::size_t p = t0; p < T; ++p) {
    if (spec.kind == MethodKind::SourceModel) model = pre.source[p - 1];
    const auto eval = splits[p].eval;
    if (hooks.on_eval) hooks.on_eval(p, eval);
    run.boundaries.push_back({p, evaluate(score_records(model, eval))});
    if (hooks.evaluated) hooks.evaluated(p, model, eval);
    if (spec.kind == MethodKind::SourceModel || p + 1 == T) continue;

    const SingleDomainModel& latest_source = pre.source[p - 1];
    if (p == t0) {
      auto& base = std::get<SingleDomainModel>(model);
      switch (spec.kind) {
        case MethodKind::Base: break;
        case MethodKind::FinetuneEmbeddings: detail::copy_shared_embeddings(base, latest_source); break;
        case MethodKind::FinetuneAll: {
          SingleDomainModel m = latest_source.with_inputs(data.schema, {}, data.schema, deploy_rng);
          m.set_trainable(true);
          model = std::move(m);
          break;
        }
        case MethodKind::ExtraEmbedding:
          model = base.with_inputs(base.schema(), detail::cached_identity_tables(latest_source, data.schema),
                                   data.schema, deploy_rng);
          break;
        case MethodKind::CtnetGlu:
        case MethodKind::CtnetLinear:
          model = warm_start(base, latest_source,
                             spec.kind == MethodKind::CtnetGlu ? AdapterKind::Glu : AdapterKind::Linear, deploy_rng,
                             plan.share_sequence);
          break;
        case MethodKind::SourceModel: break;
      }
    } else if (spec.mode == TransferMode::Continual) {
      if (auto* c = std::get_if<CTNetModel>(&model)) {
        c->refresh_source(latest_source);
      } else {
        detail::refresh_aux(std::get<SingleDomainModel>(model), latest_source);
      }
    }

    const auto train = splits[p].train;
    if (hooks.on_train) hooks.on_train(p, train);
    std::visit([&](auto& m) { train_period(m, train, plan); }, model);
  }
  return run;
}

// -- Results ------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline constexpr std::string_view kResultsHeader = "method,mode,seed,boundary,auc,gauc,logloss";

inline std::string results_csv(std::span<const MethodRun> runs) {
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : runs) {
    for (const auto& b : r.boundaries) {
      out += to_string(r.spec.kind) + "," + to_string(r.spec.mode) + "," + std::to_string(r.seed) + "," +
             std::to_string(b.boundary) + "," + format_double(b.metrics.auc) + "," + format_double(b.metrics.gauc) +
             "," + format_double(b.metrics.logloss) + "\n";
    }
  }
  return out;
}

/// Inverse of results_csv.
inline std::vector<MethodRun> parse_results_csv(std::string_view text) {
  std::vector<MethodRun> runs;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line_no == 1) {
      if (line != kResultsHeader) throw ValidationError("results: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest = line;
    while (true) {
      const auto c = rest.find(',');
      cells.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    const std::string ctx = "results line " + std::to_string(line_no);
    if (cells.size() != 7) throw ValidationError(ctx + ": expected 7 columns");
    const MethodSpec spec{method_kind_from_string(cells[0]), transfer_mode_from_string(cells[1])};
    const auto seed = detail::parse_number<std::uint64_t>(cells[2], ctx);
    if (runs.empty() || !(runs.back().spec == spec) || runs.back().seed != seed) runs.push_back({spec, seed, {}});
    BoundaryResult b;
    b.boundary = detail::parse_number<std::size_t>(cells[3], ctx);
    b.metrics.auc = detail::parse_number<double>(cells[4], ctx);
    b.metrics.gauc = detail::parse_number<double>(cells[5], ctx);
    b.metrics.logloss = detail::parse_number<double>(cells[6], ctx);
    runs.back().boundaries.push_back(b);
  }
  return runs;
}

// -- Whole plan ---------------------------------------------------------------------

struct PlanOptions {
  std::size_t threads = 1;  ///< data generation only
  std::function<void(const std::string&)> log;
  /// Called once per seed after pretraining, before any method runs.
  std::function<void(std::uint64_t, const SeedData&, const Pretrained&)> pretrained;
  /// Per-run hooks factory; may return empty hooks.
  std::function<RunHooks(const MethodSpec&, std::uint64_t)> hooks;
};

/// Every method of the plan for every seed, in (seed, method) plan order.
/// Seeds are processed in chunks of `threads`, whose datasets are generated
/// concurrently; everything after generation runs sequentially.
inline std::vector<MethodRun> run_plan(const ExperimentPlan& plan, const PlanOptions& opt = {}) {
  plan.validate();
  const std::size_t chunk = std::max<std::size_t>(1, opt.threads);
  std::vector<MethodRun> runs;
  for (std::size_t begin = 0; begin < plan.seeds.size(); begin += chunk) {
    const std::size_t n = std::min(chunk, plan.seeds.size() - begin);
    std::vector<SeedData> data(n);
    if (n == 1) {
      data[0] = seed_data(plan, plan.seeds[begin]);
    } else {
      std::vector<std::exception_ptr> errors(n);
      std::vector<std::thread> workers;
      for (std::size_t i = 0; i < n; ++i) {
        workers.emplace_back([&, i] {
          try {
            data[i] = seed_data(plan, plan.seeds[begin + i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto seed = plan.seeds[begin + i];
      if (opt.log) opt.log("seed " + std::to_string(seed) + ": pretraining");
      const Pretrained pre = run_pretrain(plan, data[i], seed);
      if (opt.pretrained) opt.pretrained(seed, data[i], pre);
      for (const auto& spec : plan.methods) {
        if (opt.log) opt.log("seed " + std::to_string(seed) + ": " + spec.label());
        runs.push_back(run_method(spec, plan, data[i], pre, seed, opt.hooks ? opt.hooks(spec, seed) : RunHooks{}));
      }
      data[i] = SeedData{};
    }
  }
  return runs;
}

}  // namespace ctnet
