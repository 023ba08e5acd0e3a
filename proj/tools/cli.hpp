// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ctnet/continual/report.hpp"
#include "ctnet/model/grad_suite.hpp"

namespace ctnet::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kValidation = 2, kNumerical = 3 };

struct Globals {
  std::string out_dir = "out";
  bool quiet = false;
  std::size_t threads = 1;
};

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class App {
 public:
  App(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int main(int argc, const char* const* argv) {
    CLI::App app{"Continual transfer CTR experiments", "ctnet"};
    app.require_subcommand(1);
    app.add_option("--out-dir", g_.out_dir, "Directory for all outputs");
    app.add_flag("--quiet", g_.quiet, "Suppress progress and tables");
    app.add_option("--threads", g_.threads, "Parallel dataset generation across seeds")->check(CLI::PositiveNumber);

    std::string plan_path;
    auto* gen = app.add_subcommand("gen-data", "Write synthetic datasets for every plan seed");
    gen->add_option("plan", plan_path, "Plan file (JSON)")->required();

    std::optional<std::uint64_t> seed;
    auto* pretrain = app.add_subcommand("pretrain", "Train source and base target models, save checkpoints");
    pretrain->add_option("plan", plan_path, "Plan file (JSON)")->required();
    pretrain->add_option("--seed", seed, "Single seed (default: all plan seeds)");

    std::string method;
    std::string mode;
    bool save_checkpoints = false;
    auto* run = app.add_subcommand("run", "Run one method for one seed");
    run->add_option("plan", plan_path, "Plan file (JSON)")->required();
    run->add_option("--method", method, "base|source_model|finetune_embeddings|finetune_all|extra_embedding|ctnet|ctnet_linear")
        ->required();
    run->add_option("--mode", mode, "none|one_time|continual (default: the method's only mode)");
    run->add_option("--seed", seed, "Seed")->required();
    run->add_flag("--save-checkpoints", save_checkpoints, "Save the evaluated model and eval slice per boundary");

    auto* compare = app.add_subcommand("compare", "Run all plan methods and seeds, write results and report");
    compare->add_option("plan", plan_path, "Plan file (JSON)")->required();

    double tolerance = 1e-4;
    auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient suite at toy dimensions");
    grad->add_option("--tolerance", tolerance, "Maximum relative error");

    std::string ckpt;
    std::string data;
    std::string schema;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a dataset CSV");
    eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
    eval->add_option("--data", data, "Dataset CSV")->required();
    eval->add_option("--schema", schema, "Schema file (default: schema.txt next to the data)");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e, out_, err_);
      return rc == 0 ? kOk : kUsage;
    }

    try {
      if (*gen) return gen_data(load_plan(plan_path));
      if (*pretrain) return run_pretrain_cmd(load_plan(plan_path), seed);
      if (*run) return run_cmd(load_plan(plan_path), method, mode, *seed, save_checkpoints);
      if (*compare) return compare_cmd(load_plan(plan_path));
      if (*grad) return grad_check_cmd(tolerance);
      if (*eval) return eval_cmd(ckpt, data, schema);
    } catch (const NonFiniteError& e) {
      err_ << "numerical failure: " << e.what() << "\n";
      return kNumerical;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return kValidation;
    }
    return kUsage;
  }

 private:
  void log(const std::string& s) {
    if (!g_.quiet) err_ << s << "\n";
  }

  fs::path out() const { return g_.out_dir; }

  int gen_data(const ExperimentPlan& plan) {
    ExperimentPlan p = plan;
    p.data_dir.clear();
    const auto& seeds = p.seeds;
    std::vector<std::exception_ptr> errors(seeds.size());
    auto work = [&](std::size_t i) {
      try {
        write_seed_data(generate_seed_data(p, seeds[i]), seed_dir(out() / "data", seeds[i]));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    const std::size_t chunk = std::max<std::size_t>(1, g_.threads);
    for (std::size_t b = 0; b < seeds.size(); b += chunk) {
      std::vector<std::thread> pool;
      for (std::size_t i = b; i < std::min(seeds.size(), b + chunk); ++i) pool.emplace_back(work, i);
      for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    log("wrote datasets for " + std::to_string(seeds.size()) + " seed(s) under " + (out() / "data").string());
    return kOk;
  }

  fs::path pretrain_dir(std::uint64_t seed) const { return seed_dir(out() / "pretrain", seed); }

  int run_pretrain_cmd(const ExperimentPlan& plan, std::optional<std::uint64_t> only) {
    for (auto seed : plan.seeds) {
      if (only && *only != seed) continue;
      log("seed " + std::to_string(seed) + ": pretraining");
      const SeedData d = seed_data(plan, seed);
      save_pretrained(run_pretrain(plan, d, seed), pretrain_dir(seed));
    }
    return kOk;
  }

  static TransferMode resolve_mode(MethodKind k, const std::string& mode) {
    if (!mode.empty()) return transfer_mode_from_string(mode);
    std::optional<TransferMode> only;
    for (auto m : {TransferMode::NoTransfer, TransferMode::OneTime, TransferMode::Continual}) {
      if (!mode_allowed(k, m)) continue;
      if (only) throw ValidationError("method " + to_string(k) + " needs --mode (one_time or continual)");
      only = m;
    }
    return *only;
  }

  int run_cmd(const ExperimentPlan& plan, const std::string& method, const std::string& mode, std::uint64_t seed,
              bool save) {
    const MethodKind kind = method_kind_from_string(method);
    const MethodSpec spec{kind, resolve_mode(kind, mode)};
    if (!mode_allowed(spec.kind, spec.mode)) {
      throw ValidationError("method " + method + " cannot run in mode " + to_string(spec.mode));
    }
    const SeedData d = seed_data(plan, seed);
    Pretrained pre;
    if (fs::exists(pretrain_dir(seed))) {
      log("seed " + std::to_string(seed) + ": loading pretrain checkpoints");
      pre = load_pretrained(pretrain_dir(seed), plan);
    } else {
      log("seed " + std::to_string(seed) + ": pretraining");
      pre = run_pretrain(plan, d, seed);
    }
    const std::string tag = to_string(spec.kind) + "_" + to_string(spec.mode) + "_seed" + std::to_string(seed);
    RunHooks hooks;
    if (save) {
      const fs::path dir = out() / "checkpoints" / tag;
      fs::create_directories(dir);
      write_schema_file(d.schema, (dir / "schema.txt").string());
      hooks.evaluated = [&, dir](std::size_t b, const AnyModel& m, std::span<const Record> eval) {
        save_checkpoint(m, (dir / ("b" + std::to_string(b) + ".ckpt")).string());
        write_dataset(eval, d.schema, (dir / ("eval_b" + std::to_string(b) + ".csv")).string());
      };
    }
    log("seed " + std::to_string(seed) + ": " + spec.label());
    const MethodRun r = run_method(spec, plan, d, pre, seed, hooks);
    const std::string csv = results_csv(std::span<const MethodRun>(&r, 1));
    write_text(out() / ("results_" + tag + ".csv"), csv);
    if (!g_.quiet) out_ << csv;
    return kOk;
  }

  int compare_cmd(const ExperimentPlan& plan) {
    PlanOptions opt;
    opt.threads = g_.threads;
    opt.log = [this](const std::string& s) { log(s); };
    const auto runs = run_plan(plan, opt);
    const auto report = compare_report(runs).text();
    write_text(out() / "results.csv", results_csv(runs));
    write_text(out() / "report.txt", report);
    if (!g_.quiet) out_ << report;
    return kOk;
  }

  int grad_check_cmd(double tolerance) {
    bool ok = true;
    double worst = 0.0;
    for (const auto& r : run_grad_suite(tolerance)) {
      std::size_t checked = 0;
      for (const auto& e : r.report.entries) checked += e.checked;
      char buf[160];
      std::snprintf(buf, sizeof buf, "%-14s tensors=%zu entries=%zu max_rel_error=%.3e %s\n", r.model.c_str(),
                    r.report.entries.size(), checked, r.report.max_rel_error(), r.report.passed() ? "ok" : "FAIL");
      out_ << buf;
      ok = ok && r.report.passed();
      worst = std::max(worst, r.report.max_rel_error());
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max relative error %.3e (tolerance %.1e)\n", worst, tolerance);
    out_ << buf;
    return ok ? kOk : kNumerical;
  }

  int eval_cmd(const std::string& ckpt, const std::string& data, std::string schema) {
    if (schema.empty()) schema = (fs::path(data).parent_path() / "schema.txt").string();
    const FeatureSchema s = read_schema_file(schema);
    const auto records = read_dataset(data, s);
    const AnyModel m = load_checkpoint(ckpt);
    const MetricTriple t = evaluate(score_records(m, records));
    out_ << "auc,gauc,logloss\n"
         << format_double(t.auc) << "," << format_double(t.gauc) << "," << format_double(t.logloss) << "\n";
    return kOk;
  }

  std::ostream& out_;
  std::ostream& err_;
  Globals g_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return App(out, err).main(argc, argv);
}

}  // namespace ctnet::cli
