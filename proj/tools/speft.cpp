// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// speft: command-line front end.
//
//   speft init      --spec S --out base.ckpt
//   speft salience  --checkpoint C [--spec S] --metric M --out scores.bin
//   speft mask      --scores scores.bin --rho R --scope global|local --out mask.bin
//   speft train     S [--seeds N] [--out DIR]
//   speft eval      --checkpoint C [--adapter A] --spec S
//   speft report    RUN_DIR... [--out DIR] [--reference LABEL]
//   speft overhead  [--spec S | --checkpoint C] --steps T [--interval I] ...
//
// Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "speft/experiment.hpp"
#include "speft/report.hpp"
#include "speft/sparse_adapter.hpp"
#include "speft/trainer.hpp"

namespace {

using namespace speft;

// First expanded run of a spec; its model and dataset sections define the
// task used by salience, eval and overhead.
RunSpec first_run(const std::string& spec_path, std::uint64_t seed) {
  ExperimentSpec spec = ExperimentSpec::load(spec_path);
  spec.seeds = {seed};
  auto runs = spec.expand();
  if (runs.empty()) throw ConfigError(spec_path + ": spec expands to no runs");
  return runs.front();
}

int cmd_init(const std::string& spec_path, std::uint64_t seed, const std::string& out) {
  Materialized m = materialize(first_run(spec_path, seed));
  save_checkpoint(out, m.config, m.theta0);
  std::cout << Json{{"checkpoint", out}, {"params", m.theta0.total_count()},
                    {"adaptable", m.theta0.adaptable_count()}, {"fingerprint", fingerprint(m.theta0)}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_salience(const std::string& checkpoint, const std::string& spec_path, const std::string& metric_name,
                 int batches, int batch_size, std::uint64_t seed, const std::string& pattern, const std::string& out) {
  SalienceConfig sc;
  sc.metric = parse_metric(metric_name);
  sc.batches = batches;
  sc.batch_size = batch_size;
  sc.seed = seed;
  sc.target_pattern = pattern;
  if (!is_data_free(sc.metric) && spec_path.empty()) {
    throw ConfigError("metric '" + metric_name + "' requires data (pass --spec with a dataset section)");
  }
  auto [config, params] = load_checkpoint(checkpoint);
  Model model(config);
  SalienceScores scores;
  if (is_data_free(sc.metric)) {
    scores = compute_salience(model, params, static_cast<const Dataset*>(nullptr), sc);
  } else {
    Materialized m = materialize(first_run(spec_path, seed));
    scores = compute_salience(model, params, &m.data.train, sc);
  }
  save_scores(out, scores, params);
  std::cout << Json{{"scores", out}, {"metric", to_string(sc.metric)}, {"entries", scores.count()},
                    {"batches_used", scores.batches_used}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_mask(const std::string& scores_path, double rho, const std::string& scope_name, const std::string& out) {
  const MaskScope scope = parse_scope(scope_name);
  SalienceScores scores = load_scores(scores_path);
  SparsityMask mask = build_mask(scores, rho, scope);
  if (mask.nnz() == 0) {
    throw ConfigError("budget rounds to zero: rho " + std::to_string(rho) + " over " + std::to_string(scores.count()) +
                      " entries selects nothing");
  }
  save_mask(out, mask);
  Json layers = Json::array();
  for (const auto& l : mask.layers) layers.push_back({{"name", l.name}, {"nnz", l.nnz()}, {"numel", l.numel()}});
  std::cout << Json{{"mask", out}, {"nnz", mask.nnz()}, {"total", mask.total()}, {"layers", layers}}.dump() << '\n';
  return 0;
}

int cmd_train(const std::string& spec_path, int seeds, const std::string& out) {
  ExperimentSpec spec = ExperimentSpec::load(spec_path);
  if (seeds > 0) {
    spec.seeds.clear();
    for (int s = 0; s < seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (!out.empty()) spec.out_dir = out;
  const auto outcomes = execute_experiment(spec);
  int code = 0;
  for (const auto& o : outcomes) {
    std::cout << (o.ok ? "ok    " : "error ") << o.run_id << ' ' << o.dir.string();
    if (!o.ok) std::cout << ": " << o.error;
    std::cout << '\n';
    if (!o.ok && code == 0) code = o.exit_code;
  }
  std::cout << outcomes.size() << " run(s) under " << spec.out_dir.string() << '\n';
  return code;
}

int cmd_eval(const std::string& checkpoint, const std::string& adapter, const std::string& spec_path,
             std::uint64_t seed) {
  auto [config, params] = load_checkpoint(checkpoint);
  if (!adapter.empty()) params = apply_adapter(params, load_adapter(adapter));
  Model model(config);
  Materialized m = materialize(first_run(spec_path, seed));
  const EvalMetrics metrics = evaluate(model, params, m.data.eval);
  std::cout << metrics.to_json().dump() << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out, const std::string& reference) {
  std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
  std::vector<RunSummary> runs;
  for (const auto& d : collect_run_dirs(paths)) runs.push_back(load_run_summary(d));
  Report rep = build_report(runs, reference.empty() ? std::nullopt : std::optional<std::string>(reference));
  write_report(rep, out);
  std::cout << rep.to_csv();
  return 0;
}

int cmd_overhead(const std::string& spec_path, const std::string& checkpoint, const std::string& metric_name,
                 long steps, long interval, int batches, int batch_size, std::optional<double> rho,
                 const std::string& scope_name, int rank) {
  TrainConfig tc;
  tc.metric = parse_metric(metric_name);
  tc.steps = steps;
  tc.interval = interval;
  tc.salience.batches = batches;
  tc.salience.batch_size = batch_size;
  tc.scope = parse_scope(scope_name);
  ParamSet base;
  if (!checkpoint.empty()) {
    base = load_checkpoint(checkpoint).second;
  } else if (!spec_path.empty()) {
    base = materialize(first_run(spec_path, 0)).theta0;
  }
  Json extra = Json::object();
  if (rho) {
    tc.density = rho;
  } else if (base.size() > 0) {
    const ParityResult p = parity_density(base, rank, tc.scope);
    tc.density = p.density;
    extra = {{"density", p.density}, {"sparse_count", p.sparse_count}, {"low_rank_count", p.low_rank_count},
             {"rank", rank}};
  }
  OverheadReport r = overhead_report(tc, base);
  Json j = r.to_json();
  if (!extra.empty()) j["parity"] = extra;
  if (tc.density) j["density"] = *tc.density;
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse parameter-efficient fine-tuning engine"};
  app.require_subcommand(1);

  std::string spec, checkpoint, out, metric, scope = "global", scores_path, adapter, reference, pattern;
  std::uint64_t seed = 0;
  int batches = 64, batch_size = 16, seeds = 0, rank = 8;
  double rho = 0.0;
  long steps = 1, interval = -1;
  std::vector<std::string> dirs;
  std::string report_out = "report";

  auto* init = app.add_subcommand("init", "Write the base checkpoint described by a spec");
  init->add_option("--spec", spec, "Experiment spec (TOML or JSON)")->required();
  init->add_option("--seed", seed, "Seed");
  init->add_option("--out", out, "Checkpoint path")->required();

  auto* sal = app.add_subcommand("salience", "Compute salience scores");
  sal->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  sal->add_option("--spec", spec, "Spec providing the dataset (data-aware metrics)");
  sal->add_option("--metric", metric, "Metric name")->required();
  sal->add_option("--batches", batches, "Estimation batches");
  sal->add_option("--batch-size", batch_size, "Estimation batch size");
  sal->add_option("--seed", seed, "Sampling seed");
  sal->add_option("--pattern", pattern, "Regex over weight names");
  sal->add_option("--out", out, "Scores file")->required();

  auto* msk = app.add_subcommand("mask", "Build a top-rho mask from a scores file");
  msk->add_option("--scores", scores_path, "Scores file")->required();
  msk->add_option("--rho", rho, "Density in (0, 1]")->required();
  msk->add_option("--scope", scope, "global or local");
  msk->add_option("--out", out, "Mask file")->required();

  auto* trn = app.add_subcommand("train", "Run an experiment spec");
  trn->add_option("spec", spec, "Experiment spec (TOML or JSON)")->required();
  trn->add_option("--seeds", seeds, "Override: run seeds 0..N-1");
  trn->add_option("--out", out, "Override the output directory");

  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint (optionally with an adapter)");
  evl->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  evl->add_option("--adapter", adapter, "Adapter file");
  evl->add_option("--spec", spec, "Spec providing the eval dataset")->required();
  evl->add_option("--seed", seed, "Seed");

  auto* rpt = app.add_subcommand("report", "Summarize run directories");
  rpt->add_option("dirs", dirs, "Run or experiment directories")->required();
  rpt->add_option("--out", report_out, "Output directory (default: report)");
  rpt->add_option("--reference", reference, "Label of the reference row");

  std::optional<double> ovh_rho;
  auto* ovh = app.add_subcommand("overhead", "Salience and storage overhead accounting");
  ovh->add_option("--spec", spec, "Spec providing the model");
  ovh->add_option("--checkpoint", checkpoint, "Model checkpoint");
  ovh->add_option("--metric", metric, "Metric name")->default_val("gradient");
  ovh->add_option("--steps", steps, "Training steps T")->required();
  ovh->add_option("--interval", interval, "Mask interval I (<= 0 static)");
  ovh->add_option("--batches", batches, "Estimation batches");
  ovh->add_option("--batch-size", batch_size, "Estimation batch size");
  ovh->add_option("--rho", ovh_rho, "Density (default: parity with --rank)");
  ovh->add_option("--scope", scope, "global or local");
  ovh->add_option("--rank", rank, "Low-rank parity rank");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*init) return cmd_init(spec, seed, out);
    if (*sal) return cmd_salience(checkpoint, spec, metric, batches, batch_size, seed, pattern, out);
    if (*msk) return cmd_mask(scores_path, rho, scope, out);
    if (*trn) return cmd_train(spec, seeds, out);
    if (*evl) return cmd_eval(checkpoint, adapter, spec, seed);
    if (*rpt) return cmd_report(dirs, report_out, reference);
    if (*ovh) return cmd_overhead(spec, checkpoint, metric, steps, interval, batches, batch_size, ovh_rho, scope, rank);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
