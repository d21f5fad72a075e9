// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment specs bind a model, a dataset and a training config to an
// output directory. A [matrix] table expands into the cross product of its
// lists (metrics x scopes x intervals x ...), repeated over seeds. Each
// expanded run gets a deterministic id: the hash of its canonical JSON.
//
//   name = "ablation"
//   out_dir = "runs/ablation"
//   seeds = 3                      # or an explicit list [0, 4, 7]
//   [model]    architecture = "mlp", widths = [8, 32, 4], ...
//   [dataset]  kind = "teacher_student", ...
//   [train]    method = "speft", density = 0.01 or "parity", ...
//   [matrix]   metric = ["gradient", "magnitude"], scope = ["global", "local"]

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "speft/data.hpp"
#include "speft/model.hpp"
#include "speft/trainer.hpp"

namespace speft {

struct RunSpec {
  std::string label;   // human-readable cell name, without the seed
  std::uint64_t seed = 0;
  Json model;          // model section
  Json dataset;        // dataset section
  Json train;          // train section with matrix overrides applied

  /// Canonical JSON (sorted keys) of everything that determines the run.
  Json canonical() const;
  std::string run_id() const;
};

struct ExperimentSpec {
  std::string name = "experiment";
  std::filesystem::path out_dir = "runs";
  std::vector<std::uint64_t> seeds{0};
  Json model = Json::object();
  Json dataset = Json::object();
  Json train = Json::object();
  Json matrix = Json::object();

  static ExperimentSpec from_json(const Json& j);
  static ExperimentSpec load(const std::filesystem::path& path);

  /// One RunSpec per matrix cell and seed, in a stable order.
  std::vector<RunSpec> expand() const;
};

/// Model, base weights and data for a run.
struct Materialized {
  ModelConfig config;
  Model model;
  ParamSet theta0;
  DatasetSplits data;
};

/// Builds the dataset and the base model described by a run spec. The base
/// weights come from, in order: model.checkpoint, the upstream teacher
/// (model.init = "upstream_teacher"), or a seeded random init.
Materialized materialize(const RunSpec& run);

/// Resolves the train section into a TrainConfig, including
/// density = "parity" against a rank-lora_rank adapter on theta0.
TrainConfig resolve_train_config(const RunSpec& run, const ParamSet& theta0);

struct RunOutcome {
  std::string run_id;
  std::filesystem::path dir;
  bool ok = false;
  int exit_code = 0;
  std::string error;
};

/// Trains one run and writes its directory: manifest.json, runlog.jsonl,
/// metrics.json, final checkpoint and, for SPEFT, mask and adapter files.
RunOutcome execute_run(const RunSpec& run, const std::filesystem::path& out_dir);

/// Worker count: SPEFT_THREADS if set (>= 1), else hardware concurrency,
/// never more than `jobs`.
std::size_t worker_count(std::size_t jobs);

/// Executes every expanded run on up to worker_count() threads; each run
/// stays single-threaded. Writes an experiment manifest listing the runs.
std::vector<RunOutcome> execute_experiment(const ExperimentSpec& spec);

}  // namespace speft
