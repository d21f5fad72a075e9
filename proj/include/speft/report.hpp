// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Comparison tables over finished run directories. Runs sharing a label
// (the same matrix cell) are pooled across seeds into mean and standard
// deviation. Every row lists the run ids and the eval step it summarizes.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "speft/container.hpp"

namespace speft {

struct RunSummary {
  std::string run_id;
  std::string label;
  std::uint64_t seed = 0;
  std::string method;
  std::string metric;
  std::string scope;
  long interval = -1;
  std::optional<double> density;
  long eval_step = 0;
  double eval_loss = 0.0;
  std::optional<double> eval_accuracy;
  Index trainable = 0;
};

/// Reads metrics.json and manifest.json from a run directory.
RunSummary load_run_summary(const std::filesystem::path& dir);

/// Expands the arguments: a run directory is taken as is; an experiment
/// directory (with experiment.json) contributes all of its runs. Throws
/// IoError naming every path that is neither.
std::vector<std::filesystem::path> collect_run_dirs(const std::vector<std::filesystem::path>& paths);

struct ReportRow {
  std::string label;
  std::string method;
  std::string metric;
  std::optional<double> density;
  std::size_t seeds = 0;
  double loss_mean = 0.0;
  double loss_std = 0.0;
  std::optional<double> accuracy_mean;
  std::optional<double> accuracy_std;
  /// loss_mean minus the reference row's loss_mean.
  double delta_loss = 0.0;
  Index trainable = 0;
  long eval_step = 0;
  std::vector<std::string> run_ids;
};

struct PlotPoint {
  double density = 0.0;
  std::string metric;
  double score = 0.0;  // accuracy if available, else eval loss
  std::string run_id;
};

struct Report {
  std::string reference;
  std::vector<ReportRow> rows;
  std::vector<PlotPoint> plot;

  Json to_json() const;
  std::string to_csv() const;
  std::string plot_csv() const;
};

/// Pools runs by label. The reference row for the delta column is
/// `reference` if given, else the first label in sorted order.
Report build_report(const std::vector<RunSummary>& runs, const std::optional<std::string>& reference = {});

/// Writes report.csv, report.json and plot_data.csv into `out_dir`.
void write_report(const Report& report, const std::filesystem::path& out_dir);

}  // namespace speft
