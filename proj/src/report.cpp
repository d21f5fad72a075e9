// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace speft {

namespace {

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
std::pair<double, double> mean_std(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  if (x.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(x.size() - 1))};
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

RunSummary load_run_summary(const std::filesystem::path& dir) {
  const Json metrics = read_json(dir / "metrics.json");
  const Json manifest = read_json(dir / "manifest.json");
  RunSummary r;
  try {
    r.run_id = manifest.at("run_id").get<std::string>();
    r.label = manifest.value("label", r.run_id);
    r.seed = manifest.value("seed", std::uint64_t{0});
    const Json& cfg = metrics.at("config");
    r.method = cfg.value("method", std::string("speft"));
    r.metric = r.method == "speft" ? cfg.value("metric", std::string()) : r.method;
    r.scope = cfg.value("scope", std::string());
    r.interval = cfg.value("interval", -1L);
    if (metrics.contains("density")) r.density = metrics.at("density").get<double>();
    r.eval_step = metrics.value("final_eval_step", 0L);
    const Json& ev = metrics.at("final_eval");
    r.eval_loss = ev.at("loss").get<double>();
    if (ev.contains("accuracy")) r.eval_accuracy = ev.at("accuracy").get<double>();
    r.trainable = metrics.value("trainable", Index{0});
  } catch (const Json::exception& e) {
    throw IoError(dir.string() + ": incomplete run record: " + e.what());
  }
  return r;
}

std::vector<std::filesystem::path> collect_run_dirs(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::filesystem::path> out;
  std::vector<std::string> missing;
  for (const auto& p : paths) {
    if (std::filesystem::exists(p / "metrics.json")) {
      out.push_back(p);
    } else if (std::filesystem::exists(p / "experiment.json")) {
      const Json e = read_json(p / "experiment.json");
      for (const auto& r : e.at("runs")) {
        if (r.value("status", std::string()) == "ok") out.push_back(p / r.at("run_id").get<std::string>());
      }
    } else {
      missing.push_back(p.string());
    }
  }
  if (!missing.empty()) {
    std::string msg = "not a run directory:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }
  return out;
}

Report build_report(const std::vector<RunSummary>& runs, const std::optional<std::string>& reference) {
  if (runs.empty()) throw ConfigError("report: no runs");
  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) groups[r.label].push_back(&r);
  Report rep;
  for (const auto& [label, members] : groups) {
    ReportRow row;
    row.label = label;
    row.method = members.front()->method;
    row.metric = members.front()->metric;
    row.density = members.front()->density;
    row.trainable = members.front()->trainable;
    row.eval_step = members.front()->eval_step;
    row.seeds = members.size();
    std::vector<double> loss;
    std::vector<double> acc;
    for (const auto* m : members) {
      loss.push_back(m->eval_loss);
      if (m->eval_accuracy) acc.push_back(*m->eval_accuracy);
      row.run_ids.push_back(m->run_id);
    }
    std::tie(row.loss_mean, row.loss_std) = mean_std(loss);
    if (acc.size() == members.size()) {
      auto [am, as] = mean_std(acc);
      row.accuracy_mean = am;
      row.accuracy_std = as;
    }
    rep.rows.push_back(std::move(row));
  }
  rep.reference = reference.value_or(rep.rows.front().label);
  auto ref = std::find_if(rep.rows.begin(), rep.rows.end(), [&](const ReportRow& r) { return r.label == rep.reference; });
  if (ref == rep.rows.end()) throw ConfigError("report: reference label '" + rep.reference + "' not found");
  const double base = ref->loss_mean;
  for (auto& r : rep.rows) r.delta_loss = r.loss_mean - base;

  for (const auto& r : runs) {
    if (!r.density) continue;
    rep.plot.push_back({*r.density, r.metric, r.eval_accuracy.value_or(r.eval_loss), r.run_id});
  }
  std::stable_sort(rep.plot.begin(), rep.plot.end(), [](const PlotPoint& a, const PlotPoint& b) {
    if (a.density != b.density) return a.density < b.density;
    if (a.metric != b.metric) return a.metric < b.metric;
    return a.run_id < b.run_id;
  });
  return rep;
}

Json Report::to_json() const {
  Json rs = Json::array();
  for (const auto& r : rows) {
    Json j = {{"label", r.label},
              {"method", r.method},
              {"metric", r.metric},
              {"seeds", r.seeds},
              {"loss_mean", r.loss_mean},
              {"loss_std", r.loss_std},
              {"delta_loss", r.delta_loss},
              {"trainable", r.trainable},
              {"eval_step", r.eval_step},
              {"run_ids", r.run_ids}};
    j["density"] = r.density ? Json(*r.density) : Json(nullptr);
    if (r.accuracy_mean) {
      j["accuracy_mean"] = *r.accuracy_mean;
      j["accuracy_std"] = *r.accuracy_std;
    }
    rs.push_back(j);
  }
  Json pts = Json::array();
  for (const auto& p : plot) pts.push_back({{"density", p.density}, {"metric", p.metric}, {"score", p.score}, {"run_id", p.run_id}});
  return {{"reference", reference}, {"rows", rs}, {"plot", pts}};
}

std::string Report::to_csv() const {
  std::ostringstream out;
  out << "label,method,metric,density,seeds,trainable,loss_mean,loss_std,delta_loss,accuracy_mean,accuracy_std,"
         "eval_step,run_ids\n";
  for (const auto& r : rows) {
    std::string ids;
    for (const auto& id : r.run_ids) ids += (ids.empty() ? "" : ";") + id;
    out << csv_field(r.label) << ',' << r.method << ',' << r.metric << ',' << (r.density ? num(*r.density) : "") << ','
        << r.seeds << ',' << r.trainable << ',' << num(r.loss_mean) << ',' << num(r.loss_std) << ','
        << num(r.delta_loss) << ',' << (r.accuracy_mean ? num(*r.accuracy_mean) : "") << ','
        << (r.accuracy_std ? num(*r.accuracy_std) : "") << ',' << r.eval_step << ',' << ids << '\n';
  }
  return out.str();
}

std::string Report::plot_csv() const {
  std::ostringstream out;
  out << "density,metric,score,run_id\n";
  for (const auto& p : plot) out << num(p.density) << ',' << p.metric << ',' << num(p.score) << ',' << p.run_id << '\n';
  return out.str();
}

void write_report(const Report& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "report.csv", report.to_csv());
  write_text(out_dir / "report.json", report.to_json().dump(2));
  write_text(out_dir / "plot_data.csv", report.plot_csv());
}

}  // namespace speft
