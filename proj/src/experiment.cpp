// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "speft/toml.hpp"

namespace speft {

namespace {

// Train keys that only mean something for the sparse method.
const std::vector<std::string> kSparseOnlyKeys{"metric", "scope", "density", "interval", "salience"};

std::string scalar_text(const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

Json RunSpec::canonical() const {
  Json t = train;
  const bool sparse = t.value("method", std::string("speft")) == "speft";
  if (!sparse) {
    for (const auto& k : kSparseOnlyKeys) t.erase(k);
  }
  t["seed"] = seed;
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  return {{"model", model}, {"dataset", dataset}, {"train", t}};
}

std::string RunSpec::run_id() const { return hex64(fnv1a64(canonical().dump())); }

ExperimentSpec ExperimentSpec::from_json(const Json& j) {
  ExperimentSpec s;
  try {
    s.name = j.value("name", s.name);
    s.out_dir = j.value("out_dir", s.out_dir.string());
    if (j.contains("seeds")) {
      const auto& seeds = j.at("seeds");
      s.seeds.clear();
      if (seeds.is_number_integer()) {
        const auto n = seeds.get<std::int64_t>();
        if (n < 1) throw ConfigError("seeds must be >= 1");
        for (std::int64_t i = 0; i < n; ++i) s.seeds.push_back(static_cast<std::uint64_t>(i));
      } else {
        s.seeds = seeds.get<std::vector<std::uint64_t>>();
      }
      if (s.seeds.empty()) throw ConfigError("seeds list is empty");
    }
    s.model = j.value("model", Json::object());
    s.dataset = j.value("dataset", Json::object());
    s.train = j.value("train", Json::object());
    s.matrix = j.value("matrix", Json::object());
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("experiment spec: ") + e.what());
  }
  if (!s.dataset.contains("kind")) throw ConfigError("experiment spec: dataset.kind is required");
  for (const auto& [k, v] : s.matrix.items()) {
    if (!v.is_array() || v.empty()) throw ConfigError("matrix entry '" + k + "' must be a non-empty list");
  }
  return s;
}

ExperimentSpec ExperimentSpec::load(const std::filesystem::path& path) {
  ExperimentSpec s = from_json(load_config_file(path));
  const auto base = path.parent_path().empty() ? std::filesystem::current_path() : std::filesystem::absolute(path.parent_path());
  if (s.dataset.contains("path")) s.dataset["path"] = resolve(base, s.dataset["path"].get<std::string>()).string();
  if (s.model.contains("checkpoint")) {
    s.model["checkpoint"] = resolve(base, s.model["checkpoint"].get<std::string>()).string();
  }
  return s;
}

std::vector<RunSpec> ExperimentSpec::expand() const {
  // Cross product in sorted key order; the last key varies fastest.
  std::vector<std::pair<std::string, Json>> axes;
  for (const auto& [k, v] : matrix.items()) axes.emplace_back(k, v);
  std::vector<std::size_t> pos(axes.size(), 0);
  std::vector<RunSpec> out;
  std::set<std::string> seen;
  while (true) {
    Json t = train;
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const Json& v = axes[a].second[pos[a]];
      t[axes[a].first] = v;
      if (!label.empty()) label += ",";
      label += axes[a].first + "=" + scalar_text(v);
    }
    if (label.empty()) label = name;
    const bool sparse = t.value("method", std::string("speft")) == "speft";
    for (auto seed : seeds) {
      RunSpec r;
      r.label = sparse ? label : t.value("method", std::string());
      r.seed = seed;
      r.model = model;
      r.dataset = dataset;
      r.train = t;
      if (!sparse) {
        for (const auto& k : kSparseOnlyKeys) r.train.erase(k);
      }
      if (seen.insert(r.run_id()).second) out.push_back(std::move(r));
    }
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++pos[a] < axes[a].second.size()) break;
      pos[a] = 0;
      if (a == 0) return out;
    }
    if (axes.empty()) return out;
  }
}

Materialized materialize(const RunSpec& run) {
  const Json& ds = run.dataset;
  const std::string kind = ds.value("kind", std::string());
  Json mj = run.model;
  DatasetSplits data;
  std::optional<ParamSet> upstream;
  try {
    if (kind == "teacher_student") {
      TeacherStudentConfig tc;
      if (ds.contains("dims")) tc.dims = ds.at("dims").get<std::vector<int>>();
      if (ds.contains("activation")) tc.activation = parse_activation(ds.at("activation").get<std::string>());
      tc.teacher_seed = ds.value("teacher_seed", tc.teacher_seed);
      tc.data_seed = ds.value("data_seed", tc.data_seed);
      tc.noise = ds.value("noise", tc.noise);
      tc.n = ds.value("n", tc.n);
      tc.eval_fraction = ds.value("eval_fraction", tc.eval_fraction);
      TeacherStudentTask task = gen_teacher_student(tc);
      if (ds.contains("shift")) {
        const auto& sh = ds.at("shift");
        ParamSet shifted = shift_teacher(task.teacher, sh.value("fraction", 0.1), sh.value("scale", 1.0),
                                         sh.value("seed", std::uint64_t{3}));
        data = label_with_teacher(task.teacher_config, shifted, tc);
      } else {
        data = std::move(task.data);
      }
      upstream = std::move(task.teacher);
      if (!mj.contains("architecture")) mj["architecture"] = "mlp";
      if (!mj.contains("widths")) mj["widths"] = tc.dims;
      if (!mj.contains("activation")) mj["activation"] = to_string(tc.activation);
    } else if (kind == "char_lm") {
      const int seq = ds.value("seq_len", 16);
      Dataset all = ds.contains("text") ? gen_char_lm_corpus(ds.at("text").get<std::string>(), seq)
                                        : gen_char_lm_corpus_file(ds.at("path").get<std::string>(), seq);
      data = split_dataset(all, ds.value("eval_fraction", 0.1), ds.value("seed", std::uint64_t{0}));
      mj["architecture"] = "transformer_lm";
      mj["vocab"] = all.metadata.at("vocab").size();
      if (!mj.contains("seq_len")) mj["seq_len"] = seq;
    } else if (kind == "jsonl") {
      Dataset all = load_jsonl_sequences(ds.at("path").get<std::string>());
      data = split_dataset(all, ds.value("eval_fraction", 0.1), ds.value("seed", std::uint64_t{0}));
      if (!mj.contains("architecture")) mj["architecture"] = "transformer_lm";
    } else if (kind == "sequence_classification") {
      const int vocab = ds.value("vocab", 16);
      const int seq = ds.value("seq_len", 8);
      const int classes = ds.value("n_classes", 2);
      Dataset all = gen_sequence_classification(vocab, seq, classes, ds.value("n", std::size_t{512}),
                                                ds.value("seed", std::uint64_t{0}));
      data = split_dataset(all, ds.value("eval_fraction", 0.2), ds.value("seed", std::uint64_t{0}));
      if (!mj.contains("architecture")) mj["architecture"] = "transformer_encoder";
      if (!mj.contains("vocab")) mj["vocab"] = vocab;
      if (!mj.contains("seq_len")) mj["seq_len"] = seq;
      if (!mj.contains("n_classes")) mj["n_classes"] = classes;
    } else if (kind == "csv") {
      CsvSchema schema;
      schema.label_column = ds.value("label_column", schema.label_column);
      schema.n_classes = ds.value("n_classes", schema.n_classes);
      schema.eval_fraction = ds.value("eval_fraction", schema.eval_fraction);
      schema.seed = ds.value("seed", schema.seed);
      data = load_csv_classification(ds.at("path").get<std::string>(), schema);
      if (!mj.contains("architecture")) mj["architecture"] = "mlp";
      if (!mj.contains("task")) mj["task"] = "classification";
    } else {
      throw ConfigError("unknown dataset kind '" + kind +
                        "' (expected teacher_student, char_lm, jsonl, sequence_classification or csv)");
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("dataset section: ") + e.what());
  }

  if (mj.contains("checkpoint")) {
    auto [config, params] = load_checkpoint(mj.at("checkpoint").get<std::string>());
    Model model(config);
    return {config, std::move(model), std::move(params), std::move(data)};
  }
  ModelConfig config = ModelConfig::from_json(mj);
  const std::string init = mj.value("init", std::string("random"));
  if (init == "upstream_teacher") {
    if (!upstream) throw ConfigError("model.init = upstream_teacher needs a teacher_student dataset");
    if (config.architecture != Architecture::mlp) throw ConfigError("upstream_teacher init needs an mlp model");
    Model model(config);
    return {config, std::move(model), std::move(*upstream), std::move(data)};
  }
  if (init != "random") throw ConfigError("unknown model.init '" + init + "' (expected random or upstream_teacher)");
  config.seed = mix_seed(config.seed, run.seed);
  auto [model, params] = build_model(config, config.seed);
  return {config, std::move(model), std::move(params), std::move(data)};
}

TrainConfig resolve_train_config(const RunSpec& run, const ParamSet& theta0) {
  Json t = run.train;
  t["seed"] = run.seed;
  const bool parity = t.contains("density") && t.at("density").is_string();
  if (parity && t.at("density").get<std::string>() != "parity") {
    throw ConfigError("density must be a number or \"parity\"");
  }
  if (parity) t.erase("density");
  TrainConfig c = TrainConfig::from_json(t);
  if (parity) {
    c.density = parity_density(theta0, c.lora_rank, c.scope, c.target_pattern).density;
  }
  c.validate();
  return c;
}

namespace {

// Adapter relative to theta0. With a static mask the trained delta is
// exported as is; with refreshes the deltas were merged along the way, so
// the file carries final - theta0 on the union of the touched coordinates.
void export_run_adapter(const std::filesystem::path& path, const ParamSet& theta0, const TrainResult& r) {
  if (r.log.refreshes.size() <= 1) {
    export_adapter(path, r.mask, r.delta, theta0);
    return;
  }
  SparsityMask mask = r.mask;
  SparseDelta delta;
  std::vector<DeltaLayer> layers;
  for (auto& lm : mask.layers) {
    const Matrix& a = theta0[lm.param_index].value;
    const Matrix& b = r.final_params[lm.param_index].value;
    std::vector<std::uint64_t> idx;
    for (Index k = 0; k < a.size(); ++k) {
      if (a.data()[k] != b.data()[k]) idx.push_back(static_cast<std::uint64_t>(k));
    }
    lm.indices = idx;
    DeltaLayer d{lm.name, lm.param_index, lm.rows, lm.cols, idx, Vector(static_cast<Index>(idx.size()))};
    for (std::size_t i = 0; i < idx.size(); ++i) d.values[static_cast<Index>(i)] = b.data()[idx[i]] - a.data()[idx[i]];
    layers.push_back(std::move(d));
  }
  mask.density = static_cast<double>(mask.nnz()) / static_cast<double>(std::max<Index>(mask.total(), 1));
  export_adapter(path, mask, SparseDelta(std::move(layers)), theta0);
}

}  // namespace

RunOutcome execute_run(const RunSpec& run, const std::filesystem::path& out_dir) {
  RunOutcome o;
  o.run_id = run.run_id();
  o.dir = out_dir / o.run_id;
  Json manifest = {{"run_id", o.run_id}, {"label", run.label}, {"seed", run.seed}, {"spec", run.canonical()}};
  try {
    std::filesystem::create_directories(o.dir);
  } catch (const std::filesystem::filesystem_error& e) {
    o.exit_code = 4;
    o.error = e.what();
    return o;
  }
  std::vector<std::string> files;
  try {
    Materialized m = materialize(run);
    TrainConfig config = resolve_train_config(run, m.theta0);
    const ParamSet theta0_copy = m.theta0;
    TrainResult r = speft::run(config, m.model, m.theta0, m.data);
    write_text(o.dir / "runlog.jsonl", r.log.to_jsonl());
    files.push_back("runlog.jsonl");
    Json metrics = r.log.summary();
    metrics["run_id"] = o.run_id;
    metrics["label"] = run.label;
    metrics["seed"] = run.seed;
    metrics["final_eval_step"] = config.steps;
    if (config.density) metrics["density"] = *config.density;
    write_text(o.dir / "metrics.json", metrics.dump(2));
    files.push_back("metrics.json");
    save_checkpoint(o.dir / "final.ckpt", m.config, r.final_params);
    files.push_back("final.ckpt");
    save_checkpoint(o.dir / "base.ckpt", m.config, theta0_copy);
    files.push_back("base.ckpt");
    if (config.method == Method::speft) {
      save_mask(o.dir / "mask.bin", r.mask);
      export_run_adapter(o.dir / "adapter.bin", theta0_copy, r);
      files.push_back("mask.bin");
      files.push_back("adapter.bin");
    }
    manifest["train_config"] = config.to_json();
    manifest["status"] = "ok";
    o.ok = true;
  } catch (const ConfigError& e) {
    o.exit_code = 2;
    o.error = e.what();
  } catch (const DivergenceError& e) {
    o.exit_code = 3;
    o.error = e.what();
  } catch (const IoError& e) {
    o.exit_code = 4;
    o.error = e.what();
  } catch (const std::exception& e) {
    o.exit_code = 1;
    o.error = e.what();
  }
  if (!o.ok) {
    manifest["status"] = "error";
    manifest["error"] = o.error;
    manifest["exit_code"] = o.exit_code;
  }
  manifest["files"] = files;
  try {
    write_text(o.dir / "manifest.json", manifest.dump(2));
  } catch (const IoError& e) {
    if (o.ok) {
      o.ok = false;
      o.exit_code = 4;
      o.error = e.what();
    }
  }
  return o;
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPEFT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      warn(std::string("ignoring invalid SPEFT_THREADS='") + env + "'");
    }
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

std::vector<RunOutcome> execute_experiment(const ExperimentSpec& spec) {
  const auto runs = spec.expand();
  std::vector<RunOutcome> outcomes(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < runs.size(); i = next++) outcomes[i] = execute_run(runs[i], spec.out_dir);
  };
  const std::size_t n = worker_count(runs.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  Json list = Json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    Json e = {{"run_id", outcomes[i].run_id},
              {"label", runs[i].label},
              {"seed", runs[i].seed},
              {"status", outcomes[i].ok ? "ok" : "error"}};
    if (!outcomes[i].ok) e["error"] = outcomes[i].error;
    list.push_back(e);
  }
  std::filesystem::create_directories(spec.out_dir);
  write_text(spec.out_dir / "experiment.json", Json{{"name", spec.name}, {"runs", list}}.dump(2));
  return outcomes;
}

}  // namespace speft
