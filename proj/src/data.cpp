// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace speft {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::regression: return "regression";
    case TaskKind::classification: return "classification";
    case TaskKind::language_model: return "language-model";
  }
  return "?";
}

Batch Dataset::batch(const std::vector<std::size_t>& indices) const {
  Batch b;
  b.reserve(indices.size());
  for (auto i : indices) b.push_back(&examples.at(i));
  return b;
}

Batch Dataset::all() const {
  Batch b;
  b.reserve(examples.size());
  for (const auto& e : examples) b.push_back(&e);
  return b;
}

bool in_eval_split(std::uint64_t seed, std::size_t index, double eval_fraction) {
  const std::uint64_t h = mix_seed(seed, index);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < eval_fraction;
}

DatasetSplits split_dataset(const Dataset& all, double eval_fraction, std::uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction >= 1.0) {
    throw ConfigError("eval fraction must be in [0, 1), got " + std::to_string(eval_fraction));
  }
  DatasetSplits s;
  for (Dataset* d : {&s.train, &s.eval}) {
    d->kind = all.kind;
    d->seed = all.seed;
    d->metadata = all.metadata;
  }
  s.train.split = "train";
  s.eval.split = "eval";
  for (std::size_t i = 0; i < all.examples.size(); ++i) {
    (in_eval_split(seed, i, eval_fraction) ? s.eval : s.train).examples.push_back(all.examples[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------

BatchSampler::BatchSampler(std::size_t dataset_size, std::uint64_t seed) : n_(dataset_size), seed_(seed) {
  if (n_ == 0) throw ConfigError("batch sampler: empty dataset");
  perm_ = permutation(n_, seed_, epoch_);
}

std::vector<std::size_t> BatchSampler::permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, epoch));
  // Fisher-Yates with an explicit bounded draw: std::shuffle's use of the
  // engine is implementation-defined.
  for (std::size_t i = n; i > 1; --i) {
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
      r = rng();
    } while (r >= limit);
    std::swap(perm[i - 1], perm[r % bound]);
  }
  return perm;
}

std::vector<std::size_t> BatchSampler::next_indices(std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch sampler: batch size must be positive");
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  while (out.size() < batch_size) {
    if (pos_ == n_) {
      ++epoch_;
      pos_ = 0;
      perm_ = permutation(n_, seed_, epoch_);
    }
    out.push_back(perm_[pos_++]);
  }
  return out;
}

BatchSampler BatchSampler::fork(std::uint64_t salt) const { return BatchSampler(n_, mix_seed(seed_, salt ^ 0x5A17ULL)); }

SamplerStream::SamplerStream(const Dataset& data, BatchSampler sampler, std::size_t batch_size)
    : data_(&data), sampler_(std::move(sampler)), batch_size_(batch_size) {}

std::optional<Batch> SamplerStream::next() { return data_->batch(sampler_.next_indices(batch_size_)); }

std::optional<Batch> FixedStream::next() {
  if (pos_ >= batches_.size()) return std::nullopt;
  return batches_[pos_++];
}

// ---------------------------------------------------------------------------

ParamSet teacher_params(const ModelConfig& config, std::uint64_t seed) {
  Model model(config);
  ParamSet ps = model.init_params(seed);
  std::mt19937_64 rng(mix_seed(seed, 0x7EAC));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Param& p = ps[i];
    if (p.role == ParamRole::weight) {
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(p.shape[0])));
      for (Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = dist(rng);
    } else if (p.role == ParamRole::bias) {
      std::normal_distribution<double> dist(0.0, 0.1);
      for (Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = dist(rng);
    }
  }
  return ps;
}

ParamSet shift_teacher(const ParamSet& teacher, double fraction, double scale, std::uint64_t seed) {
  ParamSet out = teacher;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    Param& p = out[i];
    if (!p.adaptable()) continue;
    std::normal_distribution<double> dist(0.0, scale / std::sqrt(static_cast<double>(p.shape[0])));
    for (Index k = 0; k < p.value.size(); ++k) {
      if (coin(rng) < fraction) p.value.data()[k] += dist(rng);
    }
  }
  return out;
}

DatasetSplits label_with_teacher(const ModelConfig& teacher_config, const ParamSet& teacher,
                                 const TeacherStudentConfig& cfg) {
  if (cfg.n == 0) throw ConfigError("teacher-student: n must be at least 1");
  Model model(teacher_config);
  std::mt19937_64 rng(cfg.data_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset all;
  all.kind = TaskKind::regression;
  all.seed = cfg.data_seed;
  all.examples.resize(cfg.n);
  const int d_in = teacher_config.widths.front();
  for (auto& ex : all.examples) {
    ex.features.resize(static_cast<std::size_t>(d_in));
    for (auto& v : ex.features) v = gauss(rng);
  }
  const auto params = constant_tensors<double>(teacher);
  const Matrix y = model.outputs(params, all.all()).value();
  for (std::size_t i = 0; i < cfg.n; ++i) {
    auto& t = all.examples[i].targets;
    t.resize(static_cast<std::size_t>(y.cols()));
    for (Index j = 0; j < y.cols(); ++j) t[static_cast<std::size_t>(j)] = y(static_cast<Index>(i), j) + cfg.noise * gauss(rng);
  }
  all.metadata = {{"generator", "teacher-student"}, {"noise", cfg.noise}, {"teacher", teacher_config.to_json()}};
  return split_dataset(all, cfg.eval_fraction, cfg.data_seed);
}

TeacherStudentTask gen_teacher_student(const TeacherStudentConfig& cfg) {
  ModelConfig tc;
  tc.architecture = Architecture::mlp;
  tc.widths = cfg.dims;
  tc.activation = cfg.activation;
  tc.task = MlpTask::regression;
  tc.seed = cfg.teacher_seed;
  tc.validate();
  ParamSet teacher = teacher_params(tc, cfg.teacher_seed);
  DatasetSplits data = label_with_teacher(tc, teacher, cfg);
  return {std::move(data), tc, std::move(teacher)};
}

// ---------------------------------------------------------------------------

Dataset gen_char_lm_corpus(const std::string& text, int seq_len) {
  if (text.empty()) throw IoError("char corpus: text is empty");
  if (seq_len < 1) throw ConfigError("char corpus: seq_len must be positive");
  if (text.size() <= static_cast<std::size_t>(seq_len)) {
    throw ConfigError("char corpus: text of " + std::to_string(text.size()) + " bytes is too short for seq_len " +
                      std::to_string(seq_len));
  }
  std::array<int, 256> id{};
  id.fill(-1);
  for (unsigned char c : text) id[c] = 0;
  std::vector<int> vocab;
  for (int b = 0; b < 256; ++b) {
    if (id[static_cast<std::size_t>(b)] == 0) {
      id[static_cast<std::size_t>(b)] = static_cast<int>(vocab.size());
      vocab.push_back(b);
    }
  }
  std::vector<int> tokens;
  tokens.reserve(text.size());
  for (unsigned char c : text) tokens.push_back(id[c]);
  Dataset ds;
  ds.kind = TaskKind::language_model;
  const std::size_t windows = text.size() - static_cast<std::size_t>(seq_len);
  ds.examples.resize(windows);
  for (std::size_t i = 0; i < windows; ++i) {
    auto& ex = ds.examples[i];
    ex.tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i) + seq_len);
    ex.next_tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                          tokens.begin() + static_cast<std::ptrdiff_t>(i) + seq_len + 1);
  }
  ds.metadata = {{"generator", "char-lm"}, {"vocab", vocab}, {"vocab_size", vocab.size()}, {"seq_len", seq_len}};
  return ds;
}

Dataset gen_char_lm_corpus_file(const std::filesystem::path& path, int seq_len) {
  if (!std::filesystem::exists(path)) throw IoError("char corpus: file '" + path.string() + "' does not exist");
  std::string text = read_file(path);
  if (text.empty()) throw IoError("char corpus: file '" + path.string() + "' is empty");
  return gen_char_lm_corpus(text, seq_len);
}

Dataset load_jsonl_sequences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  Dataset ds;
  ds.kind = TaskKind::language_model;
  std::string line;
  std::size_t line_no = 0;
  int max_token = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<int> toks;
    try {
      toks = Json::parse(line).at("tokens").get<std::vector<int>>();
    } catch (const Json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (toks.size() < 2) throw IoError(path.string() + ":" + std::to_string(line_no) + ": need at least 2 tokens");
    if (!ds.examples.empty() && toks.size() != ds.examples.front().tokens.size() + 1) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": sequence length differs from first line");
    }
    for (int t : toks) {
      if (t < 0 || t > 255) throw IoError(path.string() + ":" + std::to_string(line_no) + ": token outside 0..255");
      max_token = std::max(max_token, t);
    }
    Example ex;
    ex.tokens.assign(toks.begin(), toks.end() - 1);
    ex.next_tokens.assign(toks.begin() + 1, toks.end());
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw IoError("'" + path.string() + "' contains no sequences");
  ds.metadata = {{"generator", "jsonl"}, {"vocab_size", max_token + 1}};
  return ds;
}

Dataset gen_sequence_classification(int vocab, int seq_len, int n_classes, std::size_t n, std::uint64_t seed) {
  if (n_classes < 2 || n_classes > vocab) throw ConfigError("sequence classification: need 2 <= n_classes <= vocab");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  Dataset ds;
  ds.kind = TaskKind::classification;
  ds.seed = seed;
  ds.examples.resize(n);
  for (auto& ex : ds.examples) {
    ex.tokens.resize(static_cast<std::size_t>(seq_len));
    std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
    for (auto& t : ex.tokens) {
      t = tok(rng);
      if (t < n_classes) ++counts[static_cast<std::size_t>(t)];
    }
    ex.label = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  ds.metadata = {{"generator", "sequence-classification"}, {"vocab_size", vocab}, {"n_classes", n_classes}};
  return ds;
}

// ---------------------------------------------------------------------------

std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_number) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool field_started_quoted = false;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) {
    throw IoError("csv line " + std::to_string(line_number) + ": " + why);
  };
  while (i < line.size()) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          i += 2;
          continue;
        }
        quoted = false;
        ++i;
        if (i < line.size() && line[i] != ',' && line[i] != '\r') fail("unexpected character after closing quote");
        continue;
      }
      cur.push_back(c);
      ++i;
      continue;
    }
    if (c == '"') {
      if (!cur.empty() || field_started_quoted) fail("quote inside unquoted field");
      quoted = true;
      field_started_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
      field_started_quoted = false;
    } else if (c != '\r') {
      cur.push_back(c);
    }
    ++i;
  }
  if (quoted) fail("unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

namespace {

double parse_number(const std::string& s, std::size_t line, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  auto rest = s.substr(used);
  if (used == 0 || rest.find_first_not_of(" \t") != std::string::npos || !std::isfinite(v)) {
    throw IoError("csv line " + std::to_string(line) + ": column '" + column + "' value '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

DatasetSplits load_csv_classification(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path.string() + "' is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  const auto header = parse_csv_line(line, 1);
  auto label_it = std::find(header.begin(), header.end(), schema.label_column);
  if (label_it == header.end()) throw IoError("csv: no label column '" + schema.label_column + "' in header");
  const auto label_col = static_cast<std::size_t>(label_it - header.begin());

  Dataset all;
  all.kind = TaskKind::classification;
  all.seed = schema.seed;
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = parse_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw IoError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                    " fields, got " + std::to_string(fields.size()));
    }
    Example ex;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const double v = parse_number(fields[c], line_no, header[c]);
      if (c == label_col) {
        if (v != std::floor(v) || v < 0) {
          throw IoError("csv line " + std::to_string(line_no) + ": label '" + fields[c] + "' is not a non-negative integer");
        }
        ex.label = static_cast<int>(v);
        if (schema.n_classes > 0 && ex.label >= schema.n_classes) {
          throw IoError("csv line " + std::to_string(line_no) + ": label " + std::to_string(ex.label) +
                        " outside declared range 0.." + std::to_string(schema.n_classes - 1));
        }
        max_label = std::max(max_label, ex.label);
      } else {
        ex.features.push_back(v);
      }
    }
    all.examples.push_back(std::move(ex));
  }
  if (all.examples.empty()) throw IoError("'" + path.string() + "' has no data rows");

  DatasetSplits s = split_dataset(all, schema.eval_fraction, schema.seed);
  if (s.train.empty()) throw IoError("csv: train split is empty");
  const std::size_t d = s.train.examples.front().features.size();
  std::vector<double> mean(d, 0.0), stdev(d, 0.0);
  for (const auto& ex : s.train.examples) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += ex.features[j];
  }
  for (auto& m : mean) m /= static_cast<double>(s.train.size());
  for (const auto& ex : s.train.examples) {
    for (std::size_t j = 0; j < d; ++j) stdev[j] += (ex.features[j] - mean[j]) * (ex.features[j] - mean[j]);
  }
  for (auto& v : stdev) {
    v = std::sqrt(v / static_cast<double>(s.train.size()));
    if (v == 0.0) v = 1.0;
  }
  for (Dataset* part : {&s.train, &s.eval}) {
    for (auto& ex : part->examples) {
      for (std::size_t j = 0; j < d; ++j) ex.features[j] = (ex.features[j] - mean[j]) / stdev[j];
    }
  }
  std::vector<std::string> features;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_col) features.push_back(header[c]);
  }
  const int n_classes = schema.n_classes > 0 ? schema.n_classes : max_label + 1;
  for (Dataset* part : {&s.train, &s.eval}) {
    part->metadata = {{"generator", "csv"},
                      {"source", path.string()},
                      {"features", features},
                      {"n_classes", n_classes},
                      {"standardize_mean", mean},
                      {"standardize_std", stdev}};
  }
  return s;
}

}  // namespace speft
