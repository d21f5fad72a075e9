// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "speft/batch.hpp"
#include "speft/container.hpp"
#include "speft/model.hpp"

namespace speft {

enum class TaskKind { regression, classification, language_model };
std::string to_string(TaskKind k);

struct Dataset {
  TaskKind kind = TaskKind::regression;
  std::vector<Example> examples;
  std::string split = "all";
  std::uint64_t seed = 0;
  Json metadata = Json::object();

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  Batch batch(const std::vector<std::size_t>& indices) const;
  Batch all() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset eval;
};

/// Assigns example i to eval iff a hash of (seed, i) falls below
/// `eval_fraction`. Membership depends only on (seed, i).
bool in_eval_split(std::uint64_t seed, std::size_t index, double eval_fraction);
DatasetSplits split_dataset(const Dataset& all, double eval_fraction, std::uint64_t seed);

/// Epoch-wise shuffling sampler. The permutation for epoch e is a pure
/// function of (seed, e); batches may straddle an epoch boundary, in which
/// case the next epoch's permutation is drawn.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::uint64_t seed);

  std::vector<std::size_t> next_indices(std::size_t batch_size);
  std::size_t epoch() const { return epoch_; }
  std::uint64_t seed() const { return seed_; }
  /// Independent sampler whose seed is derived from this one's and `salt`.
  BatchSampler fork(std::uint64_t salt) const;

  static std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::size_t epoch);

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> perm_;
};

/// Source of mini-batches for salience estimation.
class BatchStream {
 public:
  virtual ~BatchStream() = default;
  /// Next batch, or nullopt once the stream is exhausted.
  virtual std::optional<Batch> next() = 0;
};

/// Endless stream drawing from a dataset with a sampler.
class SamplerStream : public BatchStream {
 public:
  SamplerStream(const Dataset& data, BatchSampler sampler, std::size_t batch_size);
  std::optional<Batch> next() override;

 private:
  const Dataset* data_;
  BatchSampler sampler_;
  std::size_t batch_size_;
};

/// Finite stream over a fixed list of batches.
class FixedStream : public BatchStream {
 public:
  explicit FixedStream(std::vector<Batch> batches) : batches_(std::move(batches)) {}
  std::optional<Batch> next() override;

 private:
  std::vector<Batch> batches_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Generators and loaders
// ---------------------------------------------------------------------------

struct TeacherStudentConfig {
  std::vector<int> dims{8, 32, 4};
  Activation activation = Activation::tanh;
  std::uint64_t teacher_seed = 1;
  std::uint64_t data_seed = 2;
  double noise = 0.0;
  std::size_t n = 1024;
  double eval_fraction = 0.25;
};

struct TeacherStudentTask {
  DatasetSplits data;
  ModelConfig teacher_config;
  ParamSet teacher;
};

/// Teacher MLP weights drawn normal(0, 1/sqrt(fan_in)), biases normal(0, 0.1).
ParamSet teacher_params(const ModelConfig& config, std::uint64_t seed);

/// Perturbs a random `fraction` of the teacher's weight entries by
/// normal(0, scale / sqrt(fan_in)). Used to derive a downstream task from
/// an upstream teacher.
ParamSet shift_teacher(const ParamSet& teacher, double fraction, double scale, std::uint64_t seed);

/// x ~ N(0, I), y = teacher(x) + noise * N(0, 1).
TeacherStudentTask gen_teacher_student(const TeacherStudentConfig& cfg);
/// Same inputs, labels from an explicit teacher.
DatasetSplits label_with_teacher(const ModelConfig& teacher_config, const ParamSet& teacher,
                                 const TeacherStudentConfig& cfg);

/// Sliding windows of `seq_len` bytes with next-byte targets; the vocabulary
/// is the sorted set of distinct bytes (so at most 256 symbols), stored in
/// metadata["vocab"]. Produces len - seq_len windows.
Dataset gen_char_lm_corpus(const std::string& text, int seq_len);
Dataset gen_char_lm_corpus_file(const std::filesystem::path& path, int seq_len);

/// Token sequences, one JSON object per line: {"tokens": [...]}. Inputs are
/// tokens[0..n-2], targets tokens[1..n-1].
Dataset load_jsonl_sequences(const std::filesystem::path& path);

/// Synthetic sequence classification: label = most frequent token among
/// 0..n_classes-1 (lowest wins ties).
Dataset gen_sequence_classification(int vocab, int seq_len, int n_classes, std::size_t n, std::uint64_t seed);

struct CsvSchema {
  std::string label_column = "label";
  int n_classes = 0;  // 0: infer as max label + 1
  double eval_fraction = 0.2;
  std::uint64_t seed = 0;
};

/// Numeric features plus an integer label column. Features are standardized
/// with statistics from the train split only (stored in metadata).
DatasetSplits load_csv_classification(const std::filesystem::path& path, const CsvSchema& schema);

/// RFC-4180 subset: comma separated, optional double quotes, "" escapes.
std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_number);

}  // namespace speft
