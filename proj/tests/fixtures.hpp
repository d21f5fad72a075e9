// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>
#include <string>
#include <vector>

#include "speft/data.hpp"
#include "speft/model.hpp"

namespace speft::fixtures {

inline ModelConfig mlp(std::vector<int> widths, MlpTask task = MlpTask::regression,
                       Activation act = Activation::tanh) {
  ModelConfig c;
  c.architecture = Architecture::mlp;
  c.widths = std::move(widths);
  c.task = task;
  c.activation = act;
  return c;
}

inline ModelConfig transformer(Architecture arch, int d_model = 8, int heads = 2, int d_ff = 16, int vocab = 10,
                               int seq_len = 4, int n_classes = 3, int layers = 1) {
  ModelConfig c;
  c.architecture = arch;
  c.activation = Activation::gelu;
  c.d_model = d_model;
  c.n_heads = heads;
  c.d_ff = d_ff;
  c.vocab = vocab;
  c.seq_len = seq_len;
  c.n_classes = n_classes;
  c.n_layers = layers;
  return c;
}

/// Random dataset matching a model's input format.
inline Dataset random_data(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.examples.resize(n);
  if (c.architecture == Architecture::mlp) {
    std::uniform_int_distribution<int> label(0, c.widths.back() - 1);
    d.kind = c.task == MlpTask::regression ? TaskKind::regression : TaskKind::classification;
    for (auto& ex : d.examples) {
      for (int i = 0; i < c.widths.front(); ++i) ex.features.push_back(g(rng));
      if (c.task == MlpTask::regression) {
        for (int i = 0; i < c.widths.back(); ++i) ex.targets.push_back(g(rng));
      } else {
        ex.label = label(rng);
      }
    }
    return d;
  }
  std::uniform_int_distribution<int> tok(0, c.vocab - 1);
  std::uniform_int_distribution<int> label(0, c.n_classes - 1);
  d.kind = c.architecture == Architecture::transformer_lm ? TaskKind::language_model : TaskKind::classification;
  for (auto& ex : d.examples) {
    for (int t = 0; t < c.seq_len; ++t) ex.tokens.push_back(tok(rng));
    if (c.architecture == Architecture::transformer_lm) {
      for (int t = 0; t < c.seq_len; ++t) ex.next_tokens.push_back(tok(rng));
    } else {
      ex.label = label(rng);
    }
  }
  return d;
}

/// Every zoo variant at a size below 2,000 parameters.
inline std::vector<std::pair<std::string, ModelConfig>> small_zoo() {
  return {{"mlp-regression", mlp({4, 8, 3})},
          {"mlp-classifier", mlp({5, 12, 3}, MlpTask::classification, Activation::gelu)},
          {"mlp-deep-tanh", mlp({3, 6, 6, 2})},
          {"transformer-encoder", transformer(Architecture::transformer_encoder)},
          {"transformer-lm", transformer(Architecture::transformer_lm)}};
}

inline DatasetSplits teacher_student_splits(std::size_t n = 256, std::uint64_t seed = 2) {
  TeacherStudentConfig tc;
  tc.dims = {6, 16, 3};
  tc.n = n;
  tc.data_seed = seed;
  return gen_teacher_student(tc).data;
}

}  // namespace speft::fixtures
