// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "speft/container.hpp"
#include "speft/salience.hpp"

namespace speft {

enum class MaskScope { global, local };
std::string to_string(MaskScope s);
MaskScope parse_scope(const std::string& s);

/// Compressed row view of one layer's selected coordinates.
struct CsrPattern {
  std::vector<std::uint64_t> row_offsets;  // rows + 1 entries
  std::vector<std::uint64_t> col_indices;
};

struct LayerMask {
  std::string name;
  std::size_t param_index = 0;
  Index rows = 0;
  Index cols = 0;
  /// Row-major flat coordinates, strictly increasing.
  std::vector<std::uint64_t> indices;

  Index numel() const { return rows * cols; }
  Index nnz() const { return static_cast<Index>(indices.size()); }
  CsrPattern csr() const;
};

struct SparsityMask {
  std::vector<LayerMask> layers;
  double density = 1.0;
  MaskScope scope = MaskScope::global;
  std::string metric;
  long step = 0;

  Index nnz() const;
  Index total() const;
  /// Throws Error if indices are unsorted, duplicated or out of range.
  void validate() const;
};

/// floor(rho * n), robust to the rounding of rho * n just below an integer.
Index budget(double density, Index n);

/// Top floor(rho * N_total) scores over all layers jointly; ties go to the
/// lowest global flat index (layers concatenated in order).
SparsityMask build_global_mask(const SalienceScores& scores, double density);

/// Top floor(rho * N_layer) per layer; ties go to the lowest flat index.
/// Layers whose budget rounds to zero get no entries and a warning.
SparsityMask build_local_mask(const SalienceScores& scores, double density);

SparsityMask build_mask(const SalienceScores& scores, double density, MaskScope scope);

/// Indices of the `k` largest values, ordered by (value desc, index asc),
/// returned sorted ascending. nth_element selection; equals a full sort.
std::vector<std::uint64_t> top_k_indices(const std::vector<double>& values, Index k);

/// Mask update interval I: I <= 0 is static (built once at t = 1).
struct MaskSchedule {
  long interval = -1;
  bool is_static() const { return interval <= 0; }
};

/// True iff t == 1, or the schedule is dynamic and t mod I == 0.
bool should_refresh(long t, const MaskSchedule& schedule);
/// All refresh steps in 1..steps.
std::vector<long> refresh_steps(long steps, const MaskSchedule& schedule);

struct LayerDiff {
  std::string name;
  std::vector<std::uint64_t> entering;
  std::vector<std::uint64_t> leaving;
};

struct MaskDiff {
  std::vector<LayerDiff> layers;
  double overlap = 1.0;  // |old & new| / |old|
  Index entering() const;
  Index leaving() const;
};

MaskDiff mask_diff(const SparsityMask& before, const SparsityMask& after);

Container mask_container(const SparsityMask& mask);
SparsityMask mask_from_container(const Container& c);
void save_mask(const std::filesystem::path& path, const SparsityMask& mask);
SparsityMask load_mask(const std::filesystem::path& path);

}  // namespace speft
