// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace speft {

std::string to_string(MaskScope s) { return s == MaskScope::global ? "global" : "local"; }

MaskScope parse_scope(const std::string& s) {
  if (s == "global") return MaskScope::global;
  if (s == "local") return MaskScope::local;
  throw ConfigError("unknown mask scope '" + s + "' (expected global or local)");
}

CsrPattern LayerMask::csr() const {
  CsrPattern p;
  p.row_offsets.assign(static_cast<std::size_t>(rows) + 1, 0);
  p.col_indices.reserve(indices.size());
  for (auto flat : indices) {
    const auto r = flat / static_cast<std::uint64_t>(cols);
    ++p.row_offsets[r + 1];
    p.col_indices.push_back(flat % static_cast<std::uint64_t>(cols));
  }
  std::partial_sum(p.row_offsets.begin(), p.row_offsets.end(), p.row_offsets.begin());
  return p;
}

Index SparsityMask::nnz() const {
  Index n = 0;
  for (const auto& l : layers) n += l.nnz();
  return n;
}

Index SparsityMask::total() const {
  Index n = 0;
  for (const auto& l : layers) n += l.numel();
  return n;
}

void SparsityMask::validate() const {
  for (const auto& l : layers) {
    for (std::size_t i = 0; i < l.indices.size(); ++i) {
      if (l.indices[i] >= static_cast<std::uint64_t>(l.numel())) {
        throw Error("mask layer '" + l.name + "': index " + std::to_string(l.indices[i]) + " out of range");
      }
      if (i && l.indices[i] <= l.indices[i - 1]) {
        throw Error("mask layer '" + l.name + "': indices not strictly increasing");
      }
    }
  }
}

Index budget(double density, Index n) {
  return static_cast<Index>(std::floor(density * static_cast<double>(n) + 1e-9));
}

namespace {

void check_density(double density) {
  if (!(density > 0.0 && density <= 1.0)) {
    throw ConfigError("mask density must be in (0, 1], got " + std::to_string(density));
  }
}

void check_scores(const SalienceScores& scores) {
  if (scores.scores.empty() || scores.count() == 0) throw ConfigError("mask: empty score set");
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    if (!scores.scores[i].allFinite()) throw NumericError("mask: non-finite scores in '" + scores.names[i] + "'");
  }
}

SparsityMask empty_mask(const SalienceScores& scores, double density, MaskScope scope) {
  SparsityMask m;
  m.density = density;
  m.scope = scope;
  m.metric = to_string(scores.metric);
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    LayerMask l;
    l.name = scores.names[i];
    l.param_index = scores.param_indices[i];
    l.rows = scores.scores[i].rows();
    l.cols = scores.scores[i].cols();
    m.layers.push_back(std::move(l));
  }
  return m;
}

}  // namespace

std::vector<std::uint64_t> top_k_indices(const std::vector<double>& values, Index k) {
  const auto n = static_cast<Index>(values.size());
  k = std::clamp<Index>(k, 0, n);
  std::vector<std::uint64_t> order(values.size());
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  // Strict total order: value descending, index ascending.
  auto before = [&values](std::uint64_t a, std::uint64_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return a < b;
  };
  if (k < n) std::nth_element(order.begin(), order.begin() + k, order.end(), before);
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

SparsityMask build_global_mask(const SalienceScores& scores, double density) {
  check_density(density);
  check_scores(scores);
  SparsityMask m = empty_mask(scores, density, MaskScope::global);
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(scores.count()));
  std::vector<std::uint64_t> offsets;
  for (const auto& s : scores.scores) {
    offsets.push_back(flat.size());
    flat.insert(flat.end(), s.data(), s.data() + s.size());
  }
  const Index k = budget(density, static_cast<Index>(flat.size()));
  auto selected = top_k_indices(flat, k);
  std::size_t layer = 0;
  for (auto g : selected) {
    while (layer + 1 < offsets.size() && g >= offsets[layer + 1]) ++layer;
    m.layers[layer].indices.push_back(g - offsets[layer]);
  }
  return m;
}

SparsityMask build_local_mask(const SalienceScores& scores, double density) {
  check_density(density);
  check_scores(scores);
  SparsityMask m = empty_mask(scores, density, MaskScope::local);
  for (std::size_t i = 0; i < scores.scores.size(); ++i) {
    const auto& s = scores.scores[i];
    const Index k = budget(density, s.size());
    if (k == 0) {
      warn("local mask: layer '" + scores.names[i] + "' with " + std::to_string(s.size()) + " entries gets 0 at density " +
           std::to_string(density));
      continue;
    }
    std::vector<double> values(s.data(), s.data() + s.size());
    m.layers[i].indices = top_k_indices(values, k);
  }
  return m;
}

SparsityMask build_mask(const SalienceScores& scores, double density, MaskScope scope) {
  return scope == MaskScope::global ? build_global_mask(scores, density) : build_local_mask(scores, density);
}

bool should_refresh(long t, const MaskSchedule& schedule) {
  if (t < 1) throw ConfigError("should_refresh: step must be >= 1, got " + std::to_string(t));
  if (t == 1) return true;
  return !schedule.is_static() && t % schedule.interval == 0;
}

std::vector<long> refresh_steps(long steps, const MaskSchedule& schedule) {
  std::vector<long> out;
  for (long t = 1; t <= steps; ++t) {
    if (should_refresh(t, schedule)) out.push_back(t);
  }
  return out;
}

Index MaskDiff::entering() const {
  Index n = 0;
  for (const auto& l : layers) n += static_cast<Index>(l.entering.size());
  return n;
}

Index MaskDiff::leaving() const {
  Index n = 0;
  for (const auto& l : layers) n += static_cast<Index>(l.leaving.size());
  return n;
}

MaskDiff mask_diff(const SparsityMask& before, const SparsityMask& after) {
  if (before.layers.size() != after.layers.size()) throw ConfigError("mask_diff: masks have different layer sets");
  MaskDiff d;
  Index kept = 0;
  for (std::size_t i = 0; i < before.layers.size(); ++i) {
    const auto& a = before.layers[i];
    const auto& b = after.layers[i];
    if (a.name != b.name || a.numel() != b.numel()) {
      throw ConfigError("mask_diff: layer '" + a.name + "' does not match '" + b.name + "'");
    }
    LayerDiff ld;
    ld.name = a.name;
    std::set_difference(b.indices.begin(), b.indices.end(), a.indices.begin(), a.indices.end(),
                        std::back_inserter(ld.entering));
    std::set_difference(a.indices.begin(), a.indices.end(), b.indices.begin(), b.indices.end(),
                        std::back_inserter(ld.leaving));
    kept += a.nnz() - static_cast<Index>(ld.leaving.size());
    d.layers.push_back(std::move(ld));
  }
  const Index old_nnz = before.nnz();
  d.overlap = old_nnz == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(old_nnz);
  return d;
}

Container mask_container(const SparsityMask& mask) {
  Container c;
  Json layers = Json::array();
  for (const auto& l : mask.layers) {
    layers.push_back({{"name", l.name},
                      {"param_index", l.param_index},
                      {"rows", l.rows},
                      {"cols", l.cols},
                      {"count", l.indices.size()}});
    c.blobs.push_back(indices_blob(l.name, l.indices));
  }
  c.meta = {{"kind", "mask"},
            {"scope", to_string(mask.scope)},
            {"density", mask.density},
            {"metric", mask.metric},
            {"step", mask.step},
            {"layers", layers}};
  return c;
}

SparsityMask mask_from_container(const Container& c) {
  const auto kind = c.meta.value("kind", std::string());
  if (kind != "mask" && kind != "adapter") throw IoError("container is not a mask file");
  SparsityMask m;
  try {
    m.scope = parse_scope(c.meta.at("scope").get<std::string>());
    m.density = c.meta.at("density").get<double>();
    m.metric = c.meta.at("metric").get<std::string>();
    m.step = c.meta.at("step").get<long>();
    for (const auto& l : c.meta.at("layers")) {
      LayerMask lm;
      lm.name = l.at("name").get<std::string>();
      lm.param_index = l.at("param_index").get<std::size_t>();
      lm.rows = l.at("rows").get<Index>();
      lm.cols = l.at("cols").get<Index>();
      lm.indices = blob_indices(c.blob(lm.name));
      if (lm.indices.size() != l.at("count").get<std::size_t>()) throw IoError("mask layer '" + lm.name + "' count mismatch");
      m.layers.push_back(std::move(lm));
    }
  } catch (const Json::exception& e) {
    throw IoError(std::string("malformed mask header: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed mask header: ") + e.what());
  }
  m.validate();
  return m;
}

void save_mask(const std::filesystem::path& path, const SparsityMask& mask) {
  save_container(path, mask_container(mask));
}

SparsityMask load_mask(const std::filesystem::path& path) { return mask_from_container(load_container(path)); }

}  // namespace speft
