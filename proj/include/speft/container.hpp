// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Binary container shared by checkpoints, score files, masks and adapters.
//
//   bytes 0..7   magic "SPEFTBIN"
//   bytes 8..15  header length H, u64 little-endian
//   next H bytes JSON header {"meta": {...}, "tensors": [{name, dtype,
//                shape, offset, nbytes}, ...]}
//   remainder    payload; each tensor's little-endian data at its offset
//
// Headers are written with sorted keys, so equal containers serialize to
// identical bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "speft/common.hpp"

namespace speft {

using Json = nlohmann::json;

enum class DType { f64, f32, u64 };

std::string dtype_name(DType d);
DType parse_dtype(const std::string& name);
std::size_t dtype_size(DType d);

struct Blob {
  std::string name;
  DType dtype = DType::f64;
  Shape shape;
  std::vector<unsigned char> bytes;  // little-endian payload
};

struct Container {
  Json meta = Json::object();
  std::vector<Blob> blobs;

  const Blob& blob(const std::string& name) const;
  bool has(const std::string& name) const;
};

Blob matrix_blob(const std::string& name, const Matrix& m, const Shape& shape, DType dtype = DType::f64);
Blob indices_blob(const std::string& name, const std::vector<std::uint64_t>& idx);
Blob vector_blob(const std::string& name, const Vector& v, DType dtype = DType::f64);
Matrix blob_matrix(const Blob& b);
Vector blob_vector(const Blob& b);
std::vector<std::uint64_t> blob_indices(const Blob& b);

std::string serialize(const Container& c);
Container deserialize(std::string_view bytes);

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
void save_container(const std::filesystem::path& path, const Container& c);
Container load_container(const std::filesystem::path& path);

}  // namespace speft
