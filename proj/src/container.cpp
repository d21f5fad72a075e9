// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace speft {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'E', 'F', 'T', 'B', 'I', 'N'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(const unsigned char* p) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

Index shape_numel(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

}  // namespace

std::string dtype_name(DType d) {
  switch (d) {
    case DType::f64: return "f64";
    case DType::f32: return "f32";
    case DType::u64: return "u64";
  }
  return "?";
}

DType parse_dtype(const std::string& name) {
  if (name == "f64") return DType::f64;
  if (name == "f32") return DType::f32;
  if (name == "u64") return DType::u64;
  throw IoError("unknown dtype '" + name + "'");
}

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

const Blob& Container::blob(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return b;
  }
  throw IoError("container has no tensor named '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return true;
  }
  return false;
}

Blob matrix_blob(const std::string& name, const Matrix& m, const Shape& shape, DType dtype) {
  if (shape_numel(shape) != m.size()) {
    throw ShapeError("matrix_blob: shape " + shape_string(shape) + " does not fit " + std::to_string(m.size()) +
                     " values");
  }
  Blob b{name, dtype, shape, {}};
  b.bytes.reserve(static_cast<std::size_t>(m.size()) * dtype_size(dtype));
  for (Index i = 0; i < m.size(); ++i) {
    if (dtype == DType::f64) {
      put_le<double>(b.bytes, m.data()[i]);
    } else if (dtype == DType::f32) {
      put_le<float>(b.bytes, static_cast<float>(m.data()[i]));
    } else {
      throw IoError("matrix_blob: u64 is not a floating dtype");
    }
  }
  return b;
}

Blob vector_blob(const std::string& name, const Vector& v, DType dtype) {
  Matrix m = Eigen::Map<const Matrix>(v.data(), 1, v.size());
  return matrix_blob(name, m, {v.size()}, dtype);
}

Blob indices_blob(const std::string& name, const std::vector<std::uint64_t>& idx) {
  Blob b{name, DType::u64, {static_cast<Index>(idx.size())}, {}};
  b.bytes.reserve(idx.size() * 8);
  for (auto i : idx) put_le<std::uint64_t>(b.bytes, i);
  return b;
}

Matrix blob_matrix(const Blob& b) {
  const Index n = shape_numel(b.shape);
  Index rows = 1, cols = n;
  if (b.shape.size() >= 2) {
    cols = b.shape.back();
    rows = cols ? n / cols : 0;
  }
  Matrix m(rows, cols);
  const auto width = dtype_size(b.dtype);
  if (b.bytes.size() != static_cast<std::size_t>(n) * width) throw IoError("tensor '" + b.name + "' has wrong size");
  for (Index i = 0; i < n; ++i) {
    const unsigned char* p = b.bytes.data() + i * width;
    if (b.dtype == DType::f64) {
      m.data()[i] = get_le<double>(p);
    } else if (b.dtype == DType::f32) {
      m.data()[i] = get_le<float>(p);
    } else {
      throw IoError("tensor '" + b.name + "' is not floating point");
    }
  }
  return m;
}

Vector blob_vector(const Blob& b) {
  Matrix m = blob_matrix(b);
  return Eigen::Map<const Vector>(m.data(), m.size());
}

std::vector<std::uint64_t> blob_indices(const Blob& b) {
  if (b.dtype != DType::u64) throw IoError("tensor '" + b.name + "' is not u64");
  const std::size_t n = b.bytes.size() / 8;
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = get_le<std::uint64_t>(b.bytes.data() + i * 8);
  return out;
}

std::string serialize(const Container& c) {
  Json tensors = Json::array();
  std::uint64_t offset = 0;
  for (const auto& b : c.blobs) {
    tensors.push_back({{"name", b.name},
                       {"dtype", dtype_name(b.dtype)},
                       {"shape", b.shape},
                       {"offset", offset},
                       {"nbytes", b.bytes.size()}});
    offset += b.bytes.size();
  }
  const std::string header = Json{{"meta", c.meta}, {"tensors", tensors}}.dump();
  std::vector<unsigned char> out(kMagic, kMagic + 8);
  put_le<std::uint64_t>(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  for (const auto& b : c.blobs) out.insert(out.end(), b.bytes.begin(), b.bytes.end());
  return std::string(out.begin(), out.end());
}

Container deserialize(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw IoError("not a SPEFT container (bad magic)");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto header_len = get_le<std::uint64_t>(raw + 8);
  if (16 + header_len > bytes.size()) throw IoError("truncated container header");
  Json header;
  try {
    header = Json::parse(bytes.substr(16, header_len));
  } catch (const Json::exception& e) {
    throw IoError(std::string("corrupt container header: ") + e.what());
  }
  Container c;
  c.meta = header.at("meta");
  const std::size_t base = 16 + header_len;
  for (const auto& t : header.at("tensors")) {
    Blob b;
    b.name = t.at("name").get<std::string>();
    b.dtype = parse_dtype(t.at("dtype").get<std::string>());
    b.shape = t.at("shape").get<Shape>();
    const auto off = t.at("offset").get<std::uint64_t>();
    const auto nb = t.at("nbytes").get<std::uint64_t>();
    if (base + off + nb > bytes.size()) throw IoError("truncated payload for tensor '" + b.name + "'");
    if (static_cast<std::uint64_t>(shape_numel(b.shape)) * dtype_size(b.dtype) != nb) {
      throw IoError("tensor '" + b.name + "' size does not match its shape");
    }
    b.bytes.assign(raw + base + off, raw + base + off + nb);
    c.blobs.push_back(std::move(b));
  }
  return c;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_container(const std::filesystem::path& path, const Container& c) { write_file(path, serialize(c)); }

Container load_container(const std::filesystem::path& path) {
  try {
    return deserialize(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace speft
