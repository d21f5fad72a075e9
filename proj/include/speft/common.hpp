// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace speft {

using Index = std::int64_t;
using Shape = std::vector<Index>;

/// Dense row-major matrix. Row-major order makes the flat coordinate of
/// element (i, j) equal to i * cols + j, which is what masks store.
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = MatrixX<double>;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Raised for malformed configuration; maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when training diverges (non-finite loss); maps to exit code 3.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Raised on file-system or format failures; maps to exit code 4.
class IoError : public Error {
 public:
  using Error::Error;
};

std::string shape_string(const Shape& shape);

// Warnings go through a replaceable sink so tests can capture them.
using WarningSink = std::function<void(const std::string&)>;
void set_warning_sink(WarningSink sink);
void warn(const std::string& message);

/// 64-bit FNV-1a; used for run ids and checkpoint fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t size,
                      std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t fnv1a64(const std::string& text);
std::string hex64(std::uint64_t value);

/// SplitMix64 finalizer. Derives independent seeds from (seed, salt) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace speft
