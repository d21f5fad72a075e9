// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

// Reader for the TOML subset used by experiment specs: tables, arrays of
// tables, dotted keys, basic and literal strings, integers, floats,
// booleans, (multi-line) arrays and inline tables. Dates and multi-line
// strings are not supported.

#pragma once

#include <filesystem>
#include <string>

#include "speft/container.hpp"

namespace speft {

/// Parses TOML into JSON. Throws ConfigError with the line number.
Json parse_toml(const std::string& text);

/// Reads a config file: JSON if it parses as JSON (or ends in .json),
/// TOML otherwise. Throws IoError if unreadable, ConfigError if malformed.
Json load_config_file(const std::filesystem::path& path);

}  // namespace speft
