// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#include "speft/toml.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace speft {

namespace {

class TomlParser {
 public:
  explicit TomlParser(const std::string& text) : s_(text) {}

  Json parse() {
    Json root = Json::object();
    Json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        table = parse_header(root);
      } else {
        auto path = parse_key();
        skip_ws();
        expect('=');
        skip_ws();
        Json value = parse_value();
        assign(*table, path, std::move(value));
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("toml line " + std::to_string(line_) + ": " + what);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }
  char get() {
    if (eof()) fail("unexpected end of input");
    char c = s_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    get();
  }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }
  void skip_comment() {
    if (peek() == '#') {
      while (!eof() && peek() != '\n') ++pos_;
    }
  }
  // Whitespace, comments and newlines (inside arrays and between lines).
  void skip_blank_lines() {
    while (!eof()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') {
        get();
      } else {
        break;
      }
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') fail("unexpected trailing characters");
    get();
  }

  static bool bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
  }

  std::string parse_key_part() {
    skip_ws();
    if (peek() == '"') return parse_basic_string();
    if (peek() == '\'') return parse_literal_string();
    std::string k;
    while (!eof() && bare_char(peek())) k += get();
    if (k.empty()) fail("expected a key");
    return k;
  }

  std::vector<std::string> parse_key() {
    std::vector<std::string> path{parse_key_part()};
    skip_ws();
    while (peek() == '.') {
      get();
      path.push_back(parse_key_part());
      skip_ws();
    }
    return path;
  }

  Json* descend(Json& root, const std::vector<std::string>& path, std::size_t n) {
    Json* cur = &root;
    for (std::size_t i = 0; i < n; ++i) {
      Json& next = (*cur)[path[i]];
      if (next.is_null()) next = Json::object();
      if (next.is_array() && !next.empty() && next.back().is_object()) {
        cur = &next.back();
      } else if (next.is_object()) {
        cur = &next;
      } else {
        fail("key '" + path[i] + "' is not a table");
      }
    }
    return cur;
  }

  Json* parse_header(Json& root) {
    get();
    const bool array = peek() == '[';
    if (array) get();
    auto path = parse_key();
    expect(']');
    if (array) expect(']');
    Json* parent = descend(root, path, path.size() - 1);
    Json& slot = (*parent)[path.back()];
    if (array) {
      if (slot.is_null()) slot = Json::array();
      if (!slot.is_array()) fail("'" + path.back() + "' is not an array of tables");
      slot.push_back(Json::object());
      return &slot.back();
    }
    if (slot.is_null()) slot = Json::object();
    if (!slot.is_object()) fail("'" + path.back() + "' is not a table");
    return &slot;
  }

  void assign(Json& table, const std::vector<std::string>& path, Json value) {
    Json* parent = descend(table, path, path.size() - 1);
    if (parent->contains(path.back())) fail("duplicate key '" + path.back() + "'");
    (*parent)[path.back()] = std::move(value);
  }

  std::string parse_basic_string() {
    expect('"');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = get();
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      char e = get();
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    return out;
  }

  std::string parse_literal_string() {
    expect('\'');
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') fail("unterminated string");
      char c = get();
      if (c == '\'') break;
      out += c;
    }
    return out;
  }

  Json parse_array() {
    expect('[');
    Json arr = Json::array();
    while (true) {
      skip_blank_lines();
      if (peek() == ']') {
        get();
        return arr;
      }
      arr.push_back(parse_value());
      skip_blank_lines();
      if (peek() == ',') {
        get();
      } else if (peek() != ']') {
        fail("expected ',' or ']' in array");
      }
    }
  }

  Json parse_inline_table() {
    expect('{');
    Json t = Json::object();
    skip_ws();
    if (peek() == '}') {
      get();
      return t;
    }
    while (true) {
      auto path = parse_key();
      skip_ws();
      expect('=');
      skip_ws();
      assign(t, path, parse_value());
      skip_ws();
      if (peek() == ',') {
        get();
        continue;
      }
      expect('}');
      return t;
    }
  }

  Json parse_scalar() {
    std::string tok;
    while (!eof() && (bare_char(peek()) || peek() == '.' || peek() == '+')) tok += get();
    if (tok.empty()) fail("expected a value");
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok == "inf" || tok == "+inf") return std::numeric_limits<double>::infinity();
    if (tok == "-inf") return -std::numeric_limits<double>::infinity();
    std::string clean;
    for (char c : tok) {
      if (c != '_') clean += c;
    }
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    const char* first = clean.data() + (clean[0] == '+' ? 1 : 0);
    const char* last = clean.data() + clean.size();
    if (is_float) {
      double v = 0.0;
      auto [p, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || p != last) fail("invalid number '" + tok + "'");
      return v;
    }
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last) fail("invalid value '" + tok + "'");
    return v;
  }

  Json parse_value() {
    switch (peek()) {
      case '"': return parse_basic_string();
      case '\'': return parse_literal_string();
      case '[': return parse_array();
      case '{': return parse_inline_table();
      default: return parse_scalar();
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

Json parse_toml(const std::string& text) { return TomlParser(text).parse(); }

Json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const bool json_ext = path.extension() == ".json";
  if (json_ext || (!text.empty() && text.find_first_not_of(" \t\r\n") != std::string::npos &&
                   text[text.find_first_not_of(" \t\r\n")] == '{')) {
    try {
      return Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  try {
    return parse_toml(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace speft
