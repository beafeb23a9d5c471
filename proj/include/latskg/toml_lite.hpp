#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "error.hpp"

// Reader for the TOML subset used by experiment configs: [table] and
// [a.b] headers, key = value with strings, integers, floats (inf/nan too),
// booleans and arrays of those (may span lines), and # comments.
namespace latskg::toml_lite {

namespace detail {

class Parser {
 public:
  explicit Parser(std::string text) : s_(std::move(text)) {}

  nlohmann::ordered_json parse() {
    nlohmann::ordered_json root = nlohmann::ordered_json::object();
    nlohmann::ordered_json* table = &root;
    while (true) {
      skip_blank_lines();
      if (eof()) break;
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[') error("arrays of tables are not supported");
        const std::string name = read_until(']');
        ++pos_;
        end_of_line();
        table = &root;
        std::size_t start = 0;
        const std::string trimmed = trim(name);
        if (trimmed.empty()) error("empty table name");
        while (start <= trimmed.size()) {
          const auto dot = trimmed.find('.', start);
          const std::string part = trim(trimmed.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
          if (part.empty() || !valid_key(part)) error("bad table name '" + trimmed + "'");
          auto& next = (*table)[part];
          if (next.is_null()) next = nlohmann::ordered_json::object();
          if (!next.is_object()) error("'" + part + "' is not a table");
          table = &next;
          if (dot == std::string::npos) break;
          start = dot + 1;
        }
        continue;
      }
      const std::string key = read_key();
      skip_spaces();
      if (peek() != '=') error("expected '=' after key '" + key + "'");
      ++pos_;
      skip_spaces();
      if (table->contains(key)) error("duplicate key '" + key + "'");
      (*table)[key] = read_value();
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void error(const std::string& msg) const {
    fail(Errc::ConfigError, "config line " + std::to_string(line_) + ": " + msg);
  }

  bool eof() const { return pos_ >= s_.size(); }
  char peek() const { return eof() ? '\0' : s_[pos_]; }

  void skip_spaces() {
    while (!eof() && (peek() == ' ' || peek() == '\t')) ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!eof() && peek() != '\n') ++pos_;
  }

  void skip_blank_lines() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      break;
    }
  }

  // Whitespace, comments and newlines inside arrays.
  void skip_ws_multiline() {
    while (!eof()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\r') {
        ++pos_;
        continue;
      }
      if (peek() == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      break;
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (eof()) return;
    if (peek() != '\n') error("unexpected trailing characters");
    ++pos_;
    ++line_;
  }

  std::string read_until(char stop) {
    std::string out;
    while (!eof() && peek() != stop) {
      if (peek() == '\n') error("unterminated header");
      out += s_[pos_++];
    }
    if (eof()) error("unterminated header");
    return out;
  }

  static std::string trim(const std::string& x) {
    const auto a = x.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    const auto b = x.find_last_not_of(" \t");
    return x.substr(a, b - a + 1);
  }

  static bool valid_key(const std::string& k) {
    for (char c : k)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return !k.empty();
  }

  std::string read_key() {
    if (peek() == '"') return read_string();
    std::string k;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
      k += s_[pos_++];
    if (k.empty()) error("expected a key");
    return k;
  }

  std::string read_string() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') error("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c == '\\') {
        const char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: error(std::string("unsupported escape \\") + e);
        }
        continue;
      }
      out += c;
    }
    return out;
  }

  nlohmann::ordered_json read_value() {
    const char c = peek();
    if (c == '"') {
      if (s_.compare(pos_, 3, "\"\"\"") == 0) error("multi-line strings are not supported");
      return read_string();
    }
    if (c == '\'') error("literal strings are not supported");
    if (c == '{') error("inline tables are not supported");
    if (c == '[') {
      ++pos_;
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      while (true) {
        skip_ws_multiline();
        if (peek() == ']') {
          ++pos_;
          break;
        }
        if (peek() == '[') error("nested arrays are not supported");
        arr.push_back(read_value());
        skip_ws_multiline();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ']') {
          ++pos_;
          break;
        }
        error("expected ',' or ']' in array");
      }
      return arr;
    }
    std::string tok;
    while (!eof() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' && peek() != ']' &&
           peek() != '#')
      tok += s_[pos_++];
    if (tok == "true") return true;
    if (tok == "false") return false;
    return parse_number(tok);
  }

  nlohmann::ordered_json parse_number(std::string tok) {
    if (tok.empty()) error("missing value");
    std::string clean;
    for (char c : tok)
      if (c != '_') clean += c;
    const std::string body = (clean[0] == '+' || clean[0] == '-') ? clean.substr(1) : clean;
    const double sign = clean[0] == '-' ? -1.0 : 1.0;
    if (body == "inf") return sign * std::numeric_limits<double>::infinity();
    if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(clean, &used);
        if (used == clean.size()) return v;
      } else if (clean[0] == '-') {
        const long long v = std::stoll(clean, &used);
        if (used == clean.size()) return v;
      } else {
        const unsigned long long v = std::stoull(clean, &used);
        if (used == clean.size()) return v;
      }
    } catch (const std::exception&) {
    }
    error("cannot parse value '" + tok + "'");
  }

  std::string s_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace detail

inline nlohmann::ordered_json parse(const std::string& text) { return detail::Parser(text).parse(); }

inline nlohmann::ordered_json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::ConfigError, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace latskg::toml_lite
