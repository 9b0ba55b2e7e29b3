#pragma once

// Flat key=value text configuration.
//
//   # comment lines start with '#'
//   n_f = 64, 128, 256
//   steps = 2000
//
// Keys are case-sensitive, whitespace around keys and values is ignored, and
// a value may hold a comma-separated list. Repeating a key is an error.

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cngp/error.hpp"

namespace cngp {

class KvConfig {
 public:
  static KvConfig parse(std::string_view text, const std::string& origin = "<config>") {
    KvConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string_view line = trim(text.substr(pos, end - pos));
      ++line_no;
      pos = end + 1;
      if (line.empty() || line.front() == '#') continue;
      const std::size_t eq = line.find('=');
      const std::string where = origin + ":" + std::to_string(line_no);
      require(eq != std::string_view::npos, ErrorCode::invalid_argument, where + ": expected key = value");
      const std::string key(trim(line.substr(0, eq)));
      require(!key.empty(), ErrorCode::invalid_argument, where + ": empty key");
      require(!cfg.values_.count(key), ErrorCode::invalid_argument, where + ": duplicate key '" + key + "'");
      cfg.values_[key] = std::string(trim(line.substr(eq + 1)));
      cfg.lines_[key] = where;
    }
    return cfg;
  }

  static KvConfig load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::io_error, "cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

  const std::string& raw(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), ErrorCode::invalid_argument, "missing config key '" + key + "'");
    return it->second;
  }

  std::vector<std::string> strings(const std::string& key) const {
    std::vector<std::string> out;
    std::string_view rest = raw(key);
    while (true) {
      const std::size_t comma = rest.find(',');
      const std::string_view item = trim(rest.substr(0, comma));
      require(!item.empty(), ErrorCode::invalid_argument, lines_.at(key) + ": empty list item for '" + key + "'");
      out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
    return out;
  }

  template <class T>
  std::vector<T> list(const std::string& key) const {
    std::vector<T> out;
    for (const std::string& s : strings(key)) out.push_back(convert<T>(key, s));
    return out;
  }

  template <class T>
  T get(const std::string& key) const {
    const auto items = list<T>(key);
    require(items.size() == 1, ErrorCode::invalid_argument, lines_.at(key) + ": '" + key + "' takes a single value");
    return items.front();
  }

  template <class T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

 private:
  static std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r";
    const std::size_t b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
  }

  template <class T>
  T convert(const std::string& key, const std::string& s) const {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      fail(ErrorCode::invalid_argument, lines_.at(key) + ": '" + key + "' expects true or false, got '" + s + "'");
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == s.size(), ErrorCode::invalid_argument,
              lines_.at(key) + ": '" + key + "' expects a number, got '" + s + "'");
      return static_cast<T>(v);
    } else {
      T v{};
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::invalid_argument,
              lines_.at(key) + ": '" + key + "' expects an integer, got '" + s + "'");
      return v;
    }
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> lines_;
};

}  // namespace cngp
