#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bms {

/// `key = value` configuration. Blank lines and lines starting with '#' are
/// ignored; a later assignment to the same key overrides an earlier one.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "config") {
    KeyValueConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": empty key");
      c.values_[key] = trim(t.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return to_double(key, get_string(key));
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument("config key '" + key + "' expects a nonnegative integer, got '" + v + "'");
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config key '" + key + "' expects a boolean, got '" + v + "'");
  }

  /// Keys present in the file but never read.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

 private:
  static std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
  }

  static double to_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      throw std::invalid_argument("config key '" + key + "' expects a number, got '" + v + "'");
    return out;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace bms
