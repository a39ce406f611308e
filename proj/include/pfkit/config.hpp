#pragma once

// INI-style configuration:
//
//   # comment
//   [model]
//   kind = cahn_hilliard
//   epsilon = 0.05
//
// Keys are addressed as "section.key".  Parsing keeps insertion order so a
// configuration can be echoed back verbatim (modulo comments/whitespace).
// ConfigReader layers typed access on top and tracks which keys were consumed
// and which fell back to defaults; any key never consumed is reported as
// unknown, so typos fail loudly instead of being silently ignored.

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pfkit/errors.hpp"

namespace pfkit {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

class ConfigMap {
 public:
  // Sets (or replaces) a fully-qualified "section.key".
  void set(const std::string& key, const std::string& value) {
    auto it = lookup_.find(key);
    if (it == lookup_.end()) {
      order_.push_back(key);
      lookup_.emplace(key, value);
    } else {
      it->second = value;
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    auto it = lookup_.find(key);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& key) const { return lookup_.count(key) > 0; }

  const std::vector<std::string>& keys() const { return order_; }

  // Round-trip echo grouped by section, keys in first-seen order.
  std::string to_ini() const {
    std::string out;
    std::string current_section;
    bool first = true;
    for (const std::string& qk : order_) {
      const auto dot = qk.find('.');
      const std::string section = dot == std::string::npos ? "" : qk.substr(0, dot);
      const std::string key = dot == std::string::npos ? qk : qk.substr(dot + 1);
      if (section != current_section || first) {
        if (!first) out += '\n';
        if (!section.empty()) out += "[" + section + "]\n";
        current_section = section;
        first = false;
      }
      out += key + " = " + lookup_.at(qk) + "\n";
    }
    return out;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> lookup_;
};

inline ConfigMap parse_ini(std::istream& in) {
  ConfigMap cfg;
  std::string line;
  std::string section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParseError("unterminated section header", line_no);
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError("empty section name", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected key = value", line_no);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_no);
    cfg.set(section.empty() ? key : section + "." + key, value);
  }
  return cfg;
}

inline ConfigMap load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path.string());
  return parse_ini(in);
}

// Applies a command-line override of the form "section.key=value".
inline void apply_override(ConfigMap& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be section.key=value: " + assignment);
  const std::string key = detail::trim(assignment.substr(0, eq));
  const std::string value = detail::trim(assignment.substr(eq + 1));
  if (key.empty()) throw ConfigError("override has empty key: " + assignment);
  cfg.set(key, value);
}

// Typed access with consumption tracking.
class ConfigReader {
 public:
  explicit ConfigReader(const ConfigMap& cfg) : cfg_(cfg) {}

  bool has(const std::string& key) const { return cfg_.contains(key); }

  std::string get_string(const std::string& key, const std::string& dflt) {
    auto v = cfg_.get(key);
    if (!v) {
      defaulted_.push_back(key);
      return dflt;
    }
    consumed_.insert(key);
    return *v;
  }

  std::string require_string(const std::string& key) {
    auto v = cfg_.get(key);
    if (!v) throw ValidationError(key, "required key is missing");
    consumed_.insert(key);
    return *v;
  }

  double get_double(const std::string& key, double dflt) {
    auto v = cfg_.get(key);
    if (!v) {
      defaulted_.push_back(key);
      return dflt;
    }
    consumed_.insert(key);
    return parse_double(key, *v);
  }

  double require_double(const std::string& key) {
    return parse_double(key, require_string(key));
  }

  long long get_int(const std::string& key, long long dflt) {
    auto v = cfg_.get(key);
    if (!v) {
      defaulted_.push_back(key);
      return dflt;
    }
    consumed_.insert(key);
    return parse_int(key, *v);
  }

  long long require_int(const std::string& key) {
    return parse_int(key, require_string(key));
  }

  bool get_bool(const std::string& key, bool dflt) {
    auto v = cfg_.get(key);
    if (!v) {
      defaulted_.push_back(key);
      return dflt;
    }
    consumed_.insert(key);
    const std::string& s = *v;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ValidationError(key, "not a boolean: '" + s + "'");
  }

  // Parses a whitespace-separated list of doubles.
  std::vector<double> get_double_list(const std::string& key) {
    auto v = cfg_.get(key);
    if (!v) {
      defaulted_.push_back(key);
      return {};
    }
    consumed_.insert(key);
    std::vector<double> out;
    std::istringstream iss(*v);
    std::string tok;
    while (iss >> tok) out.push_back(parse_double(key, tok));
    return out;
  }

  // Throws UnknownKey for any key present in the map but never consumed.
  void finish() const {
    for (const std::string& k : cfg_.keys())
      if (!consumed_.count(k)) throw UnknownKey(k);
  }

  const std::vector<std::string>& defaulted_keys() const { return defaulted_; }

 private:
  double parse_double(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return d;
    } catch (const std::exception&) {
      throw ValidationError(key, "not a number: '" + s + "'");
    }
  }

  long long parse_int(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const long long n = std::stoll(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return n;
    } catch (const std::exception&) {
      throw ValidationError(key, "not an integer: '" + s + "'");
    }
  }

  const ConfigMap& cfg_;
  std::set<std::string> consumed_;
  std::vector<std::string> defaulted_;
};

}  // namespace pfkit
