#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace cyberlogic {

// A TOML subset: key = value pairs, [table] and [[array-of-tables]] headers, '#' comments.
// Values are basic strings, integers, floats, booleans, and single-line arrays of those.
struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;

struct ConfigValue {
  std::variant<std::string, std::int64_t, double, bool, ConfigArray> v;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  const std::string& str() const;
  std::int64_t integer() const;
  double number() const;
  bool boolean() const;
  const ConfigArray& array() const;
};

struct ConfigTable {
  std::map<std::string, ConfigValue> values;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string str(const std::string& key, const std::string& def = {}) const;
  std::int64_t integer(const std::string& key, std::int64_t def = 0) const;
  double number(const std::string& key, double def = 0) const;
  bool boolean(const std::string& key, bool def = false) const;
  std::vector<std::string> strings(const std::string& key) const;
};

struct Config {
  ConfigTable root;
  std::map<std::string, ConfigTable> tables;
  std::map<std::string, std::vector<ConfigTable>> arrays;

  const std::vector<ConfigTable>& array(const std::string& name) const;
};

// Throws Error(Syntax) with a line number.
Config parse_config(std::string_view text);

}  // namespace cyberlogic
