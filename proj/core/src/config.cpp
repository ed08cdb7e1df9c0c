#include "cyberlogic/config.hpp"

#include <cctype>
#include <charconv>

#include "cyberlogic/error.hpp"

namespace cyberlogic {

namespace {

[[noreturn]] void type_error(const char* want) {
  throw Error(ErrorKind::Usage, std::string("config value is not ") + want);
}

class LineParser {
 public:
  LineParser(std::string_view s, int line) : s_(s), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::Syntax, "config line " + std::to_string(line_) + ": " + what);
  }

  void ws() {
    while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
  }
  bool done() {
    ws();
    return i_ == s_.size() || s_[i_] == '#';
  }
  char peek() const { return i_ < s_.size() ? s_[i_] : '\0'; }

  std::string key() {
    ws();
    if (peek() == '"') return basic_string();
    std::size_t start = i_;
    while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' || s_[i_] == '-'))
      ++i_;
    if (start == i_) fail("expected key");
    return std::string(s_.substr(start, i_ - start));
  }

  void expect(char c) {
    ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++i_;
  }

  std::string basic_string() {
    expect('"');
    std::string out;
    while (i_ < s_.size() && s_[i_] != '"') {
      char c = s_[i_++];
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (i_ == s_.size()) fail("unterminated escape");
      char e = s_[i_++];
      switch (e) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
    if (i_ == s_.size()) fail("unterminated string");
    ++i_;
    return out;
  }

  ConfigValue value() {
    ws();
    char c = peek();
    if (c == '"') return ConfigValue{basic_string()};
    if (c == '[') {
      ++i_;
      ConfigArray arr;
      ws();
      if (peek() == ']') {
        ++i_;
        return ConfigValue{arr};
      }
      for (;;) {
        arr.push_back(value());
        ws();
        if (peek() == ',') {
          ++i_;
          ws();
          if (peek() == ']') {
            ++i_;
            break;
          }
          continue;
        }
        expect(']');
        break;
      }
      return ConfigValue{arr};
    }
    std::size_t start = i_;
    while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ']' && s_[i_] != '#' && s_[i_] != ' ' && s_[i_] != '\t')
      ++i_;
    std::string tok(s_.substr(start, i_ - start));
    if (tok == "true") return ConfigValue{true};
    if (tok == "false") return ConfigValue{false};
    std::string digits;
    for (char ch : tok)
      if (ch != '_') digits.push_back(ch);
    std::int64_t iv = 0;
    auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), iv);
    if (ec == std::errc() && p == digits.data() + digits.size() && !digits.empty()) return ConfigValue{iv};
    try {
      std::size_t used = 0;
      double d = std::stod(digits, &used);
      if (used == digits.size()) return ConfigValue{d};
    } catch (const std::exception&) {
    }
    fail("bad value '" + tok + "'");
  }

 private:
  std::string_view s_;
  int line_;
  std::size_t i_ = 0;
};

}  // namespace

const std::string& ConfigValue::str() const {
  if (auto p = std::get_if<std::string>(&v)) return *p;
  type_error("a string");
}
std::int64_t ConfigValue::integer() const {
  if (auto p = std::get_if<std::int64_t>(&v)) return *p;
  type_error("an integer");
}
double ConfigValue::number() const {
  if (auto p = std::get_if<double>(&v)) return *p;
  if (auto p = std::get_if<std::int64_t>(&v)) return static_cast<double>(*p);
  type_error("a number");
}
bool ConfigValue::boolean() const {
  if (auto p = std::get_if<bool>(&v)) return *p;
  type_error("a boolean");
}
const ConfigArray& ConfigValue::array() const {
  if (auto p = std::get_if<ConfigArray>(&v)) return *p;
  type_error("an array");
}

std::string ConfigTable::str(const std::string& key, const std::string& def) const {
  auto it = values.find(key);
  return it == values.end() ? def : it->second.str();
}
std::int64_t ConfigTable::integer(const std::string& key, std::int64_t def) const {
  auto it = values.find(key);
  return it == values.end() ? def : it->second.integer();
}
double ConfigTable::number(const std::string& key, double def) const {
  auto it = values.find(key);
  return it == values.end() ? def : it->second.number();
}
bool ConfigTable::boolean(const std::string& key, bool def) const {
  auto it = values.find(key);
  return it == values.end() ? def : it->second.boolean();
}
std::vector<std::string> ConfigTable::strings(const std::string& key) const {
  std::vector<std::string> out;
  auto it = values.find(key);
  if (it == values.end()) return out;
  for (const auto& v : it->second.array()) out.push_back(v.str());
  return out;
}

const std::vector<ConfigTable>& Config::array(const std::string& name) const {
  static const std::vector<ConfigTable> empty;
  auto it = arrays.find(name);
  return it == arrays.end() ? empty : it->second;
}

Config parse_config(std::string_view text) {
  Config cfg;
  ConfigTable* current = &cfg.root;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    LineParser lp(line, line_no);
    if (lp.done()) continue;
    if (lp.peek() == '[') {
      lp.expect('[');
      bool array = lp.peek() == '[';
      if (array) lp.expect('[');
      std::string name = lp.key();
      lp.expect(']');
      if (array) lp.expect(']');
      if (!lp.done()) lp.fail("trailing characters after table header");
      if (array) {
        auto& v = cfg.arrays[name];
        v.emplace_back();
        current = &v.back();
      } else {
        if (cfg.tables.count(name)) lp.fail("table [" + name + "] defined twice");
        current = &cfg.tables[name];
      }
      continue;
    }
    std::string key = lp.key();
    lp.expect('=');
    ConfigValue v = lp.value();
    if (!lp.done()) lp.fail("trailing characters after value");
    if (!current->values.emplace(key, std::move(v)).second) lp.fail("duplicate key " + key);
  }
  return cfg;
}

}  // namespace cyberlogic
