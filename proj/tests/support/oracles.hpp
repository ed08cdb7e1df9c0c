#pragma once

// Reference implementations used as test oracles. They share no code with the engine:
// terms and atoms are plain strings and vectors, and every algorithm is the naive one.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// Ground Horn programs, evaluated bottom-up.

struct Atom {
  std::string pred;
  std::vector<std::string> args;

  auto operator<=>(const Atom&) const = default;
};

struct Rule {
  Atom head;
  std::vector<Atom> body;
};

// Least model by naive iteration: apply every rule whose body lies in the current set until
// nothing changes.
inline std::set<Atom> fixpoint(const std::vector<Rule>& program) {
  std::set<Atom> model;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& r : program) {
      bool fires = true;
      for (const auto& b : r.body)
        if (!model.count(b)) {
          fires = false;
          break;
        }
      if (fires && model.insert(r.head).second) changed = true;
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// First-order terms over {a/0, f/1, g/2} and variables X, Y, Z.

struct T {
  std::string sym;  // "a", "f", "g", or a variable name
  std::vector<T> args;

  bool is_var() const { return sym == "X" || sym == "Y" || sym == "Z"; }
  bool operator==(const T&) const = default;
};

inline const std::vector<std::string>& variables() {
  static const std::vector<std::string> v{"X", "Y", "Z"};
  return v;
}

inline T subst(const T& t, const std::map<std::string, T>& s) {
  if (t.is_var()) {
    auto it = s.find(t.sym);
    return it == s.end() ? t : it->second;
  }
  T out{t.sym, {}};
  for (const auto& a : t.args) out.args.push_back(subst(a, s));
  return out;
}

inline int depth(const T& t) {
  int d = 0;
  for (const auto& a : t.args) d = std::max(d, depth(a) + 1);
  return d;
}

// Every ground term of depth at most d.
inline std::vector<T> ground_terms(int d) {
  std::vector<T> out{T{"a", {}}};
  for (int level = 1; level <= d; ++level) {
    std::vector<T> prev = out;
    std::vector<T> next{T{"a", {}}};
    for (const auto& x : prev) next.push_back(T{"f", {x}});
    for (const auto& x : prev)
      for (const auto& y : prev) next.push_back(T{"g", {x, y}});
    out = next;
  }
  return out;
}

// Every ground substitution over X, Y, Z with ranges of depth at most d that makes l and r
// equal.
inline std::vector<std::map<std::string, T>> ground_unifiers(const T& l, const T& r, int d) {
  std::vector<std::map<std::string, T>> out;
  auto dom = ground_terms(d);
  for (const auto& x : dom)
    for (const auto& y : dom)
      for (const auto& z : dom) {
        std::map<std::string, T> s{{"X", x}, {"Y", y}, {"Z", z}};
        if (subst(l, s) == subst(r, s)) out.push_back(std::move(s));
      }
  return out;
}

// Small deterministic generator; std distributions differ between standard libraries and
// the frozen oracle values depend on the exact stream.
class Rand {
 public:
  explicit Rand(std::uint64_t seed) : s_(seed * 0x9E3779B97F4A7C15ull + 1) {}
  std::uint64_t next() {
    s_ ^= s_ << 13;
    s_ ^= s_ >> 7;
    s_ ^= s_ << 17;
    return s_;
  }
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
  bool chance(int percent) { return below(100) < percent; }

 private:
  std::uint64_t s_;
};

inline T random_term(Rand& rng, int d) {
  int pick = d == 0 ? rng.below(2) : rng.below(5);
  if (pick == 0) return T{variables()[rng.below(3)], {}};
  if (pick == 1 || d == 0) return T{"a", {}};
  if (pick == 2 || pick == 3) return T{"f", {random_term(rng, d - 1)}};
  return T{"g", {random_term(rng, d - 1), random_term(rng, d - 1)}};
}

}  // namespace oracle
