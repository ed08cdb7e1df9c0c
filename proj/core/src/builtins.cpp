#include "cyberlogic/builtins.hpp"

#include <algorithm>

namespace cyberlogic {

std::optional<bool> eval_builtin(const Formula& atom, std::optional<long long> clock) {
  if (!atom.is_builtin()) return std::nullopt;
  for (const auto& t : atom.terms)
    if (!t.ground()) return std::nullopt;
  const std::string& p = atom.pred;
  if (is_service_builtin(p)) {
    if (!clock || atom.terms.size() != 1) return std::nullopt;
    auto t = atom.terms[0].as_integer();
    if (!t) return std::nullopt;
    if (p == "time_not_elapsed") return *t > *clock;
    return *clock <= *t;  // time_latest
  }
  if (atom.terms.size() != 2) return std::nullopt;
  const Term& a = atom.terms[0];
  const Term& b = atom.terms[1];
  if (p == "=" || p == "!=") {
    bool eq = a.kind == b.kind && a.name == b.name && a.args == b.args;
    if (a.as_integer() && b.as_integer()) eq = *a.as_integer() == *b.as_integer();
    return p == "=" ? eq : !eq;
  }
  auto x = a.as_integer();
  auto y = b.as_integer();
  if (!x || !y) return std::nullopt;
  if (p == "<") return *x < *y;
  if (p == "<=") return *x <= *y;
  if (p == ">") return *x > *y;
  if (p == ">=") return *x >= *y;
  return std::nullopt;
}

bool pure_builtin(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::Top: return true;
    case Formula::Kind::Atom: return f.is_builtin();
    case Formula::Kind::And:
    case Formula::Kind::Or:
      return std::all_of(f.subs.begin(), f.subs.end(), pure_builtin);
    default: return false;
  }
}

bool mentions_service_builtin(const Formula& f) {
  if (f.is(Formula::Kind::Atom)) return is_service_builtin(f.pred);
  return std::any_of(f.subs.begin(), f.subs.end(), mentions_service_builtin);
}

std::optional<bool> eval_builtin_formula(const Formula& f, std::optional<long long> clock) {
  switch (f.kind) {
    case Formula::Kind::Top: return true;
    case Formula::Kind::Atom: return eval_builtin(f, clock);
    case Formula::Kind::And: {
      for (const auto& s : f.subs) {
        auto v = eval_builtin_formula(s, clock);
        if (!v) return std::nullopt;
        if (!*v) return false;
      }
      return true;
    }
    case Formula::Kind::Or: {
      auto l = eval_builtin_formula(f.subs[0], clock);
      auto r = eval_builtin_formula(f.subs[1], clock);
      if (!l || !r) return std::nullopt;
      return *l || *r;
    }
    default: return std::nullopt;
  }
}

}  // namespace cyberlogic
