#include "cyberlogic/syntax.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "cyberlogic/error.hpp"

namespace cyberlogic {

Term Term::var(std::string name, std::string sort) {
  return Term{Kind::Var, std::move(name), std::move(sort), {}};
}

Term Term::constant(std::string name, std::string sort) {
  return Term{Kind::Const, std::move(name), std::move(sort), {}};
}

Term Term::app(std::string name, std::string sort, std::vector<Term> args) {
  return Term{Kind::App, std::move(name), std::move(sort), std::move(args)};
}

Term Term::integer(long long value, std::string sort) {
  return constant(std::to_string(value), std::move(sort));
}

std::strong_ordering Term::operator<=>(const Term& o) const {
  if (auto c = kind <=> o.kind; c != 0) return c;
  if (auto c = name <=> o.name; c != 0) return c;
  if (auto c = sort <=> o.sort; c != 0) return c;
  return std::lexicographical_compare_three_way(args.begin(), args.end(), o.args.begin(),
                                                o.args.end());
}

bool Term::ground() const {
  if (kind == Kind::Var) return false;
  return std::all_of(args.begin(), args.end(), [](const Term& a) { return a.ground(); });
}

bool Term::occurs(const std::string& v) const {
  if (kind == Kind::Var) return name == v;
  return std::any_of(args.begin(), args.end(), [&](const Term& a) { return a.occurs(v); });
}

std::optional<long long> Term::as_integer() const {
  if (kind != Kind::Const || name.empty()) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), v);
  if (ec != std::errc() || ptr != name.data() + name.size()) return std::nullopt;
  return v;
}

Formula Formula::top() { return Formula{}; }

Formula Formula::bottom() {
  Formula f;
  f.kind = Kind::Bottom;
  return f;
}

Formula Formula::atom(std::string pred, std::vector<Term> args) {
  Formula f;
  f.kind = Kind::Atom;
  f.pred = std::move(pred);
  f.terms = std::move(args);
  return f;
}

Formula Formula::attest(Term principal, Formula body) {
  Formula f;
  f.kind = Kind::Attest;
  f.terms.push_back(std::move(principal));
  f.subs.push_back(std::move(body));
  return f;
}

Formula Formula::knows(std::vector<Term> principals, Formula body) {
  Formula f;
  f.kind = Kind::Knows;
  std::sort(principals.begin(), principals.end());
  principals.erase(std::unique(principals.begin(), principals.end()), principals.end());
  f.terms = std::move(principals);
  f.subs.push_back(std::move(body));
  return f;
}

Formula Formula::conj(std::vector<Formula> parts) {
  if (parts.empty()) return top();
  if (parts.size() == 1) return std::move(parts.front());
  Formula f;
  f.kind = Kind::And;
  f.subs = std::move(parts);
  return f;
}

Formula Formula::disj(Formula l, Formula r) {
  Formula f;
  f.kind = Kind::Or;
  f.subs.push_back(std::move(l));
  f.subs.push_back(std::move(r));
  return f;
}

Formula Formula::implies(Formula antecedent, Formula consequent, std::string label) {
  Formula f;
  f.kind = Kind::Implies;
  f.subs.push_back(std::move(antecedent));
  f.subs.push_back(std::move(consequent));
  f.label = std::move(label);
  return f;
}

Formula Formula::forall(std::string var, std::string sort, Formula body) {
  Formula f;
  f.kind = Kind::Forall;
  f.var = std::move(var);
  f.sort = std::move(sort);
  f.subs.push_back(std::move(body));
  return f;
}

Formula Formula::exists(std::string var, std::string sort, Formula body) {
  Formula f = forall(std::move(var), std::move(sort), std::move(body));
  f.kind = Kind::Exists;
  return f;
}

bool is_builtin_pred(const std::string& p) {
  return p == "=" || p == "!=" || p == "<" || p == "<=" || p == ">" || p == ">=" ||
         is_service_builtin(p);
}

bool is_service_builtin(const std::string& p) {
  return p == "time_not_elapsed" || p == "time_latest";
}

bool Formula::is_builtin() const { return kind == Kind::Atom && is_builtin_pred(pred); }

bool Formula::is_atomic() const {
  if (kind == Kind::Atom) return true;
  return kind == Kind::Attest && subs[0].is_atomic();
}

Signature Signature::base() {
  Signature s;
  for (auto* name : {sorts::Principal, sorts::Time, sorts::Nonce, sorts::Int}) s.sorts[name] = {};
  s.consts[kTimePrincipal] = sorts::Principal;
  s.consts[kNoncePrincipal] = sorts::Principal;
  s.preds["time"] = {sorts::Time};
  s.preds["nonce"] = {sorts::Nonce};
  return s;
}

bool Signature::subsort(const std::string& sub, const std::string& super) const {
  if (sub == super) return true;
  std::vector<std::string> frontier{sub};
  std::set<std::string> seen{sub};
  while (!frontier.empty()) {
    std::string cur = frontier.back();
    frontier.pop_back();
    auto it = sorts.find(cur);
    if (it == sorts.end()) continue;
    for (const auto& parent : it->second) {
      if (parent == super) return true;
      if (seen.insert(parent).second) frontier.push_back(parent);
    }
  }
  return false;
}

void Signature::merge(const Signature& other) {
  for (const auto& [k, v] : other.sorts) sorts.emplace(k, v);
  for (const auto& [k, v] : other.preds) preds.emplace(k, v);
  for (const auto& [k, v] : other.consts) consts.emplace(k, v);
  for (const auto& [k, v] : other.funcs) funcs.emplace(k, v);
}

std::vector<Formula> Clause::premises() const {
  if (body.is(Formula::Kind::Top)) return {};
  if (body.is(Formula::Kind::And)) return body.subs;
  return {body};
}

Formula Clause::as_formula() const {
  Formula f = is_fact() ? head : Formula::implies(body, head);
  for (auto it = universals.rbegin(); it != universals.rend(); ++it)
    f = Formula::forall(it->name, it->sort, std::move(f));
  return f;
}

const Clause* Policy::find(const std::string& label) const {
  for (const auto& c : clauses)
    if (c.label == label) return &c;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Variables and substitution

void collect_vars(const Term& t, std::set<std::string>& out) {
  if (t.is_var()) {
    out.insert(t.name);
    return;
  }
  for (const auto& a : t.args) collect_vars(a, out);
}

std::set<std::string> free_vars(const Term& t) {
  std::set<std::string> out;
  collect_vars(t, out);
  return out;
}

namespace {

void collect_free(const Formula& f, std::set<std::string>& bound, std::set<std::string>& out) {
  for (const auto& t : f.terms) {
    std::set<std::string> vs;
    collect_vars(t, vs);
    for (const auto& v : vs)
      if (!bound.count(v)) out.insert(v);
  }
  if (f.is(Formula::Kind::Forall) || f.is(Formula::Kind::Exists)) {
    bool fresh = bound.insert(f.var).second;
    collect_free(f.body(), bound, out);
    if (fresh) bound.erase(f.var);
    return;
  }
  for (const auto& s : f.subs) collect_free(s, bound, out);
}

void collect_consts(const Term& t, std::set<std::string>& out) {
  if (t.is_const()) out.insert(t.name);
  for (const auto& a : t.args) collect_consts(a, out);
}

void collect_consts(const Formula& f, std::set<std::string>& out) {
  for (const auto& t : f.terms) collect_consts(t, out);
  for (const auto& s : f.subs) collect_consts(s, out);
}

}  // namespace

std::set<std::string> free_vars(const Formula& f) {
  std::set<std::string> bound, out;
  collect_free(f, bound, out);
  return out;
}

std::set<std::string> constants_of(const Formula& f) {
  std::set<std::string> out;
  collect_consts(f, out);
  return out;
}

Term substitute(const Term& t, const std::string& var, const Term& by) {
  if (t.is_var()) return t.name == var ? by : t;
  if (t.args.empty()) return t;
  Term out = t;
  for (auto& a : out.args) a = substitute(a, var, by);
  return out;
}

std::string fresh_variant(const std::string& base, const std::set<std::string>& avoid) {
  for (int i = 1;; ++i) {
    std::string candidate = base + "_" + std::to_string(i);
    if (!avoid.count(candidate)) return candidate;
  }
}

namespace {

Formula subst_rec(const Formula& f, const std::string& var, const Term& by,
                  const std::set<std::string>& by_vars) {
  Formula out = f;
  for (auto& t : out.terms) t = substitute(t, var, by);
  if (f.is(Formula::Kind::Forall) || f.is(Formula::Kind::Exists)) {
    if (f.var == var) return f;
    if (!free_vars(f).count(var)) return f;
    if (by_vars.count(f.var)) {
      std::set<std::string> avoid = by_vars;
      auto inner = free_vars(f.body());
      avoid.insert(inner.begin(), inner.end());
      avoid.insert(var);
      std::string renamed = fresh_variant(f.var, avoid);
      Formula body = subst_rec(f.body(), f.var, Term::var(renamed, f.sort), {renamed});
      out.var = renamed;
      out.subs[0] = subst_rec(body, var, by, by_vars);
      return out;
    }
    out.subs[0] = subst_rec(f.body(), var, by, by_vars);
    return out;
  }
  for (auto& s : out.subs) s = subst_rec(s, var, by, by_vars);
  return out;
}

bool find_var_sort(const Formula& f, const std::string& var, std::string& sort) {
  for (const auto& t : f.terms) {
    std::vector<const Term*> stack{&t};
    while (!stack.empty()) {
      const Term* cur = stack.back();
      stack.pop_back();
      if (cur->is_var() && cur->name == var) {
        sort = cur->sort;
        return true;
      }
      for (const auto& a : cur->args) stack.push_back(&a);
    }
  }
  if ((f.is(Formula::Kind::Forall) || f.is(Formula::Kind::Exists)) && f.var == var) return false;
  for (const auto& s : f.subs)
    if (find_var_sort(s, var, sort)) return true;
  return false;
}

}  // namespace

Formula substitute(const Formula& f, const std::string& var, const Term& by,
                   const Signature* sig) {
  if (sig) {
    std::string sort;
    if (find_var_sort(f, var, sort) && !sig->subsort(by.sort, sort))
      throw Error(ErrorKind::Sort, "cannot substitute " + print(by) + ":" + by.sort + " for " +
                                       var + ":" + sort);
  }
  return subst_rec(f, var, by, free_vars(by));
}

// ---------------------------------------------------------------------------
// Printing

namespace {

bool ident_like(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
  });
}

bool numeric(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return false;
  return std::all_of(s.begin() + static_cast<long>(i), s.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

// Precedence levels: 1 quantifier/implication, 2 disjunction, 3 conjunction, 4 unary.
int level(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::Forall:
    case Formula::Kind::Exists:
    case Formula::Kind::Implies: return 1;
    case Formula::Kind::Or: return 2;
    case Formula::Kind::And: return 3;
    default: return 4;
  }
}

std::string print_at(const Formula& f, int min_level);

std::string join_terms(const std::vector<Term>& ts) {
  std::string out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (i) out += ", ";
    out += print(ts[i]);
  }
  return out;
}

std::string print_plain(const Formula& f) {
  using K = Formula::Kind;
  switch (f.kind) {
    case K::Top: return "true";
    case K::Bottom: return "false";
    case K::Atom:
      if (f.is_builtin() && !is_service_builtin(f.pred) && f.terms.size() == 2)
        return print(f.terms[0]) + " " + f.pred + " " + print(f.terms[1]);
      if (f.terms.empty()) return f.pred;
      return f.pred + "(" + join_terms(f.terms) + ")";
    case K::Attest: return print(f.principal()) + " says " + print_at(f.body(), 4);
    case K::Knows: return "knows {" + join_terms(f.terms) + "} " + print_at(f.body(), 4);
    case K::And: {
      std::string out;
      for (std::size_t i = 0; i < f.subs.size(); ++i) {
        if (i) out += " /\\ ";
        // Nested conjunctions keep their grouping.
        out += print_at(f.subs[i], f.subs[i].is(K::And) ? 5 : 4);
      }
      return out;
    }
    case K::Or: return print_at(f.subs[0], 3) + " \\/ " + print_at(f.subs[1], 2);
    case K::Implies: {
      std::string lhs = f.label.empty() ? print_at(f.subs[0], 2)
                                        : "(" + f.label + ": " + print_at(f.subs[0], 1) + ")";
      return lhs + " => " + print_at(f.subs[1], 1);
    }
    case K::Forall:
    case K::Exists:
      return std::string(f.is(K::Forall) ? "forall " : "exists ") + f.var + ":" + f.sort + ". " +
             print_at(f.body(), 1);
  }
  return "?";
}

std::string print_at(const Formula& f, int min_level) {
  std::string s = print_plain(f);
  return level(f) < min_level ? "(" + s + ")" : s;
}

}  // namespace

std::string print(const Term& t) {
  std::string name = t.name;
  if (t.is_const() && !ident_like(name) && !numeric(name)) name = quote(name);
  if (t.kind != Term::Kind::App) return name;
  return name + "(" + join_terms(t.args) + ")";
}

std::string print(const Formula& f) { return print_plain(f); }

std::string print(const Clause& c) {
  std::string out = c.label + ": ";
  if (!c.universals.empty()) {
    out += "forall ";
    for (std::size_t i = 0; i < c.universals.size(); ++i) {
      if (i) out += ", ";
      out += c.universals[i].name + ":" + c.universals[i].sort;
    }
    out += ". ";
  }
  if (!c.is_fact()) out += print_at(c.body, 2) + " => ";
  return out + print_plain(c.head) + ".";
}

std::string print(const Policy& p) {
  const Signature base = Signature::base();
  std::string out;
  for (const auto& [name, parents] : p.sig.sorts) {
    if (base.sorts.count(name)) continue;
    out += "sort " + name;
    for (std::size_t i = 0; i < parents.size(); ++i) out += (i ? ", " : " < ") + parents[i];
    out += ".\n";
  }
  for (const auto& [name, args] : p.sig.preds) {
    if (base.preds.count(name)) continue;
    out += "pred " + name + "(";
    for (std::size_t i = 0; i < args.size(); ++i) out += (i ? ", " : "") + args[i];
    out += ").\n";
  }
  for (const auto& [name, decl] : p.sig.funcs) {
    out += "func " + name + "(";
    for (std::size_t i = 0; i < decl.args.size(); ++i) out += (i ? ", " : "") + decl.args[i];
    out += ") : " + decl.result + ".\n";
  }
  for (const auto& [name, sort] : p.sig.consts) {
    if (base.consts.count(name)) continue;
    std::string shown = ident_like(name) ? name : quote(name);
    if (sort == sorts::Principal)
      out += "principal " + shown + ".\n";
    else
      out += "const " + shown + " : " + sort + ".\n";
  }
  for (const auto& c : p.clauses) out += print(c) + "\n";
  return out;
}

}  // namespace cyberlogic
