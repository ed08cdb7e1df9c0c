#include "cyberlogic/normalize.hpp"

#include <optional>

#include "cyberlogic/error.hpp"

namespace cyberlogic {

using K = Formula::Kind;

std::string delegated_pred(const std::string& pred) { return "delegated_" + pred; }
std::string stamped_pred(const std::string& pred) { return "stamped_" + pred; }

namespace {

[[noreturn]] void not_in_fragment(const std::string& why, const Formula& f) {
  throw Error(ErrorKind::NotInFragment, why + ": " + print(f));
}

bool mentions(const Term& t, const std::string& var) { return t.occurs(var); }

// Bound variable of q renamed away from `avoid` when it clashes.
Formula rename_binder(const Formula& q, const std::set<std::string>& avoid) {
  if (!avoid.count(q.var)) return q;
  std::set<std::string> all = avoid;
  auto inner = free_vars(q.body());
  all.insert(inner.begin(), inner.end());
  std::string fresh = fresh_variant(q.var, all);
  Formula out = q;
  out.var = fresh;
  out.subs[0] = substitute(q.body(), q.var, Term::var(fresh, q.sort));
  return out;
}

Formula conj_flat(std::vector<Formula> parts) {
  std::vector<Formula> out;
  for (auto& p : parts) {
    if (p.is(K::Top)) continue;
    if (p.is(K::And)) {
      for (auto& s : p.subs) out.push_back(std::move(s));
    } else {
      out.push_back(std::move(p));
    }
  }
  return Formula::conj(std::move(out));
}

struct Grant {
  Term granter;
  Term grantee;
  std::string pred;
};

// Recognizes (forall xs.)* K says ((L says p(xs)) => p(xs)), with the attestation on either
// side of the binders, xs exactly the binders in order, and K, L independent of xs.
std::optional<Grant> grant_of(const Formula& f) {
  std::vector<std::string> binders;
  std::optional<Term> granter;
  const Formula* cur = &f;
  while (true) {
    if (cur->is(K::Forall)) {
      binders.push_back(cur->var);
      cur = &cur->body();
    } else if (cur->is(K::Attest) && !granter) {
      granter = cur->principal();
      cur = &cur->body();
    } else {
      break;
    }
  }
  if (!granter || !cur->is(K::Implies)) return std::nullopt;
  const Formula& ante = cur->subs[0];
  const Formula& cons = cur->subs[1];
  if (!ante.is(K::Attest) || !ante.body().is(K::Atom) || !cons.is(K::Atom)) return std::nullopt;
  const Formula& p = ante.body();
  if (p.is_builtin() || !(p == cons) || p.terms.size() != binders.size()) return std::nullopt;
  for (std::size_t i = 0; i < binders.size(); ++i)
    if (!p.terms[i].is_var() || p.terms[i].name != binders[i]) return std::nullopt;
  for (const auto& b : binders)
    if (mentions(*granter, b) || mentions(ante.principal(), b)) return std::nullopt;
  return Grant{*granter, ante.principal(), p.pred};
}

Formula norm_goal(const Formula& f);
Formula norm_prog(const Formula& f);

// K says g, g a normalized goal.
Formula attest_goal(const Term& k, const Formula& g) {
  switch (g.kind) {
    case K::Top: return g;
    case K::Atom:
      if (g.is_builtin()) return g;
      return Formula::attest(k, g);
    case K::Attest:
      if (g.principal() == k) return g;
      return Formula::attest(k, g);
    case K::And: {
      std::vector<Formula> parts;
      for (const auto& s : g.subs) parts.push_back(attest_goal(k, s));
      return Formula::conj(std::move(parts));
    }
    case K::Or: return Formula::disj(attest_goal(k, g.subs[0]), attest_goal(k, g.subs[1]));
    case K::Forall:
    case K::Exists: {
      Formula q = rename_binder(g, free_vars(k));
      q.subs[0] = attest_goal(k, q.body());
      return q;
    }
    case K::Implies: {
      const Formula& ante = g.subs[0];
      const Formula& cons = g.subs[1];
      if (ante.is(K::Attest) && ante.body().is(K::Atom) && cons.is(K::Atom) &&
          !cons.is_builtin() && ante.body() == cons)
        return Formula::attest(k, Formula::atom(delegated_pred(cons.pred), {ante.principal()}));
      not_in_fragment("attested implication in goal position", Formula::attest(k, g));
    }
    case K::Knows: not_in_fragment("attested knowledge in goal position", Formula::attest(k, g));
    case K::Bottom: return Formula::attest(k, g);
  }
  return Formula::attest(k, g);
}

Formula norm_goal(const Formula& f) {
  switch (f.kind) {
    case K::Top:
    case K::Bottom:
    case K::Atom: return f;
    case K::Attest: return attest_goal(f.principal(), norm_goal(f.body()));
    case K::Knows: return Formula::knows(f.terms, norm_goal(f.body()));
    case K::And: {
      std::vector<Formula> parts;
      for (const auto& s : f.subs) parts.push_back(norm_goal(s));
      return Formula::conj(std::move(parts));
    }
    case K::Or: return Formula::disj(norm_goal(f.subs[0]), norm_goal(f.subs[1]));
    case K::Implies:
      return Formula::implies(norm_prog(f.subs[0]), norm_goal(f.subs[1]), f.label);
    case K::Forall:
    case K::Exists: {
      Formula q = f;
      q.subs[0] = norm_goal(f.body());
      return q;
    }
  }
  return f;
}

// g => h, g a normalized goal, h a normalized program.
Formula implies_prog(const Formula& g, const Formula& h) {
  if (g.is(K::Top)) return h;
  switch (h.kind) {
    case K::Top: return h;
    case K::Implies: return implies_prog(conj_flat({g, h.subs[0]}), h.subs[1]);
    case K::And: {
      std::vector<Formula> parts;
      for (const auto& s : h.subs) parts.push_back(implies_prog(g, s));
      return conj_flat(std::move(parts));
    }
    case K::Forall: {
      Formula q = rename_binder(h, free_vars(g));
      q.subs[0] = implies_prog(g, q.body());
      return q;
    }
    default: return Formula::implies(g, h);
  }
}

// K says d, d a normalized program.
Formula attest_prog(const Term& k, const Formula& d) {
  switch (d.kind) {
    case K::Top: return d;
    case K::Attest:
      if (d.principal() == k) return d;
      return Formula::attest(k, d);
    case K::And: {
      std::vector<Formula> parts;
      for (const auto& s : d.subs) parts.push_back(attest_prog(k, s));
      return conj_flat(std::move(parts));
    }
    case K::Forall:
    case K::Exists: {
      Formula q = rename_binder(d, free_vars(k));
      q.subs[0] = attest_prog(k, q.body());
      return q;
    }
    case K::Implies: return implies_prog(d.subs[0], attest_prog(k, d.subs[1]));
    default: return Formula::attest(k, d);
  }
}

Formula with_grant(const Formula& f, Formula normalized) {
  auto g = grant_of(f);
  if (!g) return normalized;
  Formula fact = Formula::attest(g->granter, Formula::atom(delegated_pred(g->pred), {g->grantee}));
  return conj_flat({std::move(normalized), std::move(fact)});
}

Formula norm_prog(const Formula& f) {
  switch (f.kind) {
    case K::Top:
    case K::Bottom:
    case K::Atom:
    case K::Or:
    case K::Knows: return f;
    case K::Exists: {
      Formula q = f;
      q.subs[0] = norm_prog(f.body());
      return q;
    }
    case K::And: {
      std::vector<Formula> parts;
      for (const auto& s : f.subs) parts.push_back(norm_prog(s));
      return conj_flat(std::move(parts));
    }
    case K::Forall: {
      Formula q = f;
      q.subs[0] = norm_prog(f.body());
      if (q.body().is(K::Top)) return q.body();
      return with_grant(f, std::move(q));
    }
    case K::Attest: return with_grant(f, attest_prog(f.principal(), norm_prog(f.body())));
    case K::Implies: return implies_prog(norm_goal(f.subs[0]), norm_prog(f.subs[1]));
  }
  return f;
}

void clauses_of(const Formula& f, std::vector<Binder>& universals, std::vector<Clause>& out) {
  switch (f.kind) {
    case K::Top: return;
    case K::And:
      for (const auto& s : f.subs) clauses_of(s, universals, out);
      return;
    case K::Forall:
      universals.push_back(Binder{f.var, f.sort});
      clauses_of(f.body(), universals, out);
      universals.pop_back();
      return;
    case K::Atom:
    case K::Attest:
      if (!f.is_atomic() || f.is_builtin()) not_in_fragment("clause head is not an attested atom", f);
      out.push_back(Clause{"", universals, Formula::top(), f});
      return;
    case K::Implies: {
      const Formula& head = f.subs[1];
      if (!head.is_atomic() || head.is_builtin())
        not_in_fragment("clause head is not an attested atom", head);
      check_goal(f.subs[0]);
      out.push_back(Clause{"", universals, f.subs[0], head});
      return;
    }
    default: not_in_fragment("not a program clause", f);
  }
}

void goal_check(const Formula& g) {
  switch (g.kind) {
    case K::Top: return;
    case K::Bottom: not_in_fragment("falsity in goal position", g);
    case K::Atom: return;
    case K::Attest:
      if (!g.is_atomic()) not_in_fragment("attestation over a compound goal", g);
      return;
    case K::Knows:
    case K::Forall:
    case K::Exists: goal_check(g.body()); return;
    case K::And:
    case K::Or:
      for (const auto& s : g.subs) goal_check(s);
      return;
    case K::Implies: {
      std::vector<Binder> us;
      std::vector<Clause> cs;
      clauses_of(g.subs[0], us, cs);
      goal_check(g.subs[1]);
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Macro expansion

using PredTable = std::map<std::string, std::vector<std::string>>;

void names_of(const Term& t, std::set<std::string>& out) {
  out.insert(t.name);
  for (const auto& a : t.args) names_of(a, out);
}

void names_of(const Formula& f, std::set<std::string>& out) {
  for (const auto& t : f.terms) names_of(t, out);
  if (!f.var.empty()) out.insert(f.var);
  for (const auto& s : f.subs) names_of(s, out);
}

std::string fresh(const std::string& base, std::set<std::string>& avoid) {
  std::string name = base;
  for (int i = 1; avoid.count(name); ++i) name = base + std::to_string(i);
  avoid.insert(name);
  return name;
}

class Expander {
 public:
  Expander(const PredTable& preds, std::set<std::string> avoid, Signature* sig)
      : preds_(preds), avoid_(std::move(avoid)), sig_(sig) {}

  Formula run(const Formula& f) {
    if (f.is(K::Atom)) return atom(f);
    Formula out = f;
    for (auto& s : out.subs) s = run(s);
    return out;
  }

 private:
  const std::vector<std::string>& arg_sorts(const std::string& pred) {
    auto it = preds_.find(pred);
    if (it == preds_.end())
      throw Error(ErrorKind::UnknownMacro, "macro over undeclared predicate " + pred);
    return it->second;
  }

  void declare(const std::string& pred, std::vector<std::string> sorts) {
    if (sig_) sig_->preds.emplace(pred, std::move(sorts));
  }

  std::vector<Term> fresh_args(const std::vector<std::string>& sorts) {
    std::vector<Term> out;
    for (std::size_t i = 0; i < sorts.size(); ++i)
      out.push_back(Term::var(fresh(sorts.size() == 1 ? "x" : "x" + std::to_string(i + 1), avoid_),
                              sorts[i]));
    return out;
  }

  static Formula close(Formula f, const std::vector<Term>& vars) {
    for (auto it = vars.rbegin(); it != vars.rend(); ++it)
      f = Formula::forall(it->name, it->sort, std::move(f));
    return f;
  }

  static Formula atom_of(const Term& t) { return Formula::atom(t.name, t.args); }

  Term time_atom_arg() { return Term::var(fresh("s", avoid_), sorts::Time); }

  Formula atom(const Formula& f) {
    const std::string& m = f.pred;
    if (is_builtin_pred(m)) return f;
    if (!is_macro(m)) {
      if (!preds_.count(m) && m.rfind("delegated_", 0) != 0 && m.rfind("stamped_", 0) != 0)
        throw Error(ErrorKind::UnknownMacro, "unknown predicate or macro " + m);
      return f;
    }
    const auto& a = f.terms;
    auto arity = [&](std::size_t n) {
      if (a.size() != n)
        throw Error(ErrorKind::UnknownMacro, "macro " + m + " expects " + std::to_string(n) +
                                                 " arguments");
    };
    const Term T = Term::constant(kTimePrincipal, sorts::Principal);
    if (m == "delegate") {
      arity(3);
      auto xs = fresh_args(arg_sorts(a[2].name));
      Formula p = Formula::atom(a[2].name, xs);
      declare(delegated_pred(a[2].name), {sorts::Principal});
      return close(Formula::attest(a[0], Formula::implies(Formula::attest(a[1], p), p)), xs);
    }
    if (m == "delegate_indirect") {
      arity(3);
      auto xs = fresh_args(arg_sorts(a[2].name));
      std::string mv = fresh("M", avoid_);
      Term M = Term::var(mv, sorts::Principal);
      Formula p = Formula::atom(a[2].name, xs);
      Formula grant = Formula::attest(a[1], Formula::implies(Formula::attest(M, p), p));
      Formula body = Formula::implies(Formula::attest(M, p), Formula::implies(grant, p));
      declare(delegated_pred(a[2].name), {sorts::Principal});
      return close(Formula::attest(a[0], Formula::forall(mv, sorts::Principal, body)), xs);
    }
    if (m == "revocable_delegate") {
      arity(3);
      const auto& sorts_p = arg_sorts(a[2].name);
      if (sorts_p.empty() || sorts_p.back() != sorts::Time)
        throw Error(ErrorKind::Sort, "revocable_delegate needs a predicate whose last argument is Time");
      std::vector<std::string> lead(sorts_p.begin(), sorts_p.end() - 1);
      auto xs = fresh_args(lead);
      Term s = Term::var(fresh("s", avoid_), sorts::Time);
      Term t = Term::var(fresh("t", avoid_), sorts::Time);
      std::vector<Term> args = xs;
      args.push_back(s);
      Formula p = Formula::atom(a[2].name, args);
      if (sig_) sig_->preds.emplace("notRevoked", std::vector<std::string>{sorts::Principal, sorts::Time});
      Formula guard = Formula::attest(
          a[0], Formula::conj({Formula::atom("notRevoked", {a[1], t}), Formula::atom("<", {s, t})}));
      Formula body =
          Formula::attest(a[0], Formula::implies(Formula::conj({Formula::attest(a[1], p), guard}), p));
      std::vector<Term> all = xs;
      all.push_back(s);
      all.push_back(t);
      return close(body, all);
    }
    if (m == "past") {
      arity(1);
      Term s = time_atom_arg();
      return Formula::exists(
          s.name, sorts::Time,
          Formula::conj({Formula::atom(">", {s, a[0]}),
                         Formula::attest(T, Formula::atom("time", {s}))}));
    }
    if (m == "future") {
      arity(1);
      return Formula::atom("time_not_elapsed", {a[0]});
    }
    if (m == "curr") {
      arity(1);
      return Formula::conj({Formula::attest(T, Formula::atom("time", {a[0]})),
                            Formula::atom("time_latest", {a[0]})});
    }
    if (m == "attest_after" || m == "eventually") {
      arity(3);
      Formula inner = atom(atom_of(a[2]));
      return Formula::conj(
          {Formula::attest(a[0], inner), Formula::attest(T, Formula::atom("time", {a[1]}))});
    }
    // attest_before
    arity(3);
    const auto& sorts_p = arg_sorts(a[2].name);
    std::vector<std::string> stamped{sorts::Time, sorts::Principal};
    stamped.insert(stamped.end(), sorts_p.begin(), sorts_p.end());
    declare(stamped_pred(a[2].name), stamped);
    Term s = time_atom_arg();
    std::vector<Term> args{s, a[0]};
    args.insert(args.end(), a[2].args.begin(), a[2].args.end());
    return Formula::exists(
        s.name, sorts::Time,
        Formula::conj({Formula::attest(T, Formula::atom(stamped_pred(a[2].name), args)),
                       Formula::atom("<", {s, a[1]})}));
  }

  const PredTable& preds_;
  std::set<std::string> avoid_;
  Signature* sig_;
};

}  // namespace

Formula normalize(const Formula& f, Role role) {
  Formula cur = f;
  for (int i = 0; i < 64; ++i) {
    Formula next = role == Role::Program ? norm_prog(cur) : norm_goal(cur);
    if (next == cur) return next;
    cur = std::move(next);
  }
  return cur;
}

std::vector<Clause> to_clauses(const Formula& program, const std::string& label) {
  std::vector<Binder> us;
  std::vector<Clause> out;
  clauses_of(program, us, out);
  int n = 1, grants = 0;
  for (auto& c : out) {
    const Formula& atom = c.head.is(K::Attest) ? c.head.body() : c.head;
    bool grant = c.is_fact() && c.universals.empty() && atom.is(K::Atom) &&
                 atom.pred.rfind("delegated_", 0) == 0 && &c != &out.front();
    if (grant) {
      c.label = label + "_grant" + (grants++ ? "_" + std::to_string(grants) : "");
    } else {
      c.label = n == 1 ? label : label + "_" + std::to_string(n);
      ++n;
    }
  }
  return out;
}

void check_goal(const Formula& g) { goal_check(g); }

bool is_goal(const Formula& g) {
  try {
    goal_check(g);
    return true;
  } catch (const Error&) {
    return false;
  }
}

Formula expand_macros(const Formula& f, Signature& sig) {
  std::set<std::string> avoid;
  names_of(f, avoid);
  for (const auto& [name, sort] : sig.consts) avoid.insert(name);
  PredTable preds = sig.preds;
  Formula out = Expander(preds, std::move(avoid), &sig).run(f);
  declare_derived_preds(out, sig);
  return out;
}

Formula expand_macros(const Formula& f, const std::map<std::string, std::vector<std::string>>& predicates) {
  std::set<std::string> avoid;
  names_of(f, avoid);
  return Expander(predicates, std::move(avoid), nullptr).run(f);
}

void declare_derived_preds(const Formula& f, Signature& sig) {
  if (f.is(K::Atom) && !sig.preds.count(f.pred)) {
    if (f.pred.rfind("delegated_", 0) == 0 && sig.preds.count(f.pred.substr(10)))
      sig.preds[f.pred] = {sorts::Principal};
    if (f.pred.rfind("stamped_", 0) == 0) {
      auto it = sig.preds.find(f.pred.substr(8));
      if (it != sig.preds.end()) {
        std::vector<std::string> s{sorts::Time, sorts::Principal};
        s.insert(s.end(), it->second.begin(), it->second.end());
        sig.preds[f.pred] = s;
      }
    }
  }
  for (const auto& s : f.subs) declare_derived_preds(s, sig);
}

}  // namespace cyberlogic
