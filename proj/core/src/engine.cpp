#include "cyberlogic/engine.hpp"

#include <algorithm>
#include <set>

#include "cyberlogic/builtins.hpp"
#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/normalize.hpp"

namespace cyberlogic {

using FK = Formula::Kind;

std::string to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::Failure: return "failure";
    case Status::DepthExhausted: return "depth";
    case Status::Flounder: return "flounder";
    case Status::NoRoute: return "no-route";
  }
  return "failure";
}

// ---------------------------------------------------------------------------
// Bindings

void Bindings::undo(std::size_t mark) {
  while (trail_.size() > mark) {
    Entry& e = trail_.back();
    if (e.is_level) {
      if (e.old_level) level_[e.var] = *e.old_level;
      else level_.erase(e.var);
    } else {
      map_.erase(e.var);
    }
    trail_.pop_back();
  }
}

Term Bindings::walk(const Term& t) const {
  const Term* cur = &t;
  while (cur->is_var()) {
    auto it = map_.find(cur->name);
    if (it == map_.end()) break;
    cur = &it->second;
  }
  return *cur;
}

Term Bindings::resolve(const Term& t) const {
  Term w = walk(t);
  for (auto& a : w.args) a = resolve(a);
  return w;
}

namespace {

Formula resolve_in(const Bindings& b, const Formula& f, std::set<std::string>& bound) {
  Formula out = f;
  for (auto& t : out.terms) {
    if (t.is_var() && bound.count(t.name)) continue;
    if (bound.empty()) {
      t = b.resolve(t);
    } else {
      std::set<std::string> vs;
      collect_vars(t, vs);
      bool shadowed = std::any_of(vs.begin(), vs.end(), [&](const std::string& v) { return bound.count(v); });
      if (!shadowed) t = b.resolve(t);
    }
  }
  bool binds = f.is(FK::Forall) || f.is(FK::Exists);
  bool fresh = binds && bound.insert(f.var).second;
  for (auto& s : out.subs) s = resolve_in(b, s, bound);
  if (fresh) bound.erase(f.var);
  return out;
}

}  // namespace

Formula Bindings::resolve(const Formula& f) const {
  if (map_.empty()) return f;
  std::set<std::string> bound;
  return resolve_in(*this, f, bound);
}

Evidence Bindings::resolve(const Evidence& e) const {
  Evidence out = e;
  for (auto& t : out.terms) t = resolve(t);
  if (out.is(Evidence::Kind::TheoryHole)) out.instance = resolve(out.instance);
  for (auto& s : out.subs) s = resolve(s);
  return out;
}

bool Bindings::sort_le(const std::string& a, const std::string& b) const {
  if (a == b) return true;
  return sig_ && sig_->subsort(a, b);
}

void Bindings::set_level(const std::string& var, std::size_t level) {
  auto it = level_.find(var);
  trail_.push_back(Entry{var, true, it == level_.end() ? std::nullopt : std::optional(it->second)});
  level_[var] = level;
}

void Bindings::register_eigen(const std::string& name, std::size_t index) { eigen_[name] = index; }

namespace {
void collect_consts(const Term& t, std::vector<std::string>& out) {
  if (t.is_const()) out.push_back(t.name);
  for (const auto& a : t.args) collect_consts(a, out);
}
}  // namespace

bool Bindings::bind(const Term& var, const Term& value) {
  Term v = resolve(value);
  if (v.occurs(var.name)) return false;
  auto lv = level_.find(var.name);
  if (lv != level_.end()) {
    std::size_t level = lv->second;
    std::vector<std::string> consts;
    collect_consts(v, consts);
    for (const auto& c : consts) {
      auto ei = eigen_.find(c);
      if (ei != eigen_.end() && ei->second >= level) return false;
    }
    std::set<std::string> vars;
    collect_vars(v, vars);
    for (const auto& w : vars) {
      auto lw = level_.find(w);
      if (lw == level_.end() || lw->second > level) set_level(w, level);
    }
  }
  map_[var.name] = value;
  trail_.push_back(Entry{var.name, false, std::nullopt});
  return true;
}

bool Bindings::unify(const Term& x, const Term& y) {
  Term a = walk(x);
  Term b = walk(y);
  if (a.is_var() && b.is_var()) {
    if (a.name == b.name) return true;
    if (sort_le(b.sort, a.sort)) return bind(a, b);
    if (sort_le(a.sort, b.sort)) return bind(b, a);
    return false;
  }
  if (a.is_var()) return sort_le(b.sort, a.sort) && bind(a, b);
  if (b.is_var()) return sort_le(a.sort, b.sort) && bind(b, a);
  if (a.kind != b.kind) return false;
  if (a.is_const()) {
    if (a.name == b.name) return true;
    auto ia = a.as_integer();
    auto ib = b.as_integer();
    return ia && ib && *ia == *ib;
  }
  if (a.name != b.name || a.args.size() != b.args.size()) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i)
    if (!unify(a.args[i], b.args[i])) return false;
  return true;
}

bool Bindings::unify(const Formula& a, const Formula& b) {
  if (a.kind != b.kind) return false;
  if (a.is(FK::Atom)) {
    if (a.pred != b.pred || a.terms.size() != b.terms.size()) return false;
    for (std::size_t i = 0; i < a.terms.size(); ++i)
      if (!unify(a.terms[i], b.terms[i])) return false;
    return true;
  }
  if (a.is(FK::Attest)) return unify(a.principal(), b.principal()) && unify(a.body(), b.body());
  return a == b;
}

Substitution Bindings::snapshot(const std::vector<std::string>& vars) const {
  Substitution s;
  for (const auto& v : vars) {
    auto it = map_.find(v);
    if (it != map_.end()) s[v] = resolve(it->second);
  }
  return s;
}

Term apply(const Substitution& s, const Term& t) {
  if (t.is_var()) {
    auto it = s.find(t.name);
    return it == s.end() ? t : cyberlogic::apply(s, it->second);
  }
  Term out = t;
  for (auto& a : out.args) a = cyberlogic::apply(s, a);
  return out;
}

Formula apply(const Substitution& s, const Formula& f) {
  Formula out = f;
  for (const auto& [v, t] : s) out = substitute(out, v, t);
  // Values may mention other bound variables; iterate until stable.
  for (int i = 0; i < 64; ++i) {
    std::set<std::string> fv = free_vars(out);
    bool again = std::any_of(fv.begin(), fv.end(), [&](const std::string& v) { return s.count(v); });
    if (!again) break;
    for (const auto& [v, t] : s) out = substitute(out, v, t);
  }
  return out;
}

std::optional<Substitution> unify(const Term& t1, const Term& t2, const Substitution& s,
                                  const Signature* sig) {
  Bindings b(sig);
  for (const auto& [v, t] : s)
    if (!b.unify(Term::var(v, t.sort), t)) return std::nullopt;
  if (!b.unify(t1, t2)) return std::nullopt;
  std::set<std::string> vars;
  for (const auto& [v, t] : s) {
    vars.insert(v);
    collect_vars(t, vars);
  }
  collect_vars(t1, vars);
  collect_vars(t2, vars);
  Substitution out;
  for (const auto& v : vars) {
    Term r = b.resolve(Term::var(v, ""));
    if (!(r.is_var() && r.name == v)) out[v] = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solver

Signature context_signature(const SolverContext& ctx) {
  Signature sig = Signature::base();
  if (ctx.own) sig.merge(ctx.own->sig);
  if (ctx.common) sig.merge(ctx.common->sig);
  return sig;
}

namespace {

using Cont = std::function<bool(Evidence)>;
using ConjCont = std::function<bool(std::vector<Evidence>)>;

bool is_ground(const Formula& f) { return free_vars(f).empty(); }

bool contains_eq(const Formula& f) {
  if (f.is(FK::Atom)) return f.pred == "=";
  return std::any_of(f.subs.begin(), f.subs.end(), contains_eq);
}

void principal_vars(const Formula& f, std::set<std::string>& out) {
  if (f.is(FK::Attest) && f.principal().is_var()) out.insert(f.principal().name);
  for (const auto& s : f.subs) principal_vars(s, out);
}

std::vector<Formula> premises_of(const Formula& body) {
  if (body.is(FK::Top)) return {};
  if (body.is(FK::And)) return body.subs;
  return {body};
}

struct Source {
  enum Kind { Own, Common, Hyp } kind;
  const Policy* policy = nullptr;
  bool atomic_hyp = false;
};

class Solver {
 public:
  Solver(const SolverContext& ctx, const SolverConfig& cfg)
      : ctx_(ctx), cfg_(cfg), sig_(context_signature(ctx)), b_(&sig_) {
    session_ = ctx.session ? ctx.session : std::make_shared<Session>();
  }

  SolveResult run(const Formula& goal0) {
    SolveResult res;
    // Free variables of the goal become metavariables older than every eigenconstant.
    std::set<std::string> fv = free_vars(goal0);
    Formula goal = goal0;
    std::vector<std::pair<std::string, Term>> renamed;
    for (const auto& v : fv) {
      std::string sort = find_sort(goal0, v);
      Term m = fresh_var(sort);
      goal = substitute(goal, v, m);
      renamed.emplace_back(v, m);
    }
    try {
      solve(goal, cfg_.depth, [&](Evidence e) {
        Answer a;
        for (const auto& [v, m] : renamed) {
          Term r = b_.resolve(m);
          if (!(r.is_var() && r.name == m.name)) a.bindings[v] = r;
        }
        a.evidence = b_.resolve(e);
        res.answers.push_back(std::move(a));
        return res.answers.size() >= std::max<std::size_t>(1, cfg_.max_answers);
      });
      res.status = res.answers.empty() ? failure_class() : Status::Ok;
    } catch (const Error& err) {
      res.status = Status::Failure;
      res.reason = err.what();
    }
    stats_.steps = steps_;
    res.stats = stats_;
    if (res.reason.empty() && !res.ok()) res.reason = to_string(res.status);
    return res;
  }

 private:
  static std::string find_sort(const Formula& f, const std::string& v) {
    std::string out = sorts::Principal;
    std::function<bool(const Term&)> in_term = [&](const Term& t) {
      if (t.is_var() && t.name == v) {
        out = t.sort;
        return true;
      }
      return std::any_of(t.args.begin(), t.args.end(), in_term);
    };
    std::function<bool(const Formula&)> in_formula = [&](const Formula& g) {
      if (std::any_of(g.terms.begin(), g.terms.end(), in_term)) return true;
      return std::any_of(g.subs.begin(), g.subs.end(), in_formula);
    };
    in_formula(f);
    return out;
  }

  Status failure_class() const {
    if (depth_hit_) return Status::DepthExhausted;
    if (flounder_) return Status::Flounder;
    if (no_route_) return Status::NoRoute;
    return Status::Failure;
  }

  Term fresh_var(const std::string& sort) {
    std::string name = "_G" + cfg_.name_prefix + std::to_string(++fresh_);
    b_.set_level(name, eigen_count_);
    return Term::var(name, sort);
  }

  void trace(int depth, const std::string& rule, const Formula& g) {
    if (!cfg_.trace) return;
    cfg_.trace->push_back("STEP " + cfg_.session_label + " " + std::to_string(depth) + " " + rule +
                          " " + print(b_.resolve(g)));
  }

  std::pair<std::uint64_t, std::uint64_t> env_key() const {
    return {hyp_serials_.empty() ? 0 : hyp_serials_.back(), allowed_serial_};
  }

  bool allowed(const std::string& who) const { return !allowed_ || allowed_->count(who) > 0; }

  // -- goal rules ----------------------------------------------------------

  bool solve(const Formula& g, int depth, const Cont& k) {
    ++steps_;
    switch (g.kind) {
      case FK::Top: trace(depth, "top", g); return k(Evidence::unit());
      case FK::Bottom: trace(depth, "bottom", g); return false;
      case FK::And: {
        Formula r = b_.resolve(g);
        if (pure_builtin(r) && is_ground(r)) return solve_hole(r, depth, k);
        trace(depth, "and", g);
        return solve_conj(g.subs, depth, [&](std::vector<Evidence> evs) {
          return k(Evidence::tuple(std::move(evs)));
        });
      }
      case FK::Or: {
        trace(depth, "or", g);
        std::size_t m = b_.mark();
        if (solve(g.subs[0], depth, [&](Evidence e) { return k(Evidence::inl(std::move(e))); })) return true;
        b_.undo(m);
        return solve(g.subs[1], depth, [&](Evidence e) { return k(Evidence::inr(std::move(e))); });
      }
      case FK::Exists: {
        trace(depth, "exists", g);
        Term v = fresh_var(g.sort);
        Formula body = substitute(g.body(), g.var, v);
        return solve(body, depth, [&, v](Evidence e) { return k(Evidence::witness(v, std::move(e))); });
      }
      case FK::Forall: {
        trace(depth, "forall", g);
        Term c;
        if (g.sort == sorts::Nonce && ctx_.router) {
          auto n = ctx_.router->fresh_nonce();
          if (!n) {
            no_route_ = true;
            return false;
          }
          c = *n;
        } else {
          c = Term::constant("_e" + cfg_.name_prefix + std::to_string(eigen_count_ + 1), g.sort);
        }
        b_.register_eigen(c.name, eigen_count_++);
        Formula body = substitute(g.body(), g.var, c);
        return solve(body, depth, [&, c](Evidence e) { return k(Evidence::abstraction(c.name, std::move(e))); });
      }
      case FK::Implies: return solve_implies(g, depth, k);
      case FK::Knows: return solve_knows(g, depth, k);
      case FK::Atom:
      case FK::Attest: return solve_atom(g, depth, k);
    }
    return false;
  }

  bool solve_implies(const Formula& g, int depth, const Cont& k) {
    trace(depth, "implies", g);
    std::string label = g.label.empty() ? "hyp" + cfg_.name_prefix + std::to_string(++hyp_count_) : g.label;
    Hypothesis h{label, g.subs[0], to_clauses(g.subs[0], label)};
    push_hyp(h);
    bool r = solve(g.subs[1], depth, [&](Evidence e) {
      Hypothesis saved = pop_hyp();
      bool stop = k(Evidence::abstraction(label, std::move(e)));
      push_hyp(std::move(saved));
      return stop;
    });
    pop_hyp();
    return r;
  }

  void push_hyp(Hypothesis h) {
    hyp_serials_.push_back(++serial_);
    if (ctx_.session_mutex) {
      std::lock_guard<std::mutex> lock(*ctx_.session_mutex);
      session_->hypotheses.push_back(std::move(h));
    } else {
      session_->hypotheses.push_back(std::move(h));
    }
  }

  Hypothesis pop_hyp() {
    hyp_serials_.pop_back();
    std::unique_lock<std::mutex> lock;
    if (ctx_.session_mutex) lock = std::unique_lock<std::mutex>(*ctx_.session_mutex);
    Hypothesis h = std::move(session_->hypotheses.back());
    session_->hypotheses.pop_back();
    return h;
  }

  bool solve_knows(const Formula& g, int depth, const Cont& k) {
    trace(depth, "knows", g);
    std::set<std::string> q;
    std::vector<Term> principals;
    for (const auto& t : g.terms) {
      Term r = b_.resolve(t);
      if (!r.is_const()) throw Error(ErrorKind::Engine, "knowledge modality over an unbound principal");
      q.insert(r.name);
      principals.push_back(r);
    }
    auto saved = allowed_;
    auto saved_serial = allowed_serial_;
    allowed_ = q;
    allowed_serial_ = ++serial_;
    auto inner = allowed_serial_;
    bool r = solve(g.body(), depth, [&](Evidence e) {
      allowed_ = saved;
      allowed_serial_ = saved_serial;
      bool stop = k(Evidence::knows_wrap(principals, std::move(e)));
      allowed_ = q;
      allowed_serial_ = inner;
      return stop;
    });
    allowed_ = saved;
    allowed_serial_ = saved_serial;
    return r;
  }

  // Conjunction with the selection rule; evidence is delivered in source order.
  bool solve_conj(const std::vector<Formula>& parts, int depth, const ConjCont& k) {
    std::vector<std::size_t> pending(parts.size());
    for (std::size_t i = 0; i < parts.size(); ++i) pending[i] = i;
    return conj_step(parts, std::move(pending), std::vector<Evidence>(parts.size()), depth, k);
  }

  bool conj_step(const std::vector<Formula>& parts, std::vector<std::size_t> pending,
                 std::vector<Evidence> evs, int depth, const ConjCont& k) {
    if (pending.empty()) return k(std::move(evs));
    std::vector<Formula> rs;
    rs.reserve(pending.size());
    for (auto i : pending) rs.push_back(b_.resolve(parts[i]));
    std::vector<std::set<std::string>> pvars(rs.size());
    for (std::size_t j = 0; j < rs.size(); ++j) principal_vars(rs[j], pvars[j]);

    auto delayable = [&](std::size_t j) {
      return pure_builtin(rs[j]) && !is_ground(rs[j]) && !contains_eq(rs[j]);
    };
    auto blocked = [&](std::size_t j) {
      if (pure_builtin(rs[j])) return false;
      std::set<std::string> vs = free_vars(rs[j]);
      for (std::size_t o = 0; o < rs.size(); ++o) {
        if (o == j) continue;
        for (const auto& v : pvars[o])
          if (vs.count(v)) return true;
      }
      return false;
    };
    std::optional<std::size_t> pick, first;
    for (std::size_t j = 0; j < rs.size(); ++j) {
      if (delayable(j)) continue;
      if (!first) first = j;
      if (blocked(j)) continue;
      pick = j;
      break;
    }
    if (!pick) pick = first;
    if (!pick) {
      flounder_ = true;
      trace(depth, "flounder", rs.front());
      return false;
    }
    std::size_t idx = pending[*pick];
    pending.erase(pending.begin() + static_cast<long>(*pick));
    return solve(parts[idx], depth, [&, idx, pending, evs](Evidence e) mutable {
      std::vector<Evidence> next = evs;
      next[idx] = std::move(e);
      return conj_step(parts, pending, std::move(next), depth, k);
    });
  }

  std::optional<SignedAttestation> receipt_for(const Formula& f) {
    if (!mentions_service_builtin(f)) return std::nullopt;
    if (!ctx_.router) return std::nullopt;
    return ctx_.router->clock_receipt();
  }

  static std::optional<long long> receipt_time(const SignedAttestation& sa) {
    try {
      Formula f = decode_formula(sa.formula);
      const Formula& body = f.body();
      if (body.is(FK::Atom) && body.pred == "time" && body.terms.size() == 1) return body.terms[0].as_integer();
    } catch (const Error&) {
    }
    return std::nullopt;
  }

  bool solve_hole(const Formula& r, int depth, const Cont& k) {
    std::optional<SignedAttestation> receipt = receipt_for(r);
    std::optional<long long> clock;
    if (mentions_service_builtin(r)) {
      if (!receipt) {
        no_route_ = true;
        return false;
      }
      clock = receipt_time(*receipt);
    }
    auto v = eval_builtin_formula(r, clock);
    trace(depth, v && *v ? "hole" : "hole-false", r);
    if (!v || !*v) return false;
    return k(Evidence::theory_hole(r, std::move(receipt)));
  }

  bool solve_builtin(const Formula& g, int depth, const Cont& k) {
    Formula r = b_.resolve(g);
    if (is_ground(r)) return solve_hole(r, depth, k);
    if (r.pred == "=" && r.terms.size() == 2) {
      trace(depth, "unify", r);
      std::size_t m = b_.mark();
      if (b_.unify(r.terms[0], r.terms[1]) && k(Evidence::theory_hole(g))) return true;
      b_.undo(m);
      return false;
    }
    flounder_ = true;
    trace(depth, "flounder", r);
    return false;
  }

  // -- atoms -----------------------------------------------------------------

  bool solve_atom(const Formula& g, int depth, const Cont& k) {
    Formula r = b_.resolve(g);
    if (r.is_builtin()) return solve_builtin(g, depth, k);

    if (ctx_.facts) {
      for (auto& [head, ev] : ctx_.facts->facts(r)) {
        std::size_t m = b_.mark();
        if (b_.unify(g, head)) {
          trace(depth, "service", head);
          if (k(ev)) return true;
        }
        b_.undo(m);
      }
    }

    std::vector<std::pair<Clause, bool>> hyp_clauses;
    std::set<std::string> shadowed;
    {
      std::unique_lock<std::mutex> lock;
      if (ctx_.session_mutex) lock = std::unique_lock<std::mutex>(*ctx_.session_mutex);
      auto add = [&](const Session& s) {
        for (auto it = s.hypotheses.rbegin(); it != s.hypotheses.rend(); ++it)
          for (const auto& c : it->clauses) {
            hyp_clauses.emplace_back(c, it->formula.is_atomic());
            shadowed.insert(c.label);
          }
      };
      add(*session_);
      for (auto it = ctx_.visible.rbegin(); it != ctx_.visible.rend(); ++it)
        if (*it && *it != session_) add(**it);
    }
    for (const auto& [c, h] : hyp_clauses)
      if (try_clause(g, c, Source{Source::Hyp, nullptr, h}, depth, k)) return true;

    if (ctx_.own && allowed(ctx_.self)) {
      for (const auto& c : ctx_.own->clauses) {
        if (shadowed.count(c.label)) continue;
        if (try_clause(g, c, Source{Source::Own, ctx_.own, false}, depth, k)) return true;
      }
    }
    if (ctx_.common) {
      for (const auto& c : ctx_.common->clauses) {
        if (shadowed.count(c.label)) continue;
        if (try_clause(g, c, Source{Source::Common, ctx_.common, false}, depth, k)) return true;
      }
    }

    if (!r.is(FK::Attest) || !ctx_.router) return false;
    Term p = b_.walk(r.principal());
    if (p.is_const()) {
      if (p.name == ctx_.self || !allowed(p.name)) return false;
      auto peers = ctx_.router->peers();
      if (std::find(peers.begin(), peers.end(), p.name) == peers.end()) {
        no_route_ = true;
        trace(depth, "no-route", g);
        return false;
      }
      return route(p.name, g, depth, k);
    }
    if (!p.is_var()) return false;
    for (const auto& peer : ctx_.router->peers()) {
      if (!allowed(peer)) continue;
      auto cs = sig_.consts.find(peer);
      std::string psort = cs == sig_.consts.end() ? std::string(sorts::Principal) : cs->second;
      if (cs == sig_.consts.end() && p.sort != sorts::Principal) continue;
      if (!sig_.subsort(psort, p.sort)) continue;
      std::size_t m = b_.mark();
      if (b_.unify(p, Term::constant(peer, psort))) {
        trace(depth, "broadcast " + peer, g);
        if (route(peer, g, depth, k)) return true;
      }
      b_.undo(m);
    }
    return false;
  }

  Formula instantiate(const Formula& f, const std::vector<Binder>& us, const std::vector<Term>& vs) {
    Formula out = f;
    for (std::size_t i = 0; i < us.size(); ++i) out = substitute(out, us[i].name, vs[i]);
    return out;
  }

  bool try_clause(const Formula& g, const Clause& c, const Source& src, int depth, const Cont& k) {
    std::size_t m = b_.mark();
    std::vector<Term> args;
    args.reserve(c.universals.size());
    for (const auto& u : c.universals) args.push_back(fresh_var(u.sort));
    Formula head = instantiate(c.head, c.universals, args);
    if (!b_.unify(g, head)) {
      b_.undo(m);
      return false;
    }
    if (depth <= 0) {
      depth_hit_ = true;
      trace(depth, "depth", g);
      b_.undo(m);
      return false;
    }
    Formula now = b_.resolve(g);
    auto key = env_key();
    for (const auto& [anc, akey] : ancestors_) {
      if (akey == key && b_.resolve(anc) == now) {
        ++stats_.loop_prunes;
        trace(depth, "loop " + c.label, g);
        b_.undo(m);
        return false;
      }
    }
    ++stats_.backchains;
    std::size_t chain = static_cast<std::size_t>(cfg_.depth - depth + 1);
    stats_.max_chain = std::max(stats_.max_chain, chain);
    trace(depth, "clause " + c.label, g);
    std::vector<Formula> premises = premises_of(instantiate(c.body, c.universals, args));
    ancestors_.emplace_back(g, key);
    bool r = solve_conj(premises, depth - 1, [&](std::vector<Evidence> evs) {
      auto saved = ancestors_.back();
      ancestors_.pop_back();
      bool stop = k(make_evidence(c, src, args, std::move(evs), head));
      ancestors_.push_back(std::move(saved));
      return stop;
    });
    ancestors_.pop_back();
    b_.undo(m);
    return r;
  }

  Evidence make_evidence(const Clause& c, const Source& src, const std::vector<Term>& args,
                         std::vector<Evidence> evs, const Formula& head) {
    if (src.kind == Source::Hyp) {
      if (c.universals.empty() && c.is_fact() && src.atomic_hyp) return Evidence::hyp(c.label);
      return Evidence::clause_app(c.label, std::nullopt, "", args, std::move(evs));
    }
    bool own_fact = src.kind == Source::Own && c.universals.empty() && c.is_fact() &&
                    head.is(FK::Attest) && head.principal().is_const() &&
                    head.principal().name == ctx_.self && ctx_.key && ctx_.identity;
    if (own_fact) {
      return Evidence::att_leaf(sign_attestation(*ctx_.key, *ctx_.identity, b_.resolve(head),
                                                 std::nullopt, {}, c.label));
    }
    return Evidence::clause_app(c.label, src.policy->digest, src.policy->owner, args, std::move(evs));
  }

  bool route(const std::string& peer, const Formula& g, int depth, const Cont& k) {
    if (depth <= 0) {
      depth_hit_ = true;
      trace(depth, "depth", g);
      return false;
    }
    Formula goal = b_.resolve(g);
    Formula sent = goal;
    std::vector<Term> qs;
    if (allowed_) {
      for (const auto& n : *allowed_) {
        auto cs = sig_.consts.find(n);
        qs.push_back(Term::constant(n, cs == sig_.consts.end() ? std::string(sorts::Principal) : cs->second));
      }
      sent = Formula::knows(qs, goal);
    }
    SessionChain chain = ctx_.chain;
    if (!session_->token.empty()) chain.push_back(session_->token);
    ++stats_.remote_queries;
    trace(depth, "route " + peer, goal);
    RemoteOutcome out = ctx_.router->query(peer, sent, depth - 1, chain);
    if (!out.answer) {
      if (out.status == Status::DepthExhausted) depth_hit_ = true;
      if (out.status == Status::Flounder) flounder_ = true;
      if (out.status == Status::NoRoute) no_route_ = true;
      return false;
    }
    Answer a = import(*out.answer, goal);
    Evidence ev = std::move(a.evidence);
    if (allowed_) {
      if (!ev.is(Evidence::Kind::KnowsWrap)) return false;
      Evidence inner = ev.subs[0];
      ev = std::move(inner);
    }
    std::size_t m = b_.mark();
    std::set<std::string> goal_vars = free_vars(goal);
    for (const auto& [v, t] : a.bindings) {
      if (!goal_vars.count(v)) continue;
      if (!b_.unify(Term::var(v, t.sort), t)) {
        b_.undo(m);
        return false;
      }
    }
    if (k(std::move(ev))) return true;
    b_.undo(m);
    return false;
  }

  // Renames variables introduced by the remote side to fresh local metavariables.
  Answer import(const Answer& remote, const Formula& goal) {
    std::set<std::string> keep = free_vars(goal);
    std::map<std::string, Term> renaming;
    std::function<Term(const Term&)> rn = [&](const Term& t) -> Term {
      if (t.is_var()) {
        if (keep.count(t.name)) return t;
        auto it = renaming.find(t.name);
        if (it != renaming.end()) return it->second;
        Term f = fresh_var(t.sort);
        b_.set_level(f.name, 0);
        renaming.emplace(t.name, f);
        return f;
      }
      Term out = t;
      for (auto& a : out.args) a = rn(a);
      return out;
    };
    std::function<Formula(const Formula&)> rnf = [&](const Formula& f) -> Formula {
      Formula out = f;
      for (auto& t : out.terms) t = rn(t);
      for (auto& s : out.subs) s = rnf(s);
      return out;
    };
    std::function<Evidence(const Evidence&)> rne = [&](const Evidence& e) -> Evidence {
      Evidence out = e;
      for (auto& t : out.terms) t = rn(t);
      if (out.is(Evidence::Kind::TheoryHole)) out.instance = rnf(out.instance);
      for (auto& s : out.subs) s = rne(s);
      return out;
    };
    Answer a;
    for (const auto& [v, t] : remote.bindings) a.bindings[v] = rn(t);
    a.evidence = rne(remote.evidence);
    return a;
  }

  const SolverContext& ctx_;
  SolverConfig cfg_;
  Signature sig_;
  Bindings b_;
  std::shared_ptr<Session> session_;
  std::vector<std::pair<Formula, std::pair<std::uint64_t, std::uint64_t>>> ancestors_;
  std::vector<std::uint64_t> hyp_serials_;
  std::optional<std::set<std::string>> allowed_;
  std::uint64_t allowed_serial_ = 0;
  std::uint64_t serial_ = 0;
  std::size_t fresh_ = 0;
  std::size_t eigen_count_ = 0;
  std::size_t hyp_count_ = 0;
  std::size_t steps_ = 0;
  bool depth_hit_ = false;
  bool flounder_ = false;
  bool no_route_ = false;
  SolverStats stats_;
};

}  // namespace

SolveResult solve(const SolverContext& ctx, const Formula& goal, const SolverConfig& cfg) {
  Solver s(ctx, cfg);
  return s.run(goal);
}

SolveResult solve_knowledge(const SolverContext& ctx, const std::vector<Term>& principals,
                            const Formula& goal, const SolverConfig& cfg) {
  return solve(ctx, Formula::knows(principals, goal), cfg);
}

}  // namespace cyberlogic
