#include "cyberlogic/evidence.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "cyberlogic/builtins.hpp"
#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/normalize.hpp"

namespace cyberlogic {

using EK = Evidence::Kind;
using FK = Formula::Kind;

Evidence Evidence::unit() { return Evidence{}; }

Evidence Evidence::pair(Evidence l, Evidence r) {
  Evidence e;
  e.kind = EK::Pair;
  e.subs.push_back(std::move(l));
  e.subs.push_back(std::move(r));
  return e;
}

Evidence Evidence::inl(Evidence x) {
  Evidence e;
  e.kind = EK::Inl;
  e.subs.push_back(std::move(x));
  return e;
}

Evidence Evidence::inr(Evidence x) {
  Evidence e;
  e.kind = EK::Inr;
  e.subs.push_back(std::move(x));
  return e;
}

Evidence Evidence::witness(Term t, Evidence x) {
  Evidence e;
  e.kind = EK::Witness;
  e.terms.push_back(std::move(t));
  e.subs.push_back(std::move(x));
  return e;
}

Evidence Evidence::abstraction(std::string name, Evidence x) {
  Evidence e;
  e.kind = EK::Abstraction;
  e.name = std::move(name);
  e.subs.push_back(std::move(x));
  return e;
}

Evidence Evidence::clause_app(std::string label, std::optional<Digest> digest, std::string owner,
                              std::vector<Term> args, std::vector<Evidence> premises) {
  Evidence e;
  e.kind = EK::ClauseApp;
  e.name = std::move(label);
  e.digest = digest;
  e.owner = std::move(owner);
  e.terms = std::move(args);
  e.subs = std::move(premises);
  return e;
}

Evidence Evidence::hyp(std::string label) {
  Evidence e;
  e.kind = EK::Hyp;
  e.name = std::move(label);
  return e;
}

Evidence Evidence::att_leaf(SignedAttestation sa) {
  Evidence e;
  e.kind = EK::AttLeaf;
  e.leaf = std::move(sa);
  return e;
}

Evidence Evidence::theory_hole(Formula instance, std::optional<SignedAttestation> receipt) {
  Evidence e;
  e.kind = EK::TheoryHole;
  e.instance = std::move(instance);
  e.leaf = std::move(receipt);
  return e;
}

Evidence Evidence::knows_wrap(std::vector<Term> principals, Evidence x) {
  Evidence e;
  e.kind = EK::KnowsWrap;
  std::sort(principals.begin(), principals.end());
  principals.erase(std::unique(principals.begin(), principals.end()), principals.end());
  e.terms = std::move(principals);
  e.subs.push_back(std::move(x));
  return e;
}

Evidence Evidence::ref(Digest d) {
  Evidence e;
  e.kind = EK::Ref;
  e.digest = d;
  return e;
}

Evidence Evidence::tuple(std::vector<Evidence> parts) {
  if (parts.empty()) return unit();
  Evidence acc = std::move(parts.back());
  for (std::size_t i = parts.size() - 1; i-- > 0;) acc = pair(std::move(parts[i]), std::move(acc));
  return acc;
}

// ---------------------------------------------------------------------------
// Checking

namespace {

const std::string kTmp = "\x01";

// Simultaneously instantiates the universals of a clause.
Formula instantiate(const Formula& f, const std::vector<Binder>& us, const std::vector<Term>& args) {
  Formula out = f;
  for (const auto& u : us) out = substitute(out, u.name, Term::var(kTmp + u.name, u.sort));
  for (std::size_t i = 0; i < us.size(); ++i) out = substitute(out, kTmp + us[i].name, args[i]);
  return out;
}

std::vector<Formula> premises_of(const Formula& body) {
  if (body.is(FK::Top)) return {};
  if (body.is(FK::And)) return body.subs;
  return {body};
}

bool env_mentions(const HypothesisEnv& env, const std::string& c) {
  for (const auto& [label, f] : env)
    if (constants_of(f).count(c)) return true;
  return false;
}

const Evidence& deref(const CheckContext& ctx, const Evidence& e, int hops = 0) {
  if (!e.is(EK::Ref)) return e;
  if (!ctx.store || hops > 64) throw Error(ErrorKind::Decode, "dangling evidence reference");
  auto it = ctx.store->find(*e.digest);
  if (it == ctx.store->end()) throw Error(ErrorKind::Decode, "dangling evidence reference");
  return deref(ctx, it->second, hops + 1);
}

void leaf_principals(const Evidence& e, const std::map<Digest, Evidence>* store, bool enter_knows,
                     std::set<std::string>& out, int hops = 0) {
  if (e.is(EK::Ref)) {
    if (!store || hops > 64) throw Error(ErrorKind::Decode, "dangling evidence reference");
    auto it = store->find(*e.digest);
    if (it == store->end()) throw Error(ErrorKind::Decode, "dangling evidence reference");
    leaf_principals(it->second, store, enter_knows, out, hops + 1);
    return;
  }
  if (e.is(EK::KnowsWrap) && !enter_knows) return;
  if (e.is(EK::ClauseApp) && e.digest && !e.owner.empty()) out.insert(e.owner);
  if (e.is(EK::AttLeaf) && e.leaf) out.insert(e.leaf->principal.name);
  for (const auto& s : e.subs) leaf_principals(s, store, true, out, 0);
}

class Checker {
 public:
  explicit Checker(const CheckContext& ctx) : ctx_(ctx) {}

  CheckResult run(const HypothesisEnv& env, const Evidence& e0, const Formula& phi,
                  const std::string& path) {
    if (ctx_.steps) ++*ctx_.steps;
    const Evidence& e = deref(ctx_, e0);
    auto fail = [&](const std::string& why) {
      return CheckResult::failure(path, why + " (against " + print(phi) + ")");
    };
    switch (e.kind) {
      case EK::Unit:
        if (!phi.is(FK::Top)) return fail("unit evidence");
        return CheckResult::success();
      case EK::Pair: {
        if (!phi.is(FK::And)) return fail("pair evidence");
        return tuple(env, e, phi.subs, 0, path);
      }
      case EK::Inl:
      case EK::Inr:
        if (!phi.is(FK::Or)) return fail("injection evidence");
        return run(env, e.subs[0], phi.subs[e.is(EK::Inl) ? 0 : 1],
                   path + (e.is(EK::Inl) ? "/inl" : "/inr"));
      case EK::Witness: {
        if (!phi.is(FK::Exists) || e.terms.size() != 1) return fail("witness evidence");
        const Term& t = e.terms[0];
        if (!sort_ok(t.sort, phi.sort)) return fail("witness " + print(t) + " has sort " + t.sort);
        return run(env, e.subs[0], substitute(phi.body(), phi.var, t), path + "/(" + print(t) + ")");
      }
      case EK::Abstraction: {
        if (phi.is(FK::Forall)) {
          const std::string& c = e.name;
          if (c.empty() || constants_of(phi).count(c) || env_mentions(env, c) ||
              (ctx_.sig && ctx_.sig->consts.count(c)))
            return fail("eigenconstant " + c + " is not fresh");
          Formula body = substitute(phi.body(), phi.var, Term::constant(c, phi.sort));
          return run(env, e.subs[0], body, path + "/\\" + c);
        }
        if (phi.is(FK::Implies)) {
          if (!phi.label.empty() && phi.label != e.name)
            return fail("hypothesis label " + e.name + " differs from " + phi.label);
          for (const auto& [l, f] : env)
            if (l == e.name) return fail("hypothesis label " + e.name + " reused");
          HypothesisEnv inner = env;
          inner.emplace_back(e.name, phi.subs[0]);
          return run(inner, e.subs[0], phi.subs[1], path + "/\\" + e.name);
        }
        return fail("abstraction evidence");
      }
      case EK::ClauseApp: return clause_app(env, e, phi, path);
      case EK::Hyp: {
        for (auto it = env.rbegin(); it != env.rend(); ++it) {
          if (it->first != e.name) continue;
          if (normalize(it->second, Role::Program) == phi) return CheckResult::success();
          return fail("hypothesis " + e.name + " does not match");
        }
        if (ctx_.trust_unresolved) return CheckResult::success();
        return fail("unbound hypothesis " + e.name);
      }
      case EK::AttLeaf: {
        if (!e.leaf) return fail("empty attestation leaf");
        const DirectoryEntry* key = ctx_.keys ? ctx_.keys->find(e.leaf->principal.name) : nullptr;
        if (!key || key->id.fingerprint != e.leaf->principal.fingerprint)
          return fail("unknown key for " + e.leaf->principal.name);
        auto payload = verify_attestation(key->public_key, *e.leaf);
        if (!payload) return fail("forged leaf signed as " + e.leaf->principal.name);
        if (!(*payload == phi)) return fail("leaf payload " + print(*payload) + " differs");
        return CheckResult::success();
      }
      case EK::TheoryHole: {
        if (!(e.instance == phi)) return fail("theory hole instance " + print(e.instance) + " differs");
        if (!pure_builtin(phi)) return fail("theory hole over non-builtin formula");
        std::optional<long long> clock;
        if (mentions_service_builtin(phi)) {
          auto c = receipt_clock(*this, e);
          if (!c) return fail("missing or forged clock receipt");
          clock = c;
        }
        auto v = eval_builtin_formula(phi, clock);
        if (!v) return fail("theory hole is not a ground builtin instance");
        if (!*v) return fail("theory hole evaluates to false");
        return CheckResult::success();
      }
      case EK::KnowsWrap: {
        if (!phi.is(FK::Knows) || !(phi.terms == e.terms)) return fail("knowledge evidence");
        CheckResult r = run(env, e.subs[0], phi.body(), path + "/knows");
        if (!r) return r;
        std::set<std::string> used;
        leaf_principals(e.subs[0], ctx_.store, false, used);
        std::set<std::string> allowed;
        for (const auto& t : e.terms) allowed.insert(t.name);
        for (const auto& u : used)
          if (!allowed.count(u)) return fail("provenance: evidence uses knowledge of " + u);
        return CheckResult::success();
      }
      case EK::Ref: break;
    }
    return fail("unexpected evidence");
  }

 private:
  static std::optional<long long> receipt_clock(const Checker& self, const Evidence& e) {
    if (!e.leaf || !self.ctx_.keys) return std::nullopt;
    const DirectoryEntry* key = self.ctx_.keys->find(kTimePrincipal);
    if (!key || e.leaf->principal.name != kTimePrincipal) return std::nullopt;
    auto payload = verify_attestation(key->public_key, *e.leaf);
    if (!payload) return std::nullopt;
    const Formula& body = payload->body();
    if (!body.is(FK::Atom) || body.pred != "time" || body.terms.size() != 1) return std::nullopt;
    return body.terms[0].as_integer();
  }

  bool sort_ok(const std::string& actual, const std::string& expected, const Signature* local = nullptr) const {
    if (actual == expected) return true;
    if (local && local->subsort(actual, expected)) return true;
    return ctx_.sig && ctx_.sig->subsort(actual, expected);
  }

  CheckResult tuple(const HypothesisEnv& env, const Evidence& e, const std::vector<Formula>& parts,
                    std::size_t i, const std::string& path) {
    if (i + 1 == parts.size()) return run(env, e, parts[i], path + "/" + std::to_string(i + 1));
    const Evidence& p = deref(ctx_, e);
    if (!p.is(EK::Pair))
      return CheckResult::failure(path, "expected a pair for " + std::to_string(parts.size() - i) +
                                            " remaining conjuncts");
    CheckResult r = run(env, p.subs[0], parts[i], path + "/" + std::to_string(i + 1));
    if (!r) return r;
    return tuple(env, p.subs[1], parts, i + 1, path);
  }

  CheckResult clause_app(const HypothesisEnv& env, const Evidence& e, const Formula& phi,
                         const std::string& path) {
    std::string here = path + "/" + e.name;
    auto fail = [&](const std::string& why) { return CheckResult::failure(here, why); };
    if (!phi.is_atomic() || phi.is_builtin()) return fail("clause application against " + print(phi));
    const Clause* clause = nullptr;
    const Signature* local_sig = nullptr;
    std::vector<Clause> hyp_clauses;
    if (e.digest) {
      auto it = ctx_.policies.find(*e.digest);
      if (it == ctx_.policies.end()) {
        if (ctx_.trust_unresolved) return CheckResult::success();
        return fail("unknown policy digest " + e.digest->hex().substr(0, 16));
      }
      if (auto* remote = std::get_if<RemoteChecker*>(&it->second)) {
        if ((*remote)->owner() != e.owner) return fail("policy owner mismatch");
        CheckResult r = (*remote)->remote_check(*e.digest, e, phi, env);
        if (!r) r.path = here + (r.path.empty() ? "" : ":" + r.path);
        return r;
      }
      const Policy* p = std::get<const Policy*>(it->second);
      if (p->owner != e.owner) return fail("policy owner mismatch");
      clause = p->find(e.name);
      if (!clause) return fail("no clause " + e.name + " in policy of " + p->owner);
      local_sig = &p->sig;
    } else {
      for (auto it = env.rbegin(); it != env.rend() && !clause; ++it) {
        if (e.name != it->first && e.name.rfind(it->first + "_", 0) != 0) continue;
        try {
          hyp_clauses = to_clauses(normalize(it->second, Role::Program), it->first);
        } catch (const Error&) {
          continue;
        }
        for (const auto& c : hyp_clauses)
          if (c.label == e.name) clause = &c;
      }
      if (!clause) {
        if (ctx_.trust_unresolved) return CheckResult::success();
        return fail("unbound hypothesis clause " + e.name);
      }
    }
    if (e.terms.size() != clause->universals.size())
      return fail("clause " + e.name + " takes " + std::to_string(clause->universals.size()) +
                  " arguments");
    for (std::size_t i = 0; i < e.terms.size(); ++i)
      if (!sort_ok(e.terms[i].sort, clause->universals[i].sort, local_sig))
        return fail("argument " + print(e.terms[i]) + " has sort " + e.terms[i].sort);
    Formula head = instantiate(clause->head, clause->universals, e.terms);
    if (!(head == phi)) return fail("instantiated head " + print(head) + " does not match " + print(phi));
    auto premises = premises_of(instantiate(clause->body, clause->universals, e.terms));
    if (premises.size() != e.subs.size())
      return fail("clause " + e.name + " has " + std::to_string(premises.size()) + " premises");
    for (std::size_t i = 0; i < premises.size(); ++i) {
      CheckResult r = run(env, e.subs[i], premises[i], here + "#" + std::to_string(i + 1));
      if (!r) return r;
    }
    return CheckResult::success();
  }

  const CheckContext& ctx_;
};

}  // namespace

CheckResult check(const CheckContext& ctx, const HypothesisEnv& env, const Evidence& e,
                  const Formula& phi) {
  try {
    return Checker(ctx).run(env, e, phi, "$");
  } catch (const Error& err) {
    return CheckResult::failure("$", err.what());
  }
}

std::set<Provenance> extract_provenance(const Evidence& e, const std::map<Digest, Evidence>* store) {
  std::set<Provenance> out;
  std::vector<const Evidence*> stack{&e};
  std::size_t hops = 0;
  while (!stack.empty()) {
    const Evidence* cur = stack.back();
    stack.pop_back();
    if (cur->is(EK::Ref)) {
      if (!store || ++hops > 1'000'000) throw Error(ErrorKind::Decode, "dangling evidence reference");
      auto it = store->find(*cur->digest);
      if (it == store->end()) throw Error(ErrorKind::Decode, "dangling evidence reference");
      stack.push_back(&it->second);
      continue;
    }
    if (cur->is(EK::ClauseApp)) out.insert(Provenance{cur->owner, cur->digest, cur->name});
    if (cur->is(EK::AttLeaf) && cur->leaf)
      out.insert(Provenance{cur->leaf->principal.name, std::nullopt,
                            cur->leaf->origin.empty() ? "leaf" : cur->leaf->origin});
    for (const auto& s : cur->subs) stack.push_back(&s);
  }
  return out;
}

std::string render_spine(const Evidence& e) {
  switch (e.kind) {
    case EK::Unit: return "*";
    case EK::Pair: return "(" + render_spine(e.subs[0]) + "," + render_spine(e.subs[1]) + ")";
    case EK::Inl: return "inl(" + render_spine(e.subs[0]) + ")";
    case EK::Inr: return "inr(" + render_spine(e.subs[0]) + ")";
    case EK::Witness: return "(" + print(e.terms[0]) + "," + render_spine(e.subs[0]) + ")";
    case EK::Abstraction: return "\\" + e.name + "." + render_spine(e.subs[0]);
    case EK::ClauseApp: {
      std::string out = e.name;
      for (const auto& t : e.terms) out += "(" + print(t) + ")";
      for (const auto& s : e.subs) out += "(" + render_spine(s) + ")";
      return out;
    }
    case EK::Hyp: return e.name;
    case EK::AttLeaf:
      if (!e.leaf) return "?";
      return e.leaf->origin.empty() ? "sig[" + e.leaf->principal.name + "]" : e.leaf->origin;
    case EK::TheoryHole: return "_";
    case EK::KnowsWrap: {
      std::string out = "K{";
      for (std::size_t i = 0; i < e.terms.size(); ++i) out += (i ? "," : "") + print(e.terms[i]);
      return out + "}(" + render_spine(e.subs[0]) + ")";
    }
    case EK::Ref: return "#" + e.digest->hex().substr(0, 8);
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

void encode_head(ByteWriter& w, const Evidence& e) {
  w.u8(tag::Evidence);
  w.u8(static_cast<std::uint8_t>(e.kind));
  switch (e.kind) {
    case EK::Unit:
    case EK::Pair:
    case EK::Inl:
    case EK::Inr: break;
    case EK::Witness: encode(w, e.terms[0]); break;
    case EK::Abstraction:
    case EK::Hyp: w.str(e.name); break;
    case EK::ClauseApp:
      w.str(e.name);
      w.u8(e.digest ? 1 : 0);
      if (e.digest) w.raw(e.digest->value);
      w.str(e.owner);
      w.u32(static_cast<std::uint32_t>(e.terms.size()));
      for (const auto& t : e.terms) encode(w, t);
      w.u32(static_cast<std::uint32_t>(e.subs.size()));
      break;
    case EK::AttLeaf: encode(w, *e.leaf); break;
    case EK::TheoryHole:
      encode(w, e.instance);
      w.u8(e.leaf ? 1 : 0);
      if (e.leaf) encode(w, *e.leaf);
      break;
    case EK::KnowsWrap:
      w.u32(static_cast<std::uint32_t>(e.terms.size()));
      for (const auto& t : e.terms) encode(w, t);
      break;
    case EK::Ref: w.raw(e.digest->value); break;
  }
}

Digest read_digest(ByteReader& r) {
  Digest d;
  auto b = r.raw(32);
  std::copy(b.begin(), b.end(), d.value.begin());
  return d;
}

std::uint8_t read_flag(ByteReader& r) {
  auto f = r.u8();
  if (f > 1) throw Error(ErrorKind::Decode, "bad optional flag");
  return f;
}

// Full encodings and digests of every subtree, keyed by node address.
struct Sizes {
  std::unordered_map<const Evidence*, std::pair<Digest, std::size_t>> info;
  std::map<Digest, std::size_t> count;

  Bytes visit(const Evidence& e) {
    ByteWriter w;
    encode_head(w, e);
    for (const auto& s : e.subs) w.raw(visit(s));
    Bytes b = w.take();
    Digest d = Digest::of(b);
    info[&e] = {d, b.size()};
    ++count[d];
    return b;
  }
};

class DedupWriter {
 public:
  DedupWriter(Sizes& sizes, std::map<Digest, const Evidence*>& store)
      : sizes_(sizes), store_(store) {}

  void emit(ByteWriter& w, const Evidence& e) {
    const auto& [d, size] = sizes_.info.at(&e);
    if (size >= kDedupThreshold && sizes_.count.at(d) >= 2) {
      Evidence r = Evidence::ref(d);
      encode_head(w, r);
      store_.emplace(d, &e);
      return;
    }
    emit_body(w, e);
  }

  void emit_body(ByteWriter& w, const Evidence& e) {
    encode_head(w, e);
    for (const auto& s : e.subs) emit(w, s);
  }

 private:
  Sizes& sizes_;
  std::map<Digest, const Evidence*>& store_;
};

Evidence expand(const Evidence& e, const std::map<Digest, Evidence>& raw,
                std::map<Digest, Evidence>& done, std::set<Digest>& active) {
  if (e.is(EK::Ref)) {
    const Digest& d = *e.digest;
    if (auto it = done.find(d); it != done.end()) return it->second;
    auto it = raw.find(d);
    if (it == raw.end()) throw Error(ErrorKind::Decode, "dangling evidence reference " + d.hex().substr(0, 16));
    if (!active.insert(d).second) throw Error(ErrorKind::Decode, "cyclic evidence reference");
    Evidence full = expand(it->second, raw, done, active);
    active.erase(d);
    if (Digest::of(encode(full)) != d)
      throw Error(ErrorKind::Decode, "evidence store entry does not match its digest");
    done.emplace(d, full);
    return full;
  }
  Evidence out = e;
  for (auto& s : out.subs) s = expand(s, raw, done, active);
  return out;
}

}  // namespace

void encode(ByteWriter& w, const Evidence& e) {
  encode_head(w, e);
  for (const auto& s : e.subs) encode(w, s);
}

Evidence decode_evidence(ByteReader& r) {
  if (r.u8() != tag::Evidence) throw Error(ErrorKind::Decode, "expected evidence tag");
  auto k = r.u8();
  if (k < 1 || k > 12) throw Error(ErrorKind::Decode, "bad evidence kind");
  Evidence e;
  e.kind = static_cast<EK>(k);
  std::size_t children = 0;
  switch (e.kind) {
    case EK::Unit: break;
    case EK::Pair: children = 2; break;
    case EK::Inl:
    case EK::Inr: children = 1; break;
    case EK::Witness:
      e.terms.push_back(decode_term(r));
      children = 1;
      break;
    case EK::Abstraction:
      e.name = r.str();
      children = 1;
      break;
    case EK::Hyp: e.name = r.str(); break;
    case EK::ClauseApp: {
      e.name = r.str();
      if (read_flag(r)) e.digest = read_digest(r);
      e.owner = r.str();
      auto n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) e.terms.push_back(decode_term(r));
      children = r.u32();
      break;
    }
    case EK::AttLeaf: e.leaf = decode_attestation(r); break;
    case EK::TheoryHole:
      e.instance = decode_formula(r);
      if (read_flag(r)) e.leaf = decode_attestation(r);
      break;
    case EK::KnowsWrap: {
      auto n = r.u32();
      for (std::uint32_t i = 0; i < n; ++i) e.terms.push_back(decode_term(r));
      children = 1;
      break;
    }
    case EK::Ref: e.digest = read_digest(r); break;
  }
  for (std::size_t i = 0; i < children; ++i) e.subs.push_back(decode_evidence(r));
  return e;
}

Bytes encode_certificate(const Certificate& c) {
  Sizes sizes;
  sizes.visit(c.root);
  std::map<Digest, const Evidence*> store;
  DedupWriter dw(sizes, store);
  ByteWriter root;
  dw.emit(root, c.root);
  // Store entries may reference further entries; emit until closed.
  std::map<Digest, Bytes> entries;
  while (entries.size() < store.size()) {
    for (const auto& [d, e] : std::map<Digest, const Evidence*>(store)) {
      if (entries.count(d)) continue;
      ByteWriter w;
      dw.emit_body(w, *e);
      entries.emplace(d, w.take());
    }
  }
  ByteWriter w;
  w.u8(tag::Certificate);
  w.u8(1);
  encode(w, c.root_formula);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [d, b] : entries) {
    w.raw(d.value);
    w.raw(b);
  }
  w.raw(root.bytes());
  w.u32(static_cast<std::uint32_t>(c.policy_digests.size()));
  for (const auto& d : c.policy_digests) w.raw(d.value);
  std::vector<DirectoryEntry> dir = c.directory;
  std::sort(dir.begin(), dir.end(),
            [](const DirectoryEntry& a, const DirectoryEntry& b) { return a.id < b.id; });
  w.u32(static_cast<std::uint32_t>(dir.size()));
  for (const auto& e : dir) {
    encode(w, e.id);
    w.blob(e.public_key);
  }
  w.u8(c.created_at ? 1 : 0);
  if (c.created_at) encode(w, *c.created_at);
  return w.take();
}

Certificate decode_certificate(ByteView bytes) {
  ByteReader r(bytes);
  if (r.u8() != tag::Certificate || r.u8() != 1) throw Error(ErrorKind::Decode, "not a certificate");
  Certificate c;
  c.root_formula = decode_formula(r);
  std::map<Digest, Evidence> raw;
  auto n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Digest d = read_digest(r);
    if (!raw.empty() && !(raw.rbegin()->first < d))
      throw Error(ErrorKind::Decode, "evidence store not in canonical order");
    raw.emplace(d, decode_evidence(r));
  }
  Evidence root = decode_evidence(r);
  auto nd = r.u32();
  for (std::uint32_t i = 0; i < nd; ++i) c.policy_digests.insert(read_digest(r));
  auto ne = r.u32();
  for (std::uint32_t i = 0; i < ne; ++i) {
    DirectoryEntry e;
    e.id = decode_principal(r);
    e.public_key = r.blob();
    c.directory.push_back(std::move(e));
  }
  if (read_flag(r)) c.created_at = decode_attestation(r);
  r.expect_done();
  std::set<Digest> active;
  c.root = expand(root, raw, c.store, active);
  for (const auto& [d, e] : raw)
    if (!c.store.count(d)) throw Error(ErrorKind::Decode, "unreferenced evidence store entry");
  return c;
}

namespace {
const char* kBegin = "-----BEGIN cyberlogic-cert v1-----";
const char* kEnd = "-----END cyberlogic-cert v1-----";
}  // namespace

std::string certificate_to_text(const Certificate& c) {
  std::string b64 = to_base64(encode_certificate(c));
  std::ostringstream out;
  out << kBegin << "\n";
  out << "Formula: " << print(c.root_formula) << "\n";
  out << "Evidence: " << render_spine(c.root) << "\n";
  out << "Digest: " << certificate_digest(c).hex() << "\n\n";
  for (std::size_t i = 0; i < b64.size(); i += 64) out << b64.substr(i, 64) << "\n";
  out << kEnd << "\n";
  return out.str();
}

Certificate certificate_from_text(std::string_view text) {
  auto begin = text.find(kBegin);
  auto end = text.find(kEnd);
  if (begin == std::string_view::npos || end == std::string_view::npos || end < begin)
    throw Error(ErrorKind::Decode, "missing certificate armor");
  std::string_view body = text.substr(begin + std::string_view(kBegin).size(),
                                      end - begin - std::string_view(kBegin).size());
  std::string b64;
  std::size_t pos = 0;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    std::string_view line = body.substr(pos, nl == std::string_view::npos ? body.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? body.size() : nl + 1;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty() || line.find(':') != std::string_view::npos) continue;
    b64 += line;
  }
  return decode_certificate(from_base64(b64));
}

Certificate load_certificate(ByteView bytes) {
  std::string_view sv(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (sv.find(kBegin) != std::string_view::npos) return certificate_from_text(sv);
  return decode_certificate(bytes);
}

void complete_certificate(Certificate& c, const KeyDirectory& dir) {
  std::set<std::string> names;
  std::vector<const Evidence*> stack{&c.root};
  while (!stack.empty()) {
    const Evidence* e = stack.back();
    stack.pop_back();
    if (e->is(EK::ClauseApp) && e->digest) c.policy_digests.insert(*e->digest);
    if ((e->is(EK::AttLeaf) || e->is(EK::TheoryHole)) && e->leaf) names.insert(e->leaf->principal.name);
    for (const auto& s : e->subs) stack.push_back(&s);
  }
  if (c.created_at) names.insert(c.created_at->principal.name);
  for (const auto& n : names) {
    bool present = std::any_of(c.directory.begin(), c.directory.end(),
                               [&](const DirectoryEntry& d) { return d.id.name == n; });
    if (present) continue;
    if (const DirectoryEntry* d = dir.find(n)) c.directory.push_back(DirectoryEntry{d->id, d->public_key, ""});
  }
  std::sort(c.directory.begin(), c.directory.end(),
            [](const DirectoryEntry& a, const DirectoryEntry& b) { return a.id < b.id; });
}

Digest certificate_digest(const Certificate& c) {
  ByteWriter w;
  w.str("cyberlogic-cert-digest-v1");
  encode(w, c.root_formula);
  encode(w, c.root);
  w.u32(static_cast<std::uint32_t>(c.policy_digests.size()));
  for (const auto& d : c.policy_digests) w.raw(d.value);
  return Digest::of(w.bytes());
}

namespace {
Formula seal_payload(const Certificate& c) {
  return Formula::atom("certified", {Term::constant(certificate_digest(c).hex(), "$Digest")});
}
}  // namespace

void seal_certificate(Certificate& c, const KeyPair& kp, const PrincipalId& issuer,
                      std::optional<Term> issued_at) {
  c.created_at.reset();
  c.created_at = sign_attestation(kp, issuer, seal_payload(c), std::move(issued_at));
  if (std::none_of(c.directory.begin(), c.directory.end(),
                   [&](const DirectoryEntry& d) { return d.id.name == issuer.name; })) {
    c.directory.push_back(DirectoryEntry{issuer, kp.public_key, ""});
    std::sort(c.directory.begin(), c.directory.end(),
              [](const DirectoryEntry& a, const DirectoryEntry& b) { return a.id < b.id; });
  }
}

bool verify_seal(const Certificate& c, const KeyDirectory& dir) {
  if (!c.created_at) return false;
  const DirectoryEntry* key = dir.find(c.created_at->principal.name);
  if (!key || key->id.fingerprint != c.created_at->principal.fingerprint) return false;
  auto payload = verify_attestation(key->public_key, *c.created_at);
  if (!payload) return false;
  return payload->body() == seal_payload(c);
}

CheckResult check_certificate(CheckContext ctx, const Certificate& c) {
  KeyDirectory own;
  if (!ctx.keys) {
    for (const auto& d : c.directory) own.add(d);
    ctx.keys = &own;
  }
  ctx.store = &c.store;
  try {
    std::set<std::string> leaves;
    leaf_principals(c.root, &c.store, true, leaves);
    std::set<std::string> listed;
    for (const auto& d : c.directory) listed.insert(d.id.name);
    std::vector<const Evidence*> stack{&c.root};
    while (!stack.empty()) {
      const Evidence* e = stack.back();
      stack.pop_back();
      if (e->is(EK::AttLeaf) && e->leaf && !listed.count(e->leaf->principal.name))
        return CheckResult::failure("$", "leaf principal " + e->leaf->principal.name +
                                             " missing from certificate directory");
      for (const auto& s : e->subs) stack.push_back(&s);
    }
  } catch (const Error& err) {
    return CheckResult::failure("$", err.what());
  }
  if (c.created_at && !verify_seal(c, *ctx.keys)) return CheckResult::failure("$", "bad issuer seal");
  return check(ctx, {}, c.root, c.root_formula);
}

}  // namespace cyberlogic
