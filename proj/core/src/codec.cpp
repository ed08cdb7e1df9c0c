#include "cyberlogic/codec.hpp"

#include "cyberlogic/error.hpp"

namespace cyberlogic {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::Decode, what); }

void expect_tag(ByteReader& r, std::uint8_t t, const char* what) {
  if (r.u8() != t) bad(std::string("expected ") + what + " tag");
}

void strings(ByteWriter& w, const std::vector<std::string>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (const auto& s : v) w.str(s);
}

std::vector<std::string> strings(ByteReader& r) {
  std::vector<std::string> v(r.u32());
  for (auto& s : v) s = r.str();
  return v;
}

// Element counts are bounded by the remaining input so that corrupt lengths fail fast.
std::uint32_t count(ByteReader& r) { return r.u32(); }

void encode_sig(ByteWriter& w, const Signature& s) {
  w.u32(static_cast<std::uint32_t>(s.sorts.size()));
  for (const auto& [k, v] : s.sorts) {
    w.str(k);
    strings(w, v);
  }
  w.u32(static_cast<std::uint32_t>(s.preds.size()));
  for (const auto& [k, v] : s.preds) {
    w.str(k);
    strings(w, v);
  }
  w.u32(static_cast<std::uint32_t>(s.consts.size()));
  for (const auto& [k, v] : s.consts) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(s.funcs.size()));
  for (const auto& [k, v] : s.funcs) {
    w.str(k);
    strings(w, v.args);
    w.str(v.result);
  }
}

template <class Map, class F>
void read_map(ByteReader& r, Map& m, F value) {
  auto n = count(r);
  std::string prev;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str();
    if (i && !(prev < k)) bad("map keys out of order");
    m.emplace(k, value());
    prev = std::move(k);
  }
}

Signature decode_sig(ByteReader& r) {
  Signature s;
  read_map(r, s.sorts, [&] { return strings(r); });
  read_map(r, s.preds, [&] { return strings(r); });
  read_map(r, s.consts, [&] { return r.str(); });
  read_map(r, s.funcs, [&] {
    FuncDecl d;
    d.args = strings(r);
    d.result = r.str();
    return d;
  });
  return s;
}

}  // namespace

void encode(ByteWriter& w, const Term& t) {
  w.u8(tag::Term);
  w.u8(static_cast<std::uint8_t>(t.kind));
  w.str(t.name);
  w.str(t.sort);
  if (t.kind == Term::Kind::App) {
    w.u32(static_cast<std::uint32_t>(t.args.size()));
    for (const auto& a : t.args) encode(w, a);
  }
}

Term decode_term(ByteReader& r) {
  expect_tag(r, tag::Term, "term");
  Term t;
  auto k = r.u8();
  if (k < 1 || k > 3) bad("bad term kind");
  t.kind = static_cast<Term::Kind>(k);
  t.name = r.str();
  t.sort = r.str();
  if (t.kind == Term::Kind::App) {
    auto n = count(r);
    for (std::uint32_t i = 0; i < n; ++i) t.args.push_back(decode_term(r));
  }
  return t;
}

void encode(ByteWriter& w, const Formula& f) {
  using K = Formula::Kind;
  w.u8(tag::Formula);
  w.u8(static_cast<std::uint8_t>(f.kind));
  switch (f.kind) {
    case K::Top:
    case K::Bottom: return;
    case K::Atom:
      w.str(f.pred);
      w.u32(static_cast<std::uint32_t>(f.terms.size()));
      for (const auto& t : f.terms) encode(w, t);
      return;
    case K::Attest:
      encode(w, f.principal());
      encode(w, f.body());
      return;
    case K::Knows:
      w.u32(static_cast<std::uint32_t>(f.terms.size()));
      for (const auto& t : f.terms) encode(w, t);
      encode(w, f.body());
      return;
    case K::And:
      w.u32(static_cast<std::uint32_t>(f.subs.size()));
      for (const auto& s : f.subs) encode(w, s);
      return;
    case K::Or:
      encode(w, f.subs[0]);
      encode(w, f.subs[1]);
      return;
    case K::Implies:
      w.str(f.label);
      encode(w, f.subs[0]);
      encode(w, f.subs[1]);
      return;
    case K::Forall:
    case K::Exists:
      w.str(f.var);
      w.str(f.sort);
      encode(w, f.body());
      return;
  }
}

Formula decode_formula(ByteReader& r) {
  using K = Formula::Kind;
  expect_tag(r, tag::Formula, "formula");
  auto k = r.u8();
  if (k < 1 || k > 10) bad("bad formula kind");
  Formula f;
  f.kind = static_cast<K>(k);
  switch (f.kind) {
    case K::Top:
    case K::Bottom: break;
    case K::Atom: {
      f.pred = r.str();
      auto n = count(r);
      for (std::uint32_t i = 0; i < n; ++i) f.terms.push_back(decode_term(r));
      break;
    }
    case K::Attest:
      f.terms.push_back(decode_term(r));
      f.subs.push_back(decode_formula(r));
      break;
    case K::Knows: {
      auto n = count(r);
      for (std::uint32_t i = 0; i < n; ++i) {
        f.terms.push_back(decode_term(r));
        if (i && !(f.terms[i - 1] < f.terms[i])) bad("knows set not canonical");
      }
      f.subs.push_back(decode_formula(r));
      break;
    }
    case K::And: {
      auto n = count(r);
      if (n < 2) bad("conjunction with fewer than two parts");
      for (std::uint32_t i = 0; i < n; ++i) f.subs.push_back(decode_formula(r));
      break;
    }
    case K::Or:
      f.subs.push_back(decode_formula(r));
      f.subs.push_back(decode_formula(r));
      break;
    case K::Implies:
      f.label = r.str();
      f.subs.push_back(decode_formula(r));
      f.subs.push_back(decode_formula(r));
      break;
    case K::Forall:
    case K::Exists:
      f.var = r.str();
      f.sort = r.str();
      f.subs.push_back(decode_formula(r));
      break;
  }
  return f;
}

void encode(ByteWriter& w, const Clause& c) {
  w.u8(tag::Clause);
  w.u8(1);
  w.str(c.label);
  w.u32(static_cast<std::uint32_t>(c.universals.size()));
  for (const auto& b : c.universals) {
    w.str(b.name);
    w.str(b.sort);
  }
  encode(w, c.body);
  encode(w, c.head);
}

Clause decode_clause(ByteReader& r) {
  expect_tag(r, tag::Clause, "clause");
  if (r.u8() != 1) bad("bad clause kind");
  Clause c;
  c.label = r.str();
  auto n = count(r);
  for (std::uint32_t i = 0; i < n; ++i) {
    Binder b;
    b.name = r.str();
    b.sort = r.str();
    c.universals.push_back(std::move(b));
  }
  c.body = decode_formula(r);
  c.head = decode_formula(r);
  return c;
}

void encode(ByteWriter& w, const Policy& p) {
  w.u8(tag::Policy);
  w.u8(1);
  w.str(p.owner);
  encode_sig(w, p.sig);
  w.u32(static_cast<std::uint32_t>(p.clauses.size()));
  for (const auto& c : p.clauses) encode(w, c);
}

Policy decode_policy(ByteReader& r) {
  expect_tag(r, tag::Policy, "policy");
  if (r.u8() != 1) bad("bad policy kind");
  Policy p;
  p.owner = r.str();
  p.sig = decode_sig(r);
  auto n = count(r);
  for (std::uint32_t i = 0; i < n; ++i) p.clauses.push_back(decode_clause(r));
  p.rehash();
  return p;
}

void encode(ByteWriter& w, const PrincipalId& id) {
  w.u8(tag::Principal);
  w.u8(1);
  w.str(id.name);
  w.raw(id.fingerprint.value);
}

PrincipalId decode_principal(ByteReader& r) {
  expect_tag(r, tag::Principal, "principal");
  if (r.u8() != 1) bad("bad principal kind");
  PrincipalId id;
  id.name = r.str();
  auto fp = r.raw(32);
  std::copy(fp.begin(), fp.end(), id.fingerprint.value.begin());
  return id;
}

void encode(ByteWriter& w, const SignedAttestation& sa) {
  w.u8(tag::Attestation);
  w.u8(1);
  encode(w, sa.principal);
  w.blob(sa.formula);
  w.blob(sa.signature);
  w.u8(sa.issued_at ? 1 : 0);
  if (sa.issued_at) encode(w, *sa.issued_at);
  w.blob(sa.session_nonce);
  w.str(sa.origin);
}

SignedAttestation decode_attestation(ByteReader& r) {
  expect_tag(r, tag::Attestation, "attestation");
  if (r.u8() != 1) bad("bad attestation kind");
  SignedAttestation sa;
  sa.principal = decode_principal(r);
  sa.formula = r.blob();
  sa.signature = r.blob();
  auto has_time = r.u8();
  if (has_time > 1) bad("bad optional flag");
  if (has_time) sa.issued_at = decode_term(r);
  sa.session_nonce = r.blob();
  sa.origin = r.str();
  return sa;
}

Formula decode_formula(ByteView bytes) {
  ByteReader r(bytes);
  Formula f = decode_formula(r);
  r.expect_done();
  return f;
}

Policy decode_policy(ByteView bytes) {
  ByteReader r(bytes);
  Policy p = decode_policy(r);
  r.expect_done();
  return p;
}

SignedAttestation decode_attestation(ByteView bytes) {
  ByteReader r(bytes);
  SignedAttestation sa = decode_attestation(r);
  r.expect_done();
  return sa;
}

Digest digest_of(const Formula& f) { return Digest::of(encode(f)); }
Digest digest_of(const Policy& p) { return Digest::of(encode(p)); }

void Policy::rehash() { digest = digest_of(*this); }

}  // namespace cyberlogic
