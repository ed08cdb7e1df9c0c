#include "doctest.h"

#include <algorithm>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/scenarios.hpp"
#include "harness.hpp"

using namespace cyberlogic;

namespace {

const ScenarioResult& hospital() {
  static const ScenarioResult r = run_scenario("hospital");
  return r;
}

CheckContext hospital_context(const ScenarioResult& r) {
  CheckContext ctx;
  r.policies.add_to(ctx);
  return ctx;
}

// Fills keys from the certificate's own directory.
struct WithKeys {
  KeyDirectory dir;
  explicit WithKeys(const Certificate& c) {
    for (const auto& e : c.directory) dir.add(e);
  }
};

const Evidence* first_leaf(const Evidence& e) {
  if (e.is(Evidence::Kind::AttLeaf)) return &e;
  for (const auto& s : e.subs)
    if (auto* l = first_leaf(s)) return l;
  return nullptr;
}

Evidence* first_leaf(Evidence& e) { return const_cast<Evidence*>(first_leaf(static_cast<const Evidence&>(e))); }

}  // namespace

TEST_SUITE("check") {
  TEST_CASE("unit realizes top with no policies") {
    CHECK(check(CheckContext{}, {}, Evidence::unit(), Formula::top()).ok);
    CHECK_FALSE(check(CheckContext{}, {}, Evidence::unit(), Formula::atom("p", {})).ok);
  }

  TEST_CASE("hospital certificate checks against the three policies") {
    const auto& r = hospital();
    REQUIRE(r.certificate);
    WithKeys k(*r.certificate);
    CheckContext ctx = hospital_context(r);
    ctx.keys = &k.dir;
    CheckResult res = check_certificate(ctx, *r.certificate);
    CHECK_MESSAGE(res.ok, res.path << ": " << res.reason);
  }

  TEST_CASE("a flipped leaf signature bit is a forged leaf") {
    Certificate c = *hospital().certificate;
    Evidence* leaf = first_leaf(c.root);
    REQUIRE(leaf);
    leaf->leaf->signature[5] ^= 0x10;
    WithKeys k(c);
    CheckContext ctx = hospital_context(hospital());
    ctx.keys = &k.dir;
    CHECK_FALSE(check_certificate(ctx, c).ok);
    // The seal fails first; the bare evidence check must name the leaf.
    ctx.store = &c.store;
    CheckResult res = check(ctx, {}, c.root, c.root_formula);
    CHECK_FALSE(res.ok);
    CHECK_MESSAGE(res.reason.find("forged") != std::string::npos, res.reason);
    CHECK_FALSE(res.path.empty());
  }

  TEST_CASE("unknown policy digest and unknown label") {
    const auto& r = hospital();
    Certificate c = *r.certificate;
    CheckContext none;
    WithKeys k(c);
    none.keys = &k.dir;
    CHECK_FALSE(check_certificate(none, c).ok);

    Evidence e = c.root;
    REQUIRE(e.is(Evidence::Kind::ClauseApp));
    e.name = "a9";
    CheckContext ctx = hospital_context(r);
    ctx.keys = &k.dir;
    CheckResult res = check(ctx, {}, e, c.root_formula);
    CHECK_FALSE(res.ok);
    CHECK(res.reason.find("a9") != std::string::npos);
  }

  TEST_CASE("knowledge evidence must come from the named principals") {
    Signature sig = parse_policy("principal K, KT, KU. pred critical(Principal).", "").sig;
    Policy ku = parse_policy("u1: K says critical(K).", "KU", sig);
    Policy kt = parse_policy("t1: K says critical(K).", "KT", sig);
    Formula body = Formula::attest(Term::constant("K", sorts::Principal),
                                   Formula::atom("critical", {Term::constant("K", sorts::Principal)}));
    std::vector<Term> q{Term::constant("K", sorts::Principal), Term::constant("KT", sorts::Principal)};
    Formula phi = Formula::knows(q, body);
    CheckContext ctx;
    ctx.add(ku);
    ctx.add(kt);

    Evidence from_u = Evidence::knows_wrap(q, Evidence::clause_app("u1", ku.digest, "KU", {}, {}));
    CheckResult bad = check(ctx, {}, from_u, phi);
    CHECK_FALSE(bad.ok);
    CHECK(bad.reason.find("provenance") != std::string::npos);

    Evidence from_t = Evidence::knows_wrap(q, Evidence::clause_app("t1", kt.digest, "KT", {}, {}));
    CHECK(check(ctx, {}, from_t, phi).ok);

    Formula common = Formula::knows({}, body);
    CHECK_FALSE(check(ctx, {}, Evidence::knows_wrap({}, Evidence::clause_app("t1", kt.digest, "KT", {}, {})), common).ok);
  }

  TEST_CASE("hypotheses come from the environment") {
    Formula p = Formula::atom("p", {Term::integer(1)});
    HypothesisEnv env{{"h", p}};
    CHECK(check(CheckContext{}, env, Evidence::hyp("h"), p).ok);
    CHECK_FALSE(check(CheckContext{}, {}, Evidence::hyp("h"), p).ok);
    CHECK_FALSE(check(CheckContext{}, env, Evidence::hyp("h"), Formula::atom("p", {Term::integer(2)})).ok);
    Formula imp = Formula::implies(p, p, "h");
    CHECK(check(CheckContext{}, {}, Evidence::abstraction("h", Evidence::hyp("h")), imp).ok);
  }

  TEST_CASE("evidence shapes must match the formula") {
    Formula p = Formula::atom("p", {Term::integer(1)});
    HypothesisEnv env{{"h", p}};
    CHECK(check(CheckContext{}, env, Evidence::inl(Evidence::hyp("h")), Formula::disj(p, Formula::top())).ok);
    CHECK(check(CheckContext{}, env, Evidence::inr(Evidence::unit()), Formula::disj(p, Formula::top())).ok);
    CHECK_FALSE(check(CheckContext{}, env, Evidence::inr(Evidence::hyp("h")), Formula::disj(p, Formula::top())).ok);
    Formula ex = Formula::exists("x", sorts::Int, Formula::atom("p", {Term::var("x", sorts::Int)}));
    CHECK(check(CheckContext{}, env, Evidence::witness(Term::integer(1), Evidence::hyp("h")), ex).ok);
    CHECK_FALSE(check(CheckContext{}, env, Evidence::witness(Term::integer(2), Evidence::hyp("h")), ex).ok);
    CHECK_FALSE(check(CheckContext{}, env, Evidence::witness(Term::constant("K", sorts::Principal), Evidence::hyp("h")), ex).ok);
  }

  TEST_CASE("theory holes are re-evaluated") {
    Term b = Term::constant("B", sorts::Principal);
    Term c = Term::constant("C", sorts::Principal);
    Formula ne = Formula::atom("!=", {b, c});
    CHECK(check(CheckContext{}, {}, Evidence::theory_hole(ne), ne).ok);
    Formula eq = Formula::atom("!=", {b, b});
    CHECK_FALSE(check(CheckContext{}, {}, Evidence::theory_hole(eq), eq).ok);
  }

  TEST_CASE("checking cost is linear in evidence size") {
    testing::LocalNode k("K", "pred p(Int). pred q(Int).\nf: forall x:Int. p(x).\nr: forall x:Int. p(x) => q(x).\n");
    Digest d = k.policy.digest;
    // Built directly: the evidence the solver would produce for q(0) /\ ... /\ q(n-1).
    auto steps_for = [&](int n) {
      std::string goal;
      std::vector<Evidence> parts;
      for (int i = 0; i < n; ++i) {
        goal += (i ? " /\\ q(" : "q(") + std::to_string(i) + ")";
        Term t = Term::integer(i);
        parts.push_back(Evidence::clause_app("r", d, "K", {t}, {Evidence::clause_app("f", d, "K", {t}, {})}));
      }
      Formula g = k.goal(goal);
      std::size_t steps = 0;
      CheckResult res = k.check(g, Evidence::tuple(std::move(parts)), &steps);
      REQUIRE_MESSAGE(res.ok, res.path << ": " << res.reason);
      return static_cast<double>(steps);
    };
    double s1 = steps_for(250), s2 = steps_for(500), s3 = steps_for(1000);
    CHECK(s2 / s1 == doctest::Approx(2.0).epsilon(0.25));
    CHECK(s3 / s2 == doctest::Approx(2.0).epsilon(0.25));
  }
}

TEST_SUITE("certificates") {
  TEST_CASE("binary and text round trips") {
    const Certificate& c = *hospital().certificate;
    Bytes b = encode_certificate(c);
    Certificate back = decode_certificate(b);
    CHECK(back == c);
    CHECK(encode_certificate(back) == b);
    std::string text = certificate_to_text(c);
    CHECK(text.rfind("-----BEGIN cyberlogic-cert v1-----", 0) == 0);
    CHECK(certificate_from_text(text) == c);
    CHECK(load_certificate(to_bytes(text)) == c);
    CHECK(load_certificate(b) == c);
  }

  TEST_CASE("dangling references do not decode") {
    Certificate c;
    c.root_formula = Formula::top();
    c.root = Evidence::ref(Digest::of(to_bytes("missing")));
    CHECK_THROWS_AS(decode_certificate(encode_certificate(c)), Error);
  }

  TEST_CASE("repeated subtrees are stored once") {
    Formula p = Formula::atom("p", {Term::integer(1)});
    Evidence big = Evidence::clause_app("a_rather_long_clause_label", Digest::of(to_bytes("x")), "K",
                                        {Term::integer(1), Term::integer(2), Term::integer(3)}, {});
    Certificate c;
    c.root_formula = Formula::conj({p, p});
    c.root = Evidence::pair(big, big);
    Bytes b = encode_certificate(c);
    Certificate back = decode_certificate(b);
    CHECK(back.root == c.root);
    CHECK(back.store.size() == 1);
    Certificate single = c;
    single.root = Evidence::pair(big, Evidence::unit());
    CHECK(b.size() < encode_certificate(single).size() + encode(big).size());
  }

  TEST_CASE("store entries must match their digests") {
    Formula p = Formula::atom("p", {Term::integer(1)});
    Evidence big = Evidence::clause_app("a_rather_long_clause_label", Digest::of(to_bytes("x")), "K",
                                        {Term::integer(1), Term::integer(2), Term::integer(3)}, {});
    Certificate c;
    c.root_formula = Formula::conj({p, p});
    c.root = Evidence::pair(big, big);
    Bytes b = encode_certificate(c);
    Bytes label = to_bytes("a_rather_long_clause_label");
    auto it = std::search(b.begin(), b.end(), label.begin(), label.end());
    REQUIRE(it != b.end());
    *it ^= 1;
    CHECK_THROWS_AS(decode_certificate(b), Error);
  }

  TEST_CASE("the issuer seal covers formula and evidence") {
    Certificate c = *hospital().certificate;
    WithKeys k(c);
    REQUIRE(c.created_at);
    CHECK(verify_seal(c, k.dir));
    c.root_formula = Formula::top();
    CHECK_FALSE(verify_seal(c, k.dir));
  }
}

TEST_SUITE("provenance") {
  TEST_CASE("hospital certificate draws on A, B and C") {
    std::set<std::string> owners;
    for (const auto& p : extract_provenance(hospital().certificate->root)) owners.insert(p.principal);
    CHECK(owners == std::set<std::string>{"A", "B", "C"});
  }

  TEST_CASE("unit has none and a leaf has its signer") {
    CHECK(extract_provenance(Evidence::unit()).empty());
    auto [kp, id] = derive_keypair(1, "Cons42");
    Formula visa = Formula::atom("visa", {Term::constant("John Doe", "Name")});
    auto prov = extract_provenance(Evidence::att_leaf(sign_attestation(kp, id, visa)));
    REQUIRE(prov.size() == 1);
    CHECK(prov.begin()->principal == "Cons42");
    CHECK_FALSE(prov.begin()->digest);
  }

  TEST_CASE("dangling references are reported") {
    std::map<Digest, Evidence> store;
    CHECK_THROWS_AS(extract_provenance(Evidence::ref(Digest::of(to_bytes("x"))), &store), Error);
  }
}
