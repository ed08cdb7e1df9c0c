#include "doctest.h"

#include <filesystem>
#include <map>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/crypto.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/parser.hpp"
#include "oracles.hpp"

using namespace cyberlogic;

namespace {

Formula visa() {
  return Formula::atom("visa", {Term::constant("John Doe", "Name"), Term::integer(2022), Term::integer(90)});
}

Formula random_formula(oracle::Rand& rng, int depth) {
  static const char* preds[] = {"p", "q", "r"};
  static const char* names[] = {"K", "L", "M"};
  auto term = [&]() -> Term {
    switch (rng.below(4)) {
      case 0: return Term::var("x" + std::to_string(rng.below(3)), sorts::Int);
      case 1: return Term::constant(names[rng.below(3)], sorts::Principal);
      case 2: return Term::app("f", sorts::Int, {Term::integer(rng.below(50))});
      default: return Term::integer(rng.below(1000) - 500);
    }
  };
  auto atom = [&] {
    std::vector<Term> args;
    for (int n = rng.below(3); n >= 0; --n) args.push_back(term());
    return Formula::atom(preds[rng.below(3)], std::move(args));
  };
  if (depth == 0) return atom();
  switch (rng.below(9)) {
    case 0: return Formula::top();
    case 1: return Formula::attest(Term::constant(names[rng.below(3)], sorts::Principal), random_formula(rng, depth - 1));
    case 2: return Formula::conj({random_formula(rng, depth - 1), random_formula(rng, depth - 1)});
    case 3: return Formula::disj(random_formula(rng, depth - 1), random_formula(rng, depth - 1));
    case 4: return Formula::implies(random_formula(rng, depth - 1), random_formula(rng, depth - 1),
                                    rng.chance(30) ? "h" : "");
    case 5: return Formula::forall("x" + std::to_string(rng.below(3)), sorts::Int, random_formula(rng, depth - 1));
    case 6: return Formula::exists("x" + std::to_string(rng.below(3)), sorts::Int, random_formula(rng, depth - 1));
    case 7: return Formula::knows({Term::constant(names[rng.below(3)], sorts::Principal)}, random_formula(rng, depth - 1));
    default: return atom();
  }
}

}  // namespace

TEST_SUITE("keys") {
  TEST_CASE("sign and verify round trip") {
    SystemRng rng;
    auto [kp, id] = keygen("Cons42", rng);
    CHECK(kp.public_key.size() == 32);
    CHECK(kp.secret_key.size() == 64);
    CHECK(id.fingerprint == Digest::of(kp.public_key));
    for (std::string m : {"", "x", "a longer message"}) {
      Bytes sig = sign(kp, to_bytes(m));
      CHECK(verify(kp.public_key, to_bytes(m), sig));
      CHECK_FALSE(verify(kp.public_key, to_bytes(m + "!"), sig));
    }
  }

  TEST_CASE("fresh keys per call") {
    SystemRng rng;
    CHECK(keygen("Cons42", rng).second.fingerprint != keygen("Cons42", rng).second.fingerprint);
  }

  TEST_CASE("empty names are rejected") {
    SystemRng rng;
    CHECK_THROWS_AS(keygen("", rng), Error);
  }

  TEST_CASE("seeded derivation is stable per name") {
    CHECK(derive_keypair(3, "A").first.public_key == derive_keypair(3, "A").first.public_key);
    CHECK(derive_keypair(3, "A").first.public_key != derive_keypair(3, "B").first.public_key);
    CHECK(derive_keypair(3, "A").first.public_key != derive_keypair(4, "A").first.public_key);
  }

  TEST_CASE("key and directory files") {
    auto dir = std::filesystem::temp_directory_path() / "cyberlogic-test-keys";
    std::filesystem::create_directories(dir);
    auto [kp, id] = derive_keypair(1, "A");
    save_key_file((dir / "A.key").string(), kp);
    KeyPair back = load_key_file((dir / "A.key").string());
    CHECK(back.public_key == kp.public_key);
    CHECK(back.secret_key == kp.secret_key);
    auto perms = std::filesystem::status(dir / "A.key").permissions();
    CHECK((perms & std::filesystem::perms::others_read) == std::filesystem::perms::none);

    KeyDirectory d;
    d.add(DirectoryEntry{id, kp.public_key, "127.0.0.1:9000"});
    auto [kb, ib] = derive_keypair(1, "B");
    d.add(DirectoryEntry{ib, kb.public_key, ""});
    save_directory((dir / "dir").string(), d);
    KeyDirectory e = load_directory((dir / "dir").string());
    REQUIRE(e.entries().size() == 2);
    CHECK(e.find("A")->address == "127.0.0.1:9000");
    CHECK(e.find(ib.fingerprint)->id.name == "B");
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("directory rejects a fingerprint that does not match its key") {
    auto [kp, id] = derive_keypair(1, "A");
    auto [other, oid] = derive_keypair(1, "B");
    KeyDirectory d;
    CHECK_THROWS_AS(d.add(DirectoryEntry{id, other.public_key, ""}), Error);
  }
}

TEST_SUITE("encoding") {
  TEST_CASE("top is a two byte tag") {
    Bytes b = encode(Formula::top());
    CHECK(b.size() == 2);
    CHECK(b[0] == tag::Formula);
  }

  TEST_CASE("clause round trip") {
    Signature sig = parse_policy(
                        "sort Physician. sort Patient. sort Hospital < Principal. const A : Hospital. "
                        "pred isPhysicianOf(Physician, Patient). pred readMedRec(Physician, Patient).",
                        "")
                        .sig;
    Policy a = parse_policy(
        "a2: forall X:Physician, Y:Patient. A says isPhysicianOf(X, Y) => A says readMedRec(X, Y).", "A", sig);
    const Clause& a2 = a.clauses.at(0);
    ByteWriter w;
    encode(w, a2);
    Bytes bytes = w.take();
    ByteReader r(bytes);
    CHECK(decode_clause(r) == a2);
    r.expect_done();
    CHECK(decode_policy(encode(a)) == a);
  }

  TEST_CASE("argument order matters") {
    Term a = Term::constant("a", "S");
    Term b = Term::constant("b", "S");
    CHECK(encode(Formula::atom("p", {a, b})) != encode(Formula::atom("p", {b, a})));
  }

  TEST_CASE("injective and collision free on ten thousand distinct formulas") {
    oracle::Rand rng(2024);
    std::map<Bytes, Formula> seen;
    std::set<Digest> digests;
    int attempts = 0;
    while (seen.size() < 10000 && attempts < 200000) {
      ++attempts;
      Formula f = random_formula(rng, 1 + rng.below(4));
      Bytes b = encode(f);
      auto [it, fresh] = seen.emplace(b, f);
      if (!fresh) {
        REQUIRE(it->second == f);
        continue;
      }
      REQUIRE(decode_formula(b) == f);
      REQUIRE(digests.insert(Digest::of(b)).second);
    }
    CHECK(seen.size() == 10000);
  }

  TEST_CASE("decoding rejects truncation and trailing bytes") {
    Bytes b = encode(visa());
    for (std::size_t n = 0; n < b.size(); ++n) {
      Bytes cut(b.begin(), b.begin() + static_cast<long>(n));
      CHECK_THROWS_AS(decode_formula(cut), Error);
    }
    b.push_back(0);
    CHECK_THROWS_AS(decode_formula(b), Error);
  }
}

TEST_SUITE("attestations") {
  TEST_CASE("visa certificate verifies to the signed atom") {
    auto [kp, id] = derive_keypair(9, "Cons42");
    SignedAttestation sa = sign_attestation(kp, id, visa());
    auto got = verify_attestation(kp.public_key, sa);
    REQUIRE(got);
    CHECK(*got == Formula::attest(Term::constant("Cons42", sorts::Principal), visa()));
  }

  TEST_CASE("every single-bit mutation of signature or payload is rejected") {
    oracle::Rand rng(77);
    auto [kp, id] = derive_keypair(9, "Cons42");
    std::size_t flips = 0;
    for (int n = 0; n < 20; ++n) {
      Formula atom = Formula::atom("p", {Term::integer(rng.below(1000)), Term::constant("c" + std::to_string(n), "S")});
      SignedAttestation sa = sign_attestation(kp, id, atom, Term::integer(n, sorts::Time), Bytes{1, 2, 3});
      REQUIRE(verify_attestation(kp.public_key, sa));
      for (Bytes SignedAttestation::*field : {&SignedAttestation::signature, &SignedAttestation::formula,
                                              &SignedAttestation::session_nonce}) {
        for (std::size_t bit = 0; bit < (sa.*field).size() * 8; ++bit) {
          SignedAttestation bad = sa;
          (bad.*field)[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
          REQUIRE_FALSE(verify_attestation(kp.public_key, bad));
          ++flips;
        }
      }
      SignedAttestation later = sa;
      later.issued_at = Term::integer(n + 1, sorts::Time);
      CHECK_FALSE(verify_attestation(kp.public_key, later));
    }
    CHECK(flips > 10000);
  }

  TEST_CASE("another principal's key does not verify") {
    auto [kp, id] = derive_keypair(9, "Cons42");
    auto [other, oid] = derive_keypair(9, "Mallory");
    SignedAttestation sa = sign_attestation(kp, id, visa());
    CHECK_FALSE(verify_attestation(other.public_key, sa));
  }

  TEST_CASE("signing for someone else is a key mismatch") {
    auto [kp, id] = derive_keypair(9, "Cons42");
    auto [other, oid] = derive_keypair(9, "Mallory");
    try {
      sign_attestation(other, id, visa());
      FAIL("signed");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::KeyMismatch);
    }
  }

  TEST_CASE("attestation codec round trip") {
    auto [kp, id] = derive_keypair(9, "Cons42");
    SignedAttestation sa = sign_attestation(kp, id, visa(), Term::integer(4, sorts::Time), Bytes{9}, "v1");
    CHECK(decode_attestation(encode(sa)) == sa);
  }
}

TEST_SUITE("bytes") {
  TEST_CASE("hex and base64") {
    Bytes b{0, 1, 0xfe, 0xff, 0x10};
    CHECK(to_hex(b) == "0001feff10");
    CHECK(from_hex("0001FEFF10") == b);
    CHECK(from_base64(to_base64(b)) == b);
    CHECK(to_base64(to_bytes("foobar")) == "Zm9vYmFy");
    CHECK_THROWS_AS(from_hex("abc"), Error);
    CHECK_THROWS_AS(from_base64("@@@@"), Error);
  }
}
