#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cyberlogic/crypto.hpp"
#include "cyberlogic/digest.hpp"
#include "cyberlogic/syntax.hpp"

namespace cyberlogic {

// Proof terms. Attestation leaves are signatures; everything else is structure.
struct Evidence {
  enum class Kind : std::uint8_t {
    Unit = 1,
    Pair,
    Inl,
    Inr,
    Witness,
    Abstraction,
    ClauseApp,
    Hyp,
    AttLeaf,
    TheoryHole,
    KnowsWrap,
    Ref,
  };

  Kind kind = Kind::Unit;
  // Pair [l, r]; Inl/Inr/Witness/Abstraction/KnowsWrap [e]; ClauseApp premises.
  std::vector<Evidence> subs;
  // Witness [t]; ClauseApp args; KnowsWrap principals.
  std::vector<Term> terms;
  // Abstraction: eigenconstant or hypothesis label. ClauseApp/Hyp: clause label.
  std::string name;
  // ClauseApp: owner of the policy (empty for hypotheses and the common policy).
  std::string owner;
  // ClauseApp: policy digest (absent for session hypotheses). Ref: target.
  std::optional<Digest> digest;
  // AttLeaf: the signature. TheoryHole: optional clock receipt signed by the time source.
  std::optional<SignedAttestation> leaf;
  // TheoryHole: ground builtin instance.
  Formula instance;

  static Evidence unit();
  static Evidence pair(Evidence l, Evidence r);
  static Evidence inl(Evidence e);
  static Evidence inr(Evidence e);
  static Evidence witness(Term t, Evidence e);
  static Evidence abstraction(std::string name, Evidence e);
  static Evidence clause_app(std::string label, std::optional<Digest> digest, std::string owner,
                             std::vector<Term> args, std::vector<Evidence> premises);
  static Evidence hyp(std::string label);
  static Evidence att_leaf(SignedAttestation sa);
  static Evidence theory_hole(Formula instance, std::optional<SignedAttestation> receipt = {});
  static Evidence knows_wrap(std::vector<Term> principals, Evidence e);
  static Evidence ref(Digest d);
  // Right-nested pairs for an n-ary conjunction.
  static Evidence tuple(std::vector<Evidence> parts);

  bool is(Kind k) const { return kind == k; }
  bool operator==(const Evidence&) const = default;
};

using HypothesisEnv = std::vector<std::pair<std::string, Formula>>;

struct CheckResult {
  bool ok = true;
  std::string path;    // tree address of the first failure
  std::string reason;

  static CheckResult success() { return {}; }
  static CheckResult failure(std::string path, std::string reason) {
    return CheckResult{false, std::move(path), std::move(reason)};
  }
  explicit operator bool() const { return ok; }
};

// A checker for a policy that stays with its owner.
class RemoteChecker {
 public:
  virtual ~RemoteChecker() = default;
  virtual std::string owner() const = 0;
  virtual CheckResult remote_check(const Digest& digest, const Evidence& e, const Formula& phi,
                                   const HypothesisEnv& env) = 0;
};

using PolicyHandle = std::variant<const Policy*, RemoteChecker*>;

struct CheckContext {
  std::map<Digest, PolicyHandle> policies;
  const KeyDirectory* keys = nullptr;
  // Signature for subsort tests on witnesses and clause arguments; exact sort match if null.
  const Signature* sig = nullptr;
  // Subtrees shared through Ref nodes.
  const std::map<Digest, Evidence>* store = nullptr;
  // Accept clause applications over digests and hypotheses this context cannot resolve
  // (send-side self-checks on fragments that embed foreign answers or remote sessions).
  bool trust_unresolved = false;
  // Incremented once per evidence node visited.
  std::size_t* steps = nullptr;

  void add(const Policy& p) { policies[p.digest] = &p; }
};

CheckResult check(const CheckContext& ctx, const HypothesisEnv& env, const Evidence& e,
                  const Formula& phi);

struct Provenance {
  std::string principal;
  std::optional<Digest> digest;
  std::string label;

  auto operator<=>(const Provenance&) const = default;
};

// Every clause application and attestation leaf in e. Throws Decode on a dangling Ref.
std::set<Provenance> extract_provenance(const Evidence& e,
                                        const std::map<Digest, Evidence>* store = nullptr);

// Spine rendering: label(arg)..(premise).., inl/inr, (l,r), '_' for theory holes.
std::string render_spine(const Evidence& e);

// ---------------------------------------------------------------------------
// Certificates

struct Certificate {
  Formula root_formula;
  Evidence root;
  std::map<Digest, Evidence> store;
  std::set<Digest> policy_digests;
  std::vector<DirectoryEntry> directory;
  // Issuer seal: the issuer attests certified(<digest>) over formula and evidence.
  std::optional<SignedAttestation> created_at;

  bool operator==(const Certificate& o) const {
    return root_formula == o.root_formula && root == o.root &&
           policy_digests == o.policy_digests && created_at == o.created_at;
  }
};

// Subtrees at least this many encoded bytes that occur more than once are stored once.
inline constexpr std::size_t kDedupThreshold = 64;

void encode(ByteWriter& w, const Evidence& e);
Evidence decode_evidence(ByteReader& r);

Bytes encode_certificate(const Certificate& c);
Certificate decode_certificate(ByteView bytes);

std::string certificate_to_text(const Certificate& c);
Certificate certificate_from_text(std::string_view text);
// Accepts either the binary or the text form.
Certificate load_certificate(ByteView bytes);

// Fills policy_digests and directory from the evidence (keys looked up in dir).
void complete_certificate(Certificate& c, const KeyDirectory& dir);

Digest certificate_digest(const Certificate& c);
void seal_certificate(Certificate& c, const KeyPair& kp, const PrincipalId& issuer,
                      std::optional<Term> issued_at = std::nullopt);
bool verify_seal(const Certificate& c, const KeyDirectory& dir);

// Checks the root evidence against the root formula; Refs resolve in the certificate's store.
CheckResult check_certificate(CheckContext ctx, const Certificate& c);

}  // namespace cyberlogic
