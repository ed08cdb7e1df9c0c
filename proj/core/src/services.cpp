#include "cyberlogic/services.hpp"

#include <chrono>
#include <fstream>
#include <iterator>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"
#include "cyberlogic/normalize.hpp"

namespace cyberlogic {

using FK = Formula::Kind;

namespace {

long long wall_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Formula time_atom(const PrincipalId& id, long long t) {
  return Formula::attest(Term::constant(id.name, sorts::Principal),
                         Formula::atom("time", {Term::integer(t, sorts::Time)}));
}

}  // namespace

TimeService::TimeService(KeyPair key, PrincipalId id, Mode mode, long long start)
    : key_(std::move(key)), id_(std::move(id)), mode_(mode), counter_(start) {}

SignedAttestation TimeService::sign_time(long long t) {
  return sign_attestation(key_, id_, time_atom(id_, t), Term::integer(t, sorts::Time));
}

SignedAttestation TimeService::attest_time() {
  std::lock_guard<std::mutex> lock(mu_);
  long long next = counter_ + 1;
  if (mode_ == Mode::Wall) next = std::max(next, wall_ms());
  counter_ = next;
  log_.push_back(sign_time(counter_));
  return log_.back();
}

void TimeService::advance_to(long long t) {
  while (now() < t) attest_time();
}

long long TimeService::now() const {
  std::lock_guard<std::mutex> lock(mu_);
  return counter_;
}

SignedAttestation TimeService::receipt() {
  std::lock_guard<std::mutex> lock(mu_);
  return sign_time(counter_);
}

std::pair<bool, SignedAttestation> TimeService::time_not_elapsed(long long t) {
  SignedAttestation r = receipt();
  return {t > now(), std::move(r)};
}

SignedAttestation TimeService::stamp(const Formula& attested) {
  if (!attested.is(FK::Attest) || !attested.body().is(FK::Atom))
    throw Error(ErrorKind::Usage, "only attested atoms can be time-stamped");
  std::lock_guard<std::mutex> lock(mu_);
  const Formula& atom = attested.body();
  std::vector<Term> args{Term::integer(counter_, sorts::Time), attested.principal()};
  args.insert(args.end(), atom.terms.begin(), atom.terms.end());
  Formula f = Formula::attest(Term::constant(id_.name, sorts::Principal),
                              Formula::atom(stamped_pred(atom.pred), std::move(args)));
  SignedAttestation sa = sign_attestation(key_, id_, f, Term::integer(counter_, sorts::Time));
  stamps_.emplace_back(f, sa);
  return sa;
}

std::vector<std::pair<Formula, Evidence>> TimeService::facts(const Formula& goal) {
  std::vector<std::pair<Formula, Evidence>> out;
  if (!goal.is(FK::Attest) || !goal.principal().is_const() || goal.principal().name != id_.name) return out;
  const Formula& atom = goal.body();
  if (!atom.is(FK::Atom)) return out;
  if (atom.pred == "time" && atom.terms.size() == 1) {
    const Term& t = atom.terms[0];
    if (t.is_var()) {
      std::lock_guard<std::mutex> lock(mu_);
      if (!log_.empty()) {
        auto v = log_.back().issued_at->as_integer();
        out.emplace_back(time_atom(id_, *v), Evidence::att_leaf(log_.back()));
      }
    } else if (auto v = t.as_integer(); v && *v <= now()) {
      std::lock_guard<std::mutex> lock(mu_);
      Formula f = Formula::attest(Term::constant(id_.name, sorts::Principal), Formula::atom("time", {t}));
      out.emplace_back(f, Evidence::att_leaf(sign_attestation(key_, id_, f, t)));
    }
    return out;
  }
  if (atom.pred.rfind("stamped_", 0) == 0) {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [f, sa] : stamps_)
      if (f.body().pred == atom.pred) out.emplace_back(f, Evidence::att_leaf(sa));
  }
  return out;
}

std::vector<SignedAttestation> TimeService::log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

// ---------------------------------------------------------------------------

NonceService::NonceService(KeyPair key, PrincipalId id, std::optional<std::uint64_t> seed)
    : key_(std::move(key)), id_(std::move(id)) {
  if (seed) seeded_.emplace(*seed);
}

const NonceService::Issued& NonceService::fresh(long long at) {
  std::lock_guard<std::mutex> lock(mu_);
  for (;;) {
    Bytes raw(16);
    if (seeded_) seeded_->fill(raw);
    else system_.fill(raw);
    std::string name = kNoncePrefix + to_hex(raw);
    if (!names_.insert(name).second) continue;
    Term n = Term::constant(name, sorts::Nonce);
    Formula f = Formula::attest(Term::constant(id_.name, sorts::Principal), Formula::atom("nonce", {n}));
    issued_.push_back(Issued{n, at, sign_attestation(key_, id_, f, Term::integer(at, sorts::Time))});
    return issued_.back();
  }
}

std::size_t NonceService::issued_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return issued_.size();
}

bool NonceService::was_issued(const std::string& name) const {
  std::lock_guard<std::mutex> lock(mu_);
  return names_.count(name) > 0;
}

// ---------------------------------------------------------------------------

Bytes RegistryEntry::signed_message() const {
  ByteWriter w;
  w.str("cyberlogic-registry-v1");
  w.raw(policy.value);
  w.str(endpoint);
  return w.take();
}

Bytes RegistryEntry::encode() const {
  ByteWriter w;
  w.raw(prev.value);
  w.raw(policy.value);
  w.str(endpoint);
  cyberlogic::encode(w, owner);
  w.blob(signature);
  return w.take();
}

Digest RegistryEntry::hash() const { return Digest::of(encode()); }

RegistryEntry RegistryEntry::decode(ByteView bytes) {
  ByteReader r(bytes);
  RegistryEntry e;
  auto a = r.raw(32);
  std::copy(a.begin(), a.end(), e.prev.value.begin());
  auto b = r.raw(32);
  std::copy(b.begin(), b.end(), e.policy.value.begin());
  e.endpoint = r.str();
  e.owner = decode_principal(r);
  e.signature = r.blob();
  r.expect_done();
  return e;
}

const RegistryEntry& CheckerRegistry::register_checker(const Digest& policy, const std::string& endpoint,
                                                       const KeyPair& owner_key, const PrincipalId& owner) {
  if (Digest::of(owner_key.public_key) != owner.fingerprint)
    throw Error(ErrorKind::KeyMismatch, "registry owner key does not match " + owner.name);
  std::lock_guard<std::mutex> lock(mu_);
  RegistryEntry e;
  e.prev = entries_.empty() ? Digest{} : entries_.back().hash();
  e.policy = policy;
  e.endpoint = endpoint;
  e.owner = owner;
  e.position = entries_.size();
  e.signature = sign(owner_key, e.signed_message());
  entries_.push_back(std::move(e));
  return entries_.back();
}

const RegistryEntry& CheckerRegistry::register_checker(const Policy& policy, const std::string& endpoint,
                                                       const KeyPair& owner_key, const PrincipalId& owner) {
  if (digest_of(policy) != policy.digest)
    throw Error(ErrorKind::Registry, "policy digest is stale; rehash before registering");
  return register_checker(policy.digest, endpoint, owner_key, owner);
}

std::optional<RegistryEntry> CheckerRegistry::lookup(const Digest& policy) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->policy == policy) return *it;
  return std::nullopt;
}

std::vector<RegistryEntry> CheckerRegistry::entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

bool CheckerRegistry::verify_chain(const KeyDirectory& keys, std::string* why) const {
  std::lock_guard<std::mutex> lock(mu_);
  Digest prev{};
  auto fail = [&](std::size_t i, const std::string& m) {
    if (why) *why = "entry " + std::to_string(i) + ": " + m;
    return false;
  };
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.prev != prev) return fail(i, "broken hash chain");
    const DirectoryEntry* k = keys.find(e.owner.name);
    if (!k || k->id.fingerprint != e.owner.fingerprint) return fail(i, "unknown owner " + e.owner.name);
    if (!verify(k->public_key, e.signed_message(), e.signature)) return fail(i, "bad owner signature");
    prev = e.hash();
  }
  return true;
}

void CheckerRegistry::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Usage, "cannot write registry " + path);
  for (const auto& e : entries()) {
    Bytes b = e.encode();
    ByteWriter w;
    w.blob(b);
    out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
  }
}

CheckerRegistry CheckerRegistry::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Usage, "cannot read registry " + path);
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CheckerRegistry reg;
  ByteReader r(data);
  while (!r.done()) {
    RegistryEntry e = RegistryEntry::decode(r.blob());
    e.position = reg.entries_.size();
    reg.entries_.push_back(std::move(e));
  }
  return reg;
}

}  // namespace cyberlogic
