#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cyberlogic/crypto.hpp"
#include "cyberlogic/engine.hpp"

namespace cyberlogic {

// Trusted time source T. Attested values strictly increase.
class TimeService : public FactProvider {
 public:
  enum class Mode { Logical, Wall };

  TimeService(KeyPair key, PrincipalId id, Mode mode = Mode::Logical, long long start = 0);

  // Advances the clock and attests the new instant.
  SignedAttestation attest_time();
  // Attests instants up to t (logical mode); no-op when t is not in the future.
  void advance_to(long long t);
  long long now() const;

  // Signed time(now) without advancing; justifies service builtins in theory holes.
  SignedAttestation receipt();
  std::pair<bool, SignedAttestation> time_not_elapsed(long long t);

  // Records T says stamped_p(now, K, args) for an attestation K says p(args).
  SignedAttestation stamp(const Formula& attested);

  std::vector<std::pair<Formula, Evidence>> facts(const Formula& goal) override;

  std::vector<SignedAttestation> log() const;
  const PrincipalId& id() const { return id_; }

 private:
  SignedAttestation sign_time(long long t);

  KeyPair key_;
  PrincipalId id_;
  Mode mode_;
  long long counter_;
  std::vector<SignedAttestation> log_;
  std::vector<std::pair<Formula, SignedAttestation>> stamps_;
  mutable std::mutex mu_;
};

// Nonce generator N. No value is issued twice.
class NonceService {
 public:
  // A seeded counter stream when seed is set, system randomness otherwise.
  NonceService(KeyPair key, PrincipalId id, std::optional<std::uint64_t> seed = std::nullopt);

  struct Issued {
    Term nonce;
    long long at;
    SignedAttestation attestation;
  };

  const Issued& fresh(long long at = 0);
  std::size_t issued_count() const;
  bool was_issued(const std::string& name) const;

 private:
  KeyPair key_;
  PrincipalId id_;
  std::optional<SeededRng> seeded_;
  SystemRng system_;
  std::vector<Issued> issued_;
  std::set<std::string> names_;
  mutable std::mutex mu_;
};

inline constexpr const char* kNoncePrefix = "n_";

// Append-only, hash-chained table from policy digests to checker endpoints.
struct RegistryEntry {
  Digest prev;
  Digest policy;
  std::string endpoint;
  PrincipalId owner;
  Bytes signature;  // by the owner over (policy, endpoint)
  std::size_t position = 0;

  Bytes signed_message() const;
  Bytes encode() const;
  Digest hash() const;
  static RegistryEntry decode(ByteView bytes);
};

class CheckerRegistry {
 public:
  CheckerRegistry() = default;
  CheckerRegistry(const CheckerRegistry& o) : entries_(o.entries()) {}
  CheckerRegistry& operator=(const CheckerRegistry& o) {
    if (this != &o) {
      auto copy = o.entries();
      std::lock_guard<std::mutex> lock(mu_);
      entries_ = std::move(copy);
    }
    return *this;
  }

  const RegistryEntry& register_checker(const Digest& policy, const std::string& endpoint,
                                        const KeyPair& owner_key, const PrincipalId& owner);
  const RegistryEntry& register_checker(const Policy& policy, const std::string& endpoint,
                                        const KeyPair& owner_key, const PrincipalId& owner);
  // Most recent entry for the digest; stale digests stay resolvable.
  std::optional<RegistryEntry> lookup(const Digest& policy) const;
  std::vector<RegistryEntry> entries() const;

  // Recomputes the chain and every owner signature.
  bool verify_chain(const KeyDirectory& keys, std::string* why = nullptr) const;

  void save(const std::string& path) const;
  static CheckerRegistry load(const std::string& path);

 private:
  std::vector<RegistryEntry> entries_;
  mutable std::mutex mu_;
};

}  // namespace cyberlogic
