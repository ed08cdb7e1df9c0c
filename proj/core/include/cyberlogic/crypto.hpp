#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "cyberlogic/bytes.hpp"
#include "cyberlogic/digest.hpp"
#include "cyberlogic/syntax.hpp"

namespace cyberlogic {

// Initializes libsodium; safe to call repeatedly.
void crypto_init();

struct KeyPair {
  static constexpr const char* kScheme = "ed25519";

  Bytes public_key;  // 32 bytes
  Bytes secret_key;  // 64 bytes: seed || public
  std::string scheme = kScheme;
};

struct PrincipalId {
  std::string name;
  Digest fingerprint;  // digest of the public key

  auto operator<=>(const PrincipalId&) const = default;
};

class Rng {
 public:
  virtual ~Rng() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;
};

// Operating-system entropy.
class SystemRng : public Rng {
 public:
  void fill(std::span<std::uint8_t> out) override;
};

// SHA-256 counter-mode stream; only for reproducible tests and scenarios.
class SeededRng : public Rng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed) {}
  void fill(std::span<std::uint8_t> out) override;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::pair<KeyPair, PrincipalId> keygen(const std::string& name, Rng& rng);
KeyPair keypair_from_seed(ByteView seed32);
PrincipalId principal_id(const std::string& name, ByteView public_key);
// Deterministic per (seed, name); used by seeded deployments.
std::pair<KeyPair, PrincipalId> derive_keypair(std::uint64_t seed, const std::string& name);

Bytes sign(const KeyPair& kp, ByteView message);
bool verify(ByteView public_key, ByteView message, ByteView signature);

struct SignedAttestation {
  PrincipalId principal;
  Bytes formula;      // canonical bytes of the attested formula K says a
  Bytes signature;
  std::optional<Term> issued_at;
  Bytes session_nonce;  // empty when absent
  std::string origin;   // label of the clause the fact came from, if any

  // Bytes covered by the signature.
  Bytes signed_message() const;

  bool operator==(const SignedAttestation&) const = default;
};

// Signs `who says atom`; an atom already attested by who is signed as is. Throws KeyMismatch
// when kp does not belong to who.
SignedAttestation sign_attestation(const KeyPair& kp, const PrincipalId& who, const Formula& atom,
                                   std::optional<Term> issued_at = std::nullopt,
                                   Bytes session_nonce = {}, std::string origin = {});

// Returns the attested formula on success.
std::optional<Formula> verify_attestation(ByteView public_key, const SignedAttestation& sa);

struct DirectoryEntry {
  PrincipalId id;
  Bytes public_key;
  std::string address;  // host:port, empty for in-process peers
};

// Names to verification keys, in insertion order.
class KeyDirectory {
 public:
  void add(DirectoryEntry e);
  const DirectoryEntry* find(const std::string& name) const;
  const DirectoryEntry* find(const Digest& fingerprint) const;
  const std::vector<DirectoryEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<DirectoryEntry> entries_;
};

// Key file: one line, hex of secret seed || public key.
void save_key_file(const std::string& path, const KeyPair& kp);
KeyPair load_key_file(const std::string& path);
// Directory file: "name public-hex fingerprint-hex [host:port]" per line; '#' comments.
void save_directory(const std::string& path, const KeyDirectory& dir);
KeyDirectory load_directory(const std::string& path);

}  // namespace cyberlogic
