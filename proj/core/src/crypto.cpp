#include "cyberlogic/crypto.hpp"

#include <sodium.h>
#include <sys/stat.h>

#include <fstream>
#include <mutex>
#include <sstream>

#include "cyberlogic/codec.hpp"
#include "cyberlogic/error.hpp"

namespace cyberlogic {

void crypto_init() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error(ErrorKind::Crypto, "libsodium initialization failed");
  });
}

Digest Digest::of(ByteView bytes) {
  Digest d;
  crypto_hash_sha256(d.value.data(), bytes.data(), bytes.size());
  return d;
}

Digest Digest::from_hex(std::string_view hex) {
  Bytes b = cyberlogic::from_hex(hex);
  if (b.size() != 32) throw Error(ErrorKind::Decode, "digest must be 32 bytes");
  Digest d;
  std::copy(b.begin(), b.end(), d.value.begin());
  return d;
}

bool Digest::is_zero() const {
  return std::all_of(value.begin(), value.end(), [](std::uint8_t b) { return b == 0; });
}

void SystemRng::fill(std::span<std::uint8_t> out) {
  crypto_init();
  randombytes_buf(out.data(), out.size());
}

void SeededRng::fill(std::span<std::uint8_t> out) {
  std::size_t off = 0;
  while (off < out.size()) {
    ByteWriter w;
    w.str("cyberlogic-drbg");
    w.u64(seed_);
    w.u64(counter_++);
    Digest block = Digest::of(w.bytes());
    std::size_t n = std::min<std::size_t>(32, out.size() - off);
    std::copy_n(block.value.begin(), n, out.begin() + static_cast<long>(off));
    off += n;
  }
}

KeyPair keypair_from_seed(ByteView seed32) {
  crypto_init();
  if (seed32.size() != crypto_sign_SEEDBYTES) throw Error(ErrorKind::Crypto, "seed must be 32 bytes");
  KeyPair kp;
  kp.public_key.resize(crypto_sign_PUBLICKEYBYTES);
  kp.secret_key.resize(crypto_sign_SECRETKEYBYTES);
  crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed32.data());
  return kp;
}

PrincipalId principal_id(const std::string& name, ByteView public_key) {
  return PrincipalId{name, Digest::of(public_key)};
}

std::pair<KeyPair, PrincipalId> keygen(const std::string& name, Rng& rng) {
  if (name.empty()) throw Error(ErrorKind::Usage, "principal name must be nonempty");
  Bytes seed(crypto_sign_SEEDBYTES);
  rng.fill(seed);
  KeyPair kp = keypair_from_seed(seed);
  sodium_memzero(seed.data(), seed.size());
  PrincipalId id = principal_id(name, kp.public_key);
  return {std::move(kp), std::move(id)};
}

std::pair<KeyPair, PrincipalId> derive_keypair(std::uint64_t seed, const std::string& name) {
  if (name.empty()) throw Error(ErrorKind::Usage, "principal name must be nonempty");
  ByteWriter w;
  w.str("cyberlogic-key");
  w.u64(seed);
  w.str(name);
  Digest d = Digest::of(w.bytes());
  KeyPair kp = keypair_from_seed(d.value);
  PrincipalId id = principal_id(name, kp.public_key);
  return {std::move(kp), std::move(id)};
}

Bytes sign(const KeyPair& kp, ByteView message) {
  crypto_init();
  if (kp.secret_key.size() != crypto_sign_SECRETKEYBYTES)
    throw Error(ErrorKind::Crypto, "malformed secret key");
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), kp.secret_key.data());
  return sig;
}

bool verify(ByteView public_key, ByteView message, ByteView signature) {
  crypto_init();
  if (public_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES)
    return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                     public_key.data()) == 0;
}

Bytes SignedAttestation::signed_message() const {
  ByteWriter w;
  w.str("cyberlogic-attestation-v1");
  encode(w, principal);
  w.blob(formula);
  w.u8(issued_at ? 1 : 0);
  if (issued_at) encode(w, *issued_at);
  w.blob(session_nonce);
  w.str(origin);
  return w.take();
}

SignedAttestation sign_attestation(const KeyPair& kp, const PrincipalId& who, const Formula& atom,
                                   std::optional<Term> issued_at, Bytes session_nonce,
                                   std::string origin) {
  if (Digest::of(kp.public_key) != who.fingerprint)
    throw Error(ErrorKind::KeyMismatch, "key pair does not belong to " + who.name);
  bool own = atom.is(Formula::Kind::Attest) && atom.principal().is_const() &&
             atom.principal().name == who.name;
  if (!atom.is_atomic() || atom.is_builtin())
    throw Error(ErrorKind::Crypto, "only atoms can be attested: " + print(atom));
  SignedAttestation sa;
  sa.principal = who;
  sa.formula = encode(own ? atom : Formula::attest(Term::constant(who.name, sorts::Principal), atom));
  sa.issued_at = std::move(issued_at);
  sa.session_nonce = std::move(session_nonce);
  sa.origin = std::move(origin);
  sa.signature = sign(kp, sa.signed_message());
  return sa;
}

std::optional<Formula> verify_attestation(ByteView public_key, const SignedAttestation& sa) {
  if (Digest::of(public_key) != sa.principal.fingerprint) return std::nullopt;
  if (!verify(public_key, sa.signed_message(), sa.signature)) return std::nullopt;
  try {
    Formula f = decode_formula(sa.formula);
    if (!f.is(Formula::Kind::Attest) || !f.principal().is_const() ||
        f.principal().name != sa.principal.name || !f.is_atomic())
      return std::nullopt;
    return f;
  } catch (const Error&) {
    return std::nullopt;
  }
}

void KeyDirectory::add(DirectoryEntry e) {
  if (Digest::of(e.public_key) != e.id.fingerprint)
    throw Error(ErrorKind::KeyMismatch, "fingerprint mismatch for " + e.id.name);
  for (auto& old : entries_) {
    if (old.id.name == e.id.name) {
      old = std::move(e);
      return;
    }
  }
  entries_.push_back(std::move(e));
}

const DirectoryEntry* KeyDirectory::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.id.name == name) return &e;
  return nullptr;
}

const DirectoryEntry* KeyDirectory::find(const Digest& fingerprint) const {
  for (const auto& e : entries_)
    if (e.id.fingerprint == fingerprint) return &e;
  return nullptr;
}

void save_key_file(const std::string& path, const KeyPair& kp) {
  {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Usage, "cannot write key file " + path);
    out << to_hex(kp.secret_key) << "\n";
  }
  ::chmod(path.c_str(), S_IRUSR | S_IWUSR);
}

KeyPair load_key_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Usage, "cannot read key file " + path);
  std::string line;
  std::getline(in, line);
  while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
  Bytes raw = from_hex(line);
  if (raw.size() != 64) throw Error(ErrorKind::Decode, "key file must hold 64 bytes");
  KeyPair kp = keypair_from_seed(ByteView(raw).subspan(0, 32));
  if (!std::equal(kp.public_key.begin(), kp.public_key.end(), raw.begin() + 32))
    throw Error(ErrorKind::KeyMismatch, "public half of key file does not match its seed");
  sodium_memzero(raw.data(), raw.size());
  return kp;
}

void save_directory(const std::string& path, const KeyDirectory& dir) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Usage, "cannot write directory " + path);
  for (const auto& e : dir.entries()) {
    out << e.id.name << " " << to_hex(e.public_key) << " " << e.id.fingerprint.hex();
    if (!e.address.empty()) out << " " << e.address;
    out << "\n";
  }
}

KeyDirectory load_directory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Usage, "cannot read directory " + path);
  KeyDirectory dir;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::string name, pub, fp, addr;
    if (!(ls >> name)) continue;
    if (!(ls >> pub >> fp))
      throw Error(ErrorKind::Decode, path + ":" + std::to_string(n) + ": malformed directory entry");
    ls >> addr;
    DirectoryEntry e;
    e.public_key = from_hex(pub);
    e.id = PrincipalId{name, Digest::from_hex(fp)};
    e.address = addr;
    dir.add(std::move(e));
  }
  return dir;
}

}  // namespace cyberlogic
