#pragma once

#include "cyberlogic/bytes.hpp"
#include "cyberlogic/crypto.hpp"
#include "cyberlogic/syntax.hpp"

namespace cyberlogic {

// Canonical binary encoding: a type tag byte, a kind byte, then length-prefixed fields in
// a fixed order. Decoding rejects anything encode would not produce.
namespace tag {
inline constexpr std::uint8_t Term = 'T';
inline constexpr std::uint8_t Formula = 'F';
inline constexpr std::uint8_t Clause = 'C';
inline constexpr std::uint8_t Policy = 'P';
inline constexpr std::uint8_t Attestation = 'A';
inline constexpr std::uint8_t Evidence = 'E';
inline constexpr std::uint8_t Certificate = 'R';
inline constexpr std::uint8_t Message = 'M';
inline constexpr std::uint8_t Principal = 'I';
}  // namespace tag

void encode(ByteWriter& w, const Term& t);
void encode(ByteWriter& w, const Formula& f);
void encode(ByteWriter& w, const Clause& c);
void encode(ByteWriter& w, const Policy& p);
void encode(ByteWriter& w, const PrincipalId& id);
void encode(ByteWriter& w, const SignedAttestation& sa);

Term decode_term(ByteReader& r);
Formula decode_formula(ByteReader& r);
Clause decode_clause(ByteReader& r);
Policy decode_policy(ByteReader& r);
PrincipalId decode_principal(ByteReader& r);
SignedAttestation decode_attestation(ByteReader& r);

template <class T>
Bytes encode(const T& x) {
  ByteWriter w;
  encode(w, x);
  return w.take();
}

Formula decode_formula(ByteView bytes);
Policy decode_policy(ByteView bytes);
SignedAttestation decode_attestation(ByteView bytes);

Digest digest_of(const Formula& f);
Digest digest_of(const Policy& p);

}  // namespace cyberlogic
