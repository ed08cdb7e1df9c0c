#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>

#include "cyberlogic/bytes.hpp"

namespace cyberlogic {

// SHA-256 digest over canonical bytes.
struct Digest {
  std::array<std::uint8_t, 32> value{};

  static constexpr const char* algorithm = "sha256";

  std::string hex() const { return to_hex(value); }
  static Digest from_hex(std::string_view hex);
  static Digest of(ByteView bytes);

  bool is_zero() const;

  auto operator<=>(const Digest&) const = default;
};

}  // namespace cyberlogic
