#include "cyberlogic/bytes.hpp"

#include <sodium.h>

#include "cyberlogic/error.hpp"

namespace cyberlogic {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Syntax: return "syntax";
    case ErrorKind::Sort: return "sort";
    case ErrorKind::DuplicateLabel: return "duplicate-label";
    case ErrorKind::NotInFragment: return "not-in-fragment";
    case ErrorKind::UnknownMacro: return "unknown-macro";
    case ErrorKind::Decode: return "decode";
    case ErrorKind::Crypto: return "crypto";
    case ErrorKind::KeyMismatch: return "key-mismatch";
    case ErrorKind::Registry: return "registry";
    case ErrorKind::Transport: return "transport";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Engine: return "engine";
  }
  return "unknown";
}

std::string to_hex(ByteView bytes) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorKind::Decode, "odd-length hex");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorKind::Decode, "bad hex digit");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return out;
}

std::string to_base64(ByteView bytes) {
  const auto variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
  out.resize(out.size() - 1);  // trailing NUL
  return out;
}

Bytes from_base64(std::string_view text) {
  Bytes out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), "\r\n ",
                        &len, nullptr, sodium_base64_VARIANT_ORIGINAL) != 0)
    throw Error(ErrorKind::Decode, "bad base64");
  out.resize(len);
  return out;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
}

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.insert(out_.end(), s.begin(), s.end());
}

void ByteWriter::blob(ByteView b) {
  u32(static_cast<std::uint32_t>(b.size()));
  raw(b);
}

void ByteReader::need(std::size_t n) const {
  if (in_.size() - pos_ < n) throw Error(ErrorKind::Decode, "truncated input");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return in_[pos_++];
}

std::uint8_t ByteReader::peek() const {
  need(1);
  return in_[pos_];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = v << 8 | in_[pos_++];
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | in_[pos_++];
  return v;
}

std::string ByteReader::str() {
  auto n = u32();
  need(n);
  std::string s(in_.begin() + pos_, in_.begin() + pos_ + n);
  pos_ += n;
  return s;
}

Bytes ByteReader::blob() { return raw(u32()); }

Bytes ByteReader::raw(std::size_t n) {
  need(n);
  Bytes b(in_.begin() + pos_, in_.begin() + pos_ + n);
  pos_ += n;
  return b;
}

void ByteReader::expect_done() const {
  if (!done()) throw Error(ErrorKind::Decode, "trailing bytes");
}

}  // namespace cyberlogic
