#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "openchk/error.hpp"

namespace openchk {

// 256-bit SHA-256 content digest.
struct Digest {
  std::array<unsigned char, 32> bytes{};

  friend bool operator==(const Digest&, const Digest&) = default;

  std::string hex() const {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char b : bytes) {
      out.push_back(kHex[b >> 4]);
      out.push_back(kHex[b & 0xF]);
    }
    return out;
  }

  static Digest from_hex(std::string_view text) {
    Digest d;
    if (text.size() != d.bytes.size() * 2) throw FormatError("bad digest length: " + std::string(text));
    auto nibble = [&](char c) -> unsigned {
      if (c >= '0' && c <= '9') return unsigned(c - '0');
      if (c >= 'a' && c <= 'f') return unsigned(c - 'a' + 10);
      if (c >= 'A' && c <= 'F') return unsigned(c - 'A' + 10);
      throw FormatError("bad digest character in " + std::string(text));
    };
    for (std::size_t i = 0; i < d.bytes.size(); ++i)
      d.bytes[i] = static_cast<unsigned char>((nibble(text[2 * i]) << 4) | nibble(text[2 * i + 1]));
    return d;
  }
};

inline Digest digest_of(std::span<const std::byte> data) {
  Digest d;
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), d.bytes.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != d.bytes.size())
    throw Error("SHA-256 computation failed");
  return d;
}

inline Digest digest_of(std::string_view text) {
  return digest_of(std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace openchk
