#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "openchk/error.hpp"

namespace openchk {

using Bytes = std::vector<std::byte>;

// Little-endian append/extract helpers.
template <typename T>
void put_le(Bytes& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::span<const std::byte> in, std::size_t offset) {
  static_assert(std::is_unsigned_v<T>);
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(std::to_integer<unsigned>(in[offset + i])) << (8 * i);
  return value;
}

inline void append(Bytes& out, std::span<const std::byte> data) {
  if (data.empty()) return;
  // resize + memcpy rather than insert: GCC 11 reports a bogus overflow for the latter.
  const auto at = out.size();
  out.resize(at + data.size());
  std::memcpy(out.data() + at, data.data(), data.size());
}

inline void append(Bytes& out, std::string_view text) {
  append(out, std::as_bytes(std::span(text.data(), text.size())));
}

inline Bytes to_bytes(std::string_view text) {
  Bytes out;
  append(out, text);
  return out;
}

inline std::string to_string(std::span<const std::byte> data) {
  return std::string(reinterpret_cast<const char*>(data.data()), data.size());
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  Bytes data(size);
  if (size && !in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size)))
    throw StorageError("short read on " + path.string());
  return data;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  return to_string(read_file(path));
}

}  // namespace openchk
