#pragma once

// Self-describing checkpoint payload (`.ochk`): a flat root group of named,
// typed, dimensioned datasets. All integers little-endian.
//
//   "OCHK" | u32 version | u32 dataset_count
//   per dataset: u32 name_len | name | u8 type | u32 rank | u64 dims[rank] | data

#include <charconv>
#include <cstdint>
#include <cstring>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/error.hpp"

namespace openchk {

enum class TypeCode : std::uint8_t { I8 = 1, I32 = 2, I64 = 3, F32 = 4, F64 = 5, Byte = 6 };

inline std::size_t type_width(TypeCode t) {
  switch (t) {
    case TypeCode::I8:
    case TypeCode::Byte: return 1;
    case TypeCode::I32:
    case TypeCode::F32: return 4;
    case TypeCode::I64:
    case TypeCode::F64: return 8;
  }
  throw FormatError("unknown type code " + std::to_string(static_cast<int>(t)));
}

inline std::string_view hdf5_type_name(TypeCode t) {
  switch (t) {
    case TypeCode::I8: return "H5T_STD_I8LE";
    case TypeCode::I32: return "H5T_STD_I32LE";
    case TypeCode::I64: return "H5T_STD_I64LE";
    case TypeCode::F32: return "H5T_IEEE_F32LE";
    case TypeCode::F64: return "H5T_IEEE_F64LE";
    case TypeCode::Byte: return "H5T_STD_U8LE";
  }
  return "?";
}

template <typename T>
constexpr TypeCode type_code_for() {
  if constexpr (std::is_same_v<T, std::int8_t> || std::is_same_v<T, char> || std::is_same_v<T, signed char>)
    return TypeCode::I8;
  else if constexpr (std::is_same_v<T, std::int32_t> || std::is_same_v<T, std::uint32_t>)
    return TypeCode::I32;
  else if constexpr (std::is_same_v<T, std::int64_t> || std::is_same_v<T, std::uint64_t>)
    return TypeCode::I64;
  else if constexpr (std::is_same_v<T, float>)
    return TypeCode::F32;
  else if constexpr (std::is_same_v<T, double>)
    return TypeCode::F64;
  else
    return TypeCode::Byte;
}

struct Dataset {
  std::string name;
  TypeCode type = TypeCode::Byte;
  std::vector<std::uint64_t> dims;
  Bytes data;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline std::string default_dataset_name(std::uint64_t ordinal) { return "Dataset_" + std::to_string(ordinal); }

template <typename T>
Dataset make_dataset(std::string name, std::span<const T> values) {
  static_assert(std::is_trivially_copyable_v<T>);
  Dataset d;
  d.name = std::move(name);
  d.type = type_code_for<T>();
  if (d.type == TypeCode::Byte) {
    d.dims = {values.size_bytes()};
  } else {
    static_assert(sizeof(T) == 1 || sizeof(T) == 4 || sizeof(T) == 8);
    d.dims = {values.size()};
  }
  const auto raw = std::as_bytes(values);
  d.data.assign(raw.begin(), raw.end());
  return d;
}

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr char kContainerMagic[4] = {'O', 'C', 'H', 'K'};

inline Bytes encode_container(const std::vector<Dataset>& datasets) {
  std::set<std::string_view> names;
  std::size_t total = 12;
  for (const auto& d : datasets) {
    if (!names.insert(d.name).second) throw FormatError("duplicate dataset name '" + d.name + "'");
    if (d.element_count() * type_width(d.type) != d.data.size())
      throw FormatError("dataset '" + d.name + "' holds " + std::to_string(d.data.size()) +
                        " bytes, dims require " + std::to_string(d.element_count() * type_width(d.type)));
    total += 9 + d.name.size() + 8 * d.dims.size() + d.data.size();
  }
  Bytes out;
  out.reserve(total);
  append(out, std::string_view(kContainerMagic, 4));
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(datasets.size()));
  for (const auto& d : datasets) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.name.size()));
    append(out, d.name);
    out.push_back(static_cast<std::byte>(d.type));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.dims.size()));
    for (auto dim : d.dims) put_le<std::uint64_t>(out, dim);
    append(out, d.data);
  }
  return out;
}

inline void write_container(std::ostream& sink, const std::vector<Dataset>& datasets) {
  const auto bytes = encode_container(datasets);
  sink.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  sink.flush();
  if (!sink) throw StorageError("container write failed");
}

inline bool is_container(std::span<const std::byte> source) {
  return source.size() >= 4 && std::memcmp(source.data(), kContainerMagic, 4) == 0;
}

inline std::vector<Dataset> read_container(std::span<const std::byte> source) {
  if (!is_container(source)) throw FormatError("bad magic: not an OCHK container");
  std::size_t pos = 4;
  std::string current = "<header>";
  auto need = [&](std::size_t n) {
    if (source.size() - pos < n) throw FormatError("truncated container in dataset '" + current + "'");
  };
  need(8);
  const auto version = get_le<std::uint32_t>(source, pos);
  if (version != kContainerVersion) throw FormatError("unsupported container version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(source, pos + 4);
  pos += 8;
  std::vector<Dataset> out;
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    current = "#" + std::to_string(i);
    Dataset d;
    need(4);
    const auto name_len = get_le<std::uint32_t>(source, pos);
    pos += 4;
    need(name_len);
    d.name = to_string(source.subspan(pos, name_len));
    current = d.name;
    pos += name_len;
    need(5);
    const auto raw_type = std::to_integer<std::uint8_t>(source[pos]);
    if (raw_type < 1 || raw_type > 6) throw FormatError("bad type code in dataset '" + d.name + "'");
    d.type = static_cast<TypeCode>(raw_type);
    const auto rank = get_le<std::uint32_t>(source, pos + 1);
    pos += 5;
    if (rank > 64) throw FormatError("implausible rank in dataset '" + d.name + "'");
    need(8ull * rank);
    for (std::uint32_t r = 0; r < rank; ++r) d.dims.push_back(get_le<std::uint64_t>(source, pos + 8ull * r));
    pos += 8ull * rank;
    const auto width = type_width(d.type);
    const auto elements = d.element_count();
    if (elements > (source.size() - pos) / width) throw FormatError("truncated container in dataset '" + d.name + "'");
    const auto bytes = elements * width;
    d.data.assign(source.begin() + static_cast<std::ptrdiff_t>(pos),
                  source.begin() + static_cast<std::ptrdiff_t>(pos + bytes));
    pos += bytes;
    if (!names.insert(d.name).second) throw FormatError("duplicate dataset name '" + d.name + "'");
    out.push_back(std::move(d));
  }
  if (pos != source.size()) throw FormatError("trailing bytes after last dataset");
  return out;
}

// ---------------------------------------------------------------------------
// Text rendering in the h5dump layout.

struct DumpOptions {
  std::size_t head_elements = 10;  // printed before eliding
  std::size_t tail_elements = 4;   // printed after the "..." marker
  std::size_t per_row = 10;
};

namespace detail {

inline std::string format_element(const Dataset& d, std::uint64_t i) {
  const auto w = type_width(d.type);
  const auto* p = d.data.data() + i * w;
  auto from = [&](auto tag) {
    decltype(tag) v;
    std::memcpy(&v, p, sizeof v);
    return v;
  };
  char buf[64];
  std::to_chars_result r{};
  switch (d.type) {
    case TypeCode::I8: return std::to_string(static_cast<int>(from(std::int8_t{})));
    case TypeCode::Byte: return std::to_string(static_cast<unsigned>(from(std::uint8_t{})));
    case TypeCode::I32: return std::to_string(from(std::int32_t{}));
    case TypeCode::I64: return std::to_string(from(std::int64_t{}));
    case TypeCode::F32: r = std::to_chars(buf, buf + sizeof buf, from(float{})); break;
    case TypeCode::F64: r = std::to_chars(buf, buf + sizeof buf, from(double{})); break;
  }
  return std::string(buf, r.ptr);
}

inline void dump_rows(std::string& out, const Dataset& d, std::uint64_t from, std::uint64_t to,
                      std::size_t per_row, const std::string& indent) {
  for (auto row = from; row < to; row += per_row) {
    out += indent + "(" + std::to_string(row) + "): ";
    const auto end = std::min<std::uint64_t>(to, row + per_row);
    for (auto i = row; i < end; ++i) {
      if (i != row) out += ", ";
      out += format_element(d, i);
    }
    out += end < to ? ",\n" : "\n";
  }
}

}  // namespace detail

inline std::string dump_text(const std::vector<Dataset>& datasets, const DumpOptions& opt = {}) {
  if (datasets.empty()) return "GROUP \"/\" { }\n";
  std::string out = "GROUP \"/\" {\n";
  for (const auto& d : datasets) {
    std::string dims;
    for (std::size_t i = 0; i < d.dims.size(); ++i) dims += (i ? ", " : "") + std::to_string(d.dims[i]);
    out += "   DATASET \"" + d.name + "\" {\n";
    out += "      DATATYPE  " + std::string(hdf5_type_name(d.type)) + "\n";
    out += "      DATASPACE  SIMPLE { ( " + dims + " ) / ( " + dims + " ) }\n";
    out += "      DATA {\n";
    const auto n = d.element_count();
    const std::string indent = "      ";
    if (n <= opt.head_elements + opt.tail_elements) {
      detail::dump_rows(out, d, 0, n, opt.per_row, indent);
    } else {
      detail::dump_rows(out, d, 0, opt.head_elements, opt.per_row, indent);
      if (opt.head_elements > 0) out.insert(out.size() - 1, ",");
      out += "\n" + indent + "...\n\n";
      detail::dump_rows(out, d, n - opt.tail_elements, n, opt.per_row, indent);
    }
    out += "      }\n";
    out += "   }\n";
  }
  out += "}\n";
  return out;
}

inline std::string dump_text(std::span<const std::byte> source, const DumpOptions& opt = {}) {
  return dump_text(read_container(source), opt);
}

}  // namespace openchk
