#pragma once

// Redundancy schemes behind checkpoint levels and the backend profiles that
// map user-facing level numbers onto them.

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/error.hpp"
#include "openchk/storage.hpp"

namespace openchk {

enum class SchemeTag { Local, Partner, Xor, Global };

inline std::string_view to_string(SchemeTag t) {
  switch (t) {
    case SchemeTag::Local: return "local";
    case SchemeTag::Partner: return "partner";
    case SchemeTag::Xor: return "xor";
    case SchemeTag::Global: return "global";
  }
  return "?";
}

struct Scheme {
  SchemeTag tag = SchemeTag::Local;
  int partner_offset = 1;
  int group_size = 0;  // Xor only; 0 until resolved against a world size

  friend bool operator==(const Scheme&, const Scheme&) = default;
};

struct BackendProfile {
  std::string name;
  std::vector<Scheme> level_map;  // index = user level - 1

  int level_count() const { return static_cast<int>(level_map.size()); }
};

inline const std::vector<std::string_view>& profile_names() {
  static const std::vector<std::string_view> names{"fti-like", "scr-like", "veloc-like"};
  return names;
}

inline BackendProfile make_profile(std::string_view name, int group_size = 0) {
  const Scheme local{SchemeTag::Local}, partner{SchemeTag::Partner, 1}, xored{SchemeTag::Xor, 1, group_size},
      global{SchemeTag::Global};
  if (name == "fti-like" || name == "veloc-like") return {std::string(name), {local, partner, xored, global}};
  // No global level; global copies come from the explicit flush_global switch.
  if (name == "scr-like") return {std::string(name), {local, partner, xored}};
  throw ConfigError("unknown backend profile '" + std::string(name) + "'");
}

inline Scheme map_level(const BackendProfile& profile, int user_level) {
  if (user_level < 1 || user_level > profile.level_count())
    throw LevelError("level " + std::to_string(user_level) + " does not exist in profile '" + profile.name +
                     "' (levels 1.." + std::to_string(profile.level_count()) + ")");
  return profile.level_map[static_cast<std::size_t>(user_level - 1)];
}

// Largest divisor of `world` in [2, 4]; the whole world when none exists; 0 for a single rank.
inline int default_group_size(int world) {
  for (int g = std::min(world, 4); g >= 2; --g)
    if (world % g == 0) return g;
  return world >= 2 ? world : 0;
}

inline void validate_scheme(const Scheme& s, int world) {
  if (s.tag == SchemeTag::Xor) {
    if (s.group_size < 2) throw SchemeError("xor group size must be at least 2");
    if (world % s.group_size != 0)
      throw SchemeError("xor group size " + std::to_string(s.group_size) + " does not divide world size " +
                        std::to_string(world));
  }
  if (s.tag == SchemeTag::Partner && s.partner_offset <= 0) throw SchemeError("partner offset must be positive");
}

inline int partner_of(const Scheme& s, int rank, int world) { return (rank + s.partner_offset) % world; }

// ---------------------------------------------------------------------------
// XOR parity file: header line with member ranks and true payload lengths,
// then the parity bytes (length of the longest member).

struct ParityRecord {
  int group = 0;
  std::vector<int> members;
  std::vector<std::uint64_t> lengths;
  Bytes parity;
};

inline Bytes encode_parity(const ParityRecord& p) {
  std::ostringstream header;
  header << "xor group " << p.group << " members";
  for (auto m : p.members) header << ' ' << m;
  header << " lengths";
  for (auto l : p.lengths) header << ' ' << l;
  header << '\n';
  Bytes out = to_bytes(header.str());
  append(out, p.parity);
  return out;
}

inline ParityRecord decode_parity(std::span<const std::byte> data) {
  const auto text = std::string_view(reinterpret_cast<const char*>(data.data()), data.size());
  const auto nl = text.find('\n');
  if (nl == std::string_view::npos || text.substr(0, 10) != "xor group ") throw FormatError("not a parity file");
  std::istringstream in{std::string(text.substr(0, nl))};
  ParityRecord p;
  std::string word;
  in >> word >> word >> p.group >> word;
  if (word != "members") throw FormatError("malformed parity header");
  while (in >> word && word != "lengths") {
    const auto member = parse_numbered(word, "");
    if (!member) throw FormatError("malformed parity member '" + word + "'");
    p.members.push_back(static_cast<int>(*member));
  }
  std::uint64_t len = 0;
  while (in >> len) p.lengths.push_back(len);
  if (p.members.empty() || p.members.size() != p.lengths.size()) throw FormatError("malformed parity header");
  p.parity.assign(data.begin() + static_cast<std::ptrdiff_t>(nl + 1), data.end());
  const auto longest = *std::max_element(p.lengths.begin(), p.lengths.end());
  if (p.parity.size() != longest) throw FormatError("parity length does not match longest member");
  return p;
}

inline void xor_into(Bytes& acc, std::span<const std::byte> data) {
  if (acc.size() < data.size()) acc.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) acc[i] ^= data[i];
}

namespace detail {

inline std::optional<Bytes> try_read(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return std::nullopt;
  try {
    return read_file(p);
  } catch (const StorageError&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Performs the scheme's redundancy work for `rank`'s payload staged at
// layout.payload(level, epoch, rank). For Xor, the first member of each group
// writes the parity; every member's payload must already be staged.
inline void apply_scheme(const Scheme& scheme, int rank, int world, std::uint64_t epoch, int level,
                         const Layout& layout, StorageSink& sink, std::span<const std::byte> staged) {
  validate_scheme(scheme, world);
  switch (scheme.tag) {
    case SchemeTag::Local: return;
    case SchemeTag::Partner: {
      const int holder = partner_of(scheme, rank, world);
      std::error_code ec;
      const auto area = layout.partner_area(level, epoch, holder);
      fs::create_directories(area, ec);
      if (ec || !fs::is_directory(area)) throw SchemeError("partner area " + area.string() + " unavailable");
      sink.write(layout.partner_copy(level, epoch, holder, rank), staged, ArtifactRole::Scheme);
      return;
    }
    case SchemeTag::Xor: {
      const int g = scheme.group_size;
      if (rank % g != 0) return;
      ParityRecord rec;
      rec.group = rank / g;
      for (int m = rank; m < rank + g; ++m) {
        const auto data = m == rank ? std::optional<Bytes>(Bytes(staged.begin(), staged.end()))
                                    : detail::try_read(layout.payload(level, epoch, m));
        if (!data) throw SchemeError("xor member rank " + std::to_string(m) + " has no staged payload");
        rec.members.push_back(m);
        rec.lengths.push_back(data->size());
        xor_into(rec.parity, *data);
      }
      const auto longest = *std::max_element(rec.lengths.begin(), rec.lengths.end());
      rec.parity.resize(longest);
      sink.write(layout.parity(level, epoch, rec.group), encode_parity(rec), ArtifactRole::Scheme);
      return;
    }
    case SchemeTag::Global:
      sink.write(layout.global_payload(epoch, rank), staged, ArtifactRole::Scheme);
      return;
  }
}

// Rebuilds `rank`'s payload from the scheme's redundant artifacts, ignoring the
// rank's own staged copy. Throws Unrecoverable when the loss exceeds tolerance.
inline Bytes recover_scheme(const Scheme& scheme, int rank, int world, std::uint64_t epoch, int level,
                            const Layout& layout) {
  switch (scheme.tag) {
    case SchemeTag::Local: {
      if (auto data = detail::try_read(layout.payload(level, epoch, rank))) return *data;
      throw Unrecoverable("local payload of rank " + std::to_string(rank) + " is lost");
    }
    case SchemeTag::Partner: {
      const int holder = partner_of(scheme, rank, world);
      if (auto data = detail::try_read(layout.partner_copy(level, epoch, holder, rank))) return *data;
      throw Unrecoverable("partner copy of rank " + std::to_string(rank) + " held by rank " + std::to_string(holder) +
                          " is lost");
    }
    case SchemeTag::Xor: {
      const int g = scheme.group_size > 0 ? scheme.group_size : default_group_size(world);
      if (g < 2) throw Unrecoverable("no xor group for a single rank");
      const int group = rank / g;
      const auto raw = detail::try_read(layout.parity(level, epoch, group));
      if (!raw) throw Unrecoverable("parity of group " + std::to_string(group) + " is lost");
      ParityRecord rec;
      try {
        rec = decode_parity(*raw);
      } catch (const FormatError& e) {
        throw Unrecoverable(std::string("parity unreadable: ") + e.what());
      }
      Bytes acc = rec.parity;
      std::optional<std::uint64_t> own_length;
      for (std::size_t i = 0; i < rec.members.size(); ++i) {
        if (rec.members[i] == rank) {
          own_length = rec.lengths[i];
          continue;
        }
        auto data = detail::try_read(layout.payload(level, epoch, rec.members[i]));
        if (!data || data->size() != rec.lengths[i])
          throw Unrecoverable("group " + std::to_string(group) + " lost more than one member (rank " +
                              std::to_string(rec.members[i]) + " and rank " + std::to_string(rank) + ")");
        xor_into(acc, *data);
      }
      if (!own_length) throw Unrecoverable("rank " + std::to_string(rank) + " is not in its parity group");
      acc.resize(*own_length);
      return acc;
    }
    case SchemeTag::Global: {
      if (auto data = detail::try_read(layout.global_payload(epoch, rank))) return *data;
      throw Unrecoverable("global copy of rank " + std::to_string(rank) + " is lost");
    }
  }
  throw Unrecoverable("unknown scheme");
}

// Test helper: deletes everything a node hosting `rank` would take down with
// it (its staged payloads and the partner copies it holds). Global storage survives.
inline void simulate_node_loss(const Layout& layout, int rank) {
  std::error_code ec;
  if (!fs::exists(layout.root, ec)) return;
  const auto payload_name = "rank_" + std::to_string(rank) + ".ochk";
  const auto holder_name = "rank_" + std::to_string(rank);
  for (const auto& level : fs::directory_iterator(layout.root, ec)) {
    if (!parse_numbered(level.path().filename().string(), "l")) continue;
    for (const auto& epoch : fs::directory_iterator(level.path(), ec)) {
      fs::remove(epoch.path() / payload_name, ec);
      fs::remove_all(epoch.path() / "partner" / holder_name, ec);
    }
  }
}

}  // namespace openchk
