#pragma once

// Per-epoch checkpoint manifest, stored as line-oriented text:
//   epoch <k> id <u> level <l> kind FULL|DIFF base <b|none> ranks <n>
//   rank <r> ordinal <o> bytes <m> digest <hex>      (one line per region)

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "openchk/digest.hpp"
#include "openchk/error.hpp"
#include "openchk/pragma.hpp"

namespace openchk {

struct RegionEntry {
  std::uint64_t ordinal = 0;
  std::uint64_t bytes = 0;
  Digest digest;
  friend bool operator==(const RegionEntry&, const RegionEntry&) = default;
};

struct CheckpointManifest {
  std::int64_t user_id = 0;
  std::uint64_t epoch = 0;
  int level = 1;
  CheckpointKind kind = CheckpointKind::Full;
  std::optional<std::uint64_t> base_epoch;  // Diff only
  std::vector<std::vector<RegionEntry>> ranks;  // indexed by rank
  bool committed = false;

  int world_size() const { return static_cast<int>(ranks.size()); }

  // Every rank present with densely numbered ordinals.
  bool complete() const {
    if (ranks.empty()) return false;
    for (const auto& entries : ranks) {
      if (entries.empty()) return false;
      for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].ordinal != i) return false;
    }
    return true;
  }

  friend bool operator==(const CheckpointManifest&, const CheckpointManifest&) = default;
};

inline std::string encode_manifest(const CheckpointManifest& m) {
  std::ostringstream out;
  out << "epoch " << m.epoch << " id " << m.user_id << " level " << m.level << " kind "
      << (m.kind == CheckpointKind::Full ? "FULL" : "DIFF") << " base "
      << (m.base_epoch ? std::to_string(*m.base_epoch) : std::string("none")) << " ranks " << m.ranks.size() << "\n";
  for (std::size_t r = 0; r < m.ranks.size(); ++r)
    for (const auto& e : m.ranks[r])
      out << "rank " << r << " ordinal " << e.ordinal << " bytes " << e.bytes << " digest " << e.digest.hex() << "\n";
  return out.str();
}

inline CheckpointManifest decode_manifest(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty manifest");
  CheckpointManifest m;
  {
    std::istringstream h(line);
    std::string w_epoch, w_id, w_level, w_kind, kind, w_base, base, w_ranks;
    std::size_t n = 0;
    h >> w_epoch >> m.epoch >> w_id >> m.user_id >> w_level >> m.level >> w_kind >> kind >> w_base >> base >>
        w_ranks >> n;
    if (!h || w_epoch != "epoch" || w_id != "id" || w_level != "level" || w_kind != "kind" || w_base != "base" ||
        w_ranks != "ranks" || (kind != "FULL" && kind != "DIFF"))
      throw FormatError("malformed manifest header: " + line);
    m.kind = kind == "FULL" ? CheckpointKind::Full : CheckpointKind::Diff;
    if (base != "none") {
      try {
        m.base_epoch = std::stoull(base);
      } catch (const std::exception&) {
        throw FormatError("malformed base epoch: " + base);
      }
    }
    if (m.kind == CheckpointKind::Diff && !m.base_epoch) throw FormatError("DIFF manifest without base epoch");
    m.ranks.resize(n);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream l(line);
    std::string w_rank, w_ord, w_bytes, w_digest, hex;
    std::size_t r = 0;
    RegionEntry e;
    l >> w_rank >> r >> w_ord >> e.ordinal >> w_bytes >> e.bytes >> w_digest >> hex;
    if (!l || w_rank != "rank" || w_ord != "ordinal" || w_bytes != "bytes" || w_digest != "digest" ||
        r >= m.ranks.size())
      throw FormatError("malformed manifest line: " + line);
    e.digest = Digest::from_hex(hex);
    m.ranks[r].push_back(e);
  }
  m.committed = true;
  return m;
}

}  // namespace openchk
