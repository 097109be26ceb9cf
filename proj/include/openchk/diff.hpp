#pragma once

// Differential checkpointing: per-block digests, dirty-block detection,
// diff artifacts and layered reconstruction, plus the analytical cost model.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/digest.hpp"
#include "openchk/error.hpp"

namespace openchk {

inline constexpr std::uint64_t kDefaultBlockSize = 16 * 1024;

struct DigestTable {
  std::uint64_t block_size = kDefaultBlockSize;
  std::vector<Digest> digests;
  std::uint64_t payload_length = 0;

  friend bool operator==(const DigestTable&, const DigestTable&) = default;
};

struct DirtyBlock {
  std::uint64_t index = 0;
  Bytes bytes;
  friend bool operator==(const DirtyBlock&, const DirtyBlock&) = default;
};

struct DiffArtifact {
  std::uint64_t base_epoch = 0;
  std::uint64_t block_size = kDefaultBlockSize;
  std::vector<DirtyBlock> dirty;  // strictly increasing indices
  std::uint64_t new_length = 0;
  // Epoch this artifact belongs to. Not serialized; the storage path carries it.
  std::optional<std::uint64_t> epoch;

  // Fraction of the new payload's blocks that were written.
  double dirty_ratio() const {
    const auto blocks = block_size ? (new_length + block_size - 1) / block_size : 0;
    return blocks ? static_cast<double>(dirty.size()) / static_cast<double>(blocks) : 0.0;
  }

  std::uint64_t data_bytes() const {
    std::uint64_t n = 0;
    for (const auto& b : dirty) n += b.bytes.size();
    return n;
  }
};

inline DigestTable digest_blocks(std::span<const std::byte> payload, std::uint64_t block_size) {
  if (block_size == 0) throw ParamError("block size must be positive");
  DigestTable table;
  table.block_size = block_size;
  table.payload_length = payload.size();
  table.digests.reserve((payload.size() + block_size - 1) / block_size);
  for (std::uint64_t off = 0; off < payload.size(); off += block_size)
    table.digests.push_back(digest_of(payload.subspan(off, std::min<std::uint64_t>(block_size, payload.size() - off))));
  return table;
}

// Blocks of `payload` whose digest differs from `prev`, or that lie beyond it.
inline DiffArtifact diff(const DigestTable& prev, std::span<const std::byte> payload, std::uint64_t base_epoch = 0) {
  if (prev.block_size == 0) throw ParamError("block size must be positive");
  DiffArtifact art;
  art.base_epoch = base_epoch;
  art.block_size = prev.block_size;
  art.new_length = payload.size();
  const auto bs = prev.block_size;
  for (std::uint64_t i = 0, off = 0; off < payload.size(); ++i, off += bs) {
    const auto block = payload.subspan(off, std::min<std::uint64_t>(bs, payload.size() - off));
    // A previously short final block is dirty whenever the new block is longer.
    const bool known = i < prev.digests.size() &&
                       (i + 1 < prev.digests.size() || prev.payload_length - off == block.size());
    if (known && prev.digests[i] == digest_of(block)) continue;
    art.dirty.push_back({i, Bytes(block.begin(), block.end())});
  }
  return art;
}

struct Snapshot {
  std::uint64_t epoch = 0;
  Bytes bytes;
};

inline void apply_diff(Bytes& image, const DiffArtifact& d) {
  if (d.block_size == 0) throw ParamError("block size must be positive");
  image.resize(std::max<std::uint64_t>(image.size(), d.new_length));
  for (const auto& b : d.dirty) {
    const auto off = b.index * d.block_size;
    if (off + b.bytes.size() > image.size()) image.resize(off + b.bytes.size());
    std::copy(b.bytes.begin(), b.bytes.end(), image.begin() + static_cast<std::ptrdiff_t>(off));
  }
  image.resize(d.new_length);
}

// Layers `diffs` over `base`. Each diff's base_epoch must name the previous link.
inline Bytes reconstruct(const Snapshot& base, std::span<const DiffArtifact> diffs) {
  Bytes image = base.bytes;
  auto expected = base.epoch;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    if (diffs[i].base_epoch != expected)
      throw ChainError("diff " + std::to_string(i) + " is based on epoch " + std::to_string(diffs[i].base_epoch) +
                       ", expected " + std::to_string(expected));
    if (i + 1 < diffs.size() && !diffs[i].epoch)
      throw ChainError("diff " + std::to_string(i) + " has no epoch to link the next diff against");
    apply_diff(image, diffs[i]);
    if (diffs[i].epoch) expected = *diffs[i].epoch;
  }
  return image;
}

// On-disk form: a text header line, then records of (u64 LE index, block bytes).
inline Bytes encode_diff(const DiffArtifact& d) {
  Bytes out;
  append(out, "diff base " + std::to_string(d.base_epoch) + " bs " + std::to_string(d.block_size) + " n " +
                  std::to_string(d.dirty.size()) + " len " + std::to_string(d.new_length) + "\n");
  for (const auto& b : d.dirty) {
    put_le<std::uint64_t>(out, b.index);
    append(out, b.bytes);
  }
  return out;
}

inline bool is_diff(std::span<const std::byte> data) {
  return data.size() >= 5 && to_string(data.first(5)) == "diff ";
}

inline DiffArtifact decode_diff(std::span<const std::byte> data) {
  const auto text = std::string_view(reinterpret_cast<const char*>(data.data()), data.size());
  const auto nl = text.find('\n');
  if (!is_diff(data) || nl == std::string_view::npos) throw FormatError("not a diff artifact");
  std::istringstream header{std::string(text.substr(0, nl))};
  std::string w_diff, w_base, w_bs, w_n, w_len;
  DiffArtifact d;
  std::uint64_t count = 0;
  header >> w_diff >> w_base >> d.base_epoch >> w_bs >> d.block_size >> w_n >> count >> w_len >> d.new_length;
  if (!header || w_base != "base" || w_bs != "bs" || w_n != "n" || w_len != "len" || d.block_size == 0)
    throw FormatError("malformed diff header");
  std::size_t pos = nl + 1;
  const auto last_block = d.new_length == 0 ? 0 : (d.new_length - 1) / d.block_size;
  for (std::uint64_t k = 0; k < count; ++k) {
    if (data.size() - pos < 8) throw FormatError("truncated diff record");
    DirtyBlock b;
    b.index = get_le<std::uint64_t>(data, pos);
    pos += 8;
    if (b.index > last_block || (!d.dirty.empty() && b.index <= d.dirty.back().index))
      throw FormatError("bad diff block index " + std::to_string(b.index));
    const auto len = b.index == last_block ? d.new_length - b.index * d.block_size : d.block_size;
    if (data.size() - pos < len) throw FormatError("truncated diff block");
    b.bytes.assign(data.begin() + static_cast<std::ptrdiff_t>(pos), data.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    d.dirty.push_back(std::move(b));
  }
  if (pos != data.size()) throw FormatError("trailing bytes in diff artifact");
  return d;
}

// ---------------------------------------------------------------------------
// Cost model: extra time of a differential checkpoint over a full one.
//   delta(n_d) = H - (1 - n_d) * W
// n_d is the dirty-block ratio, W the full write time, H the hashing cost.

struct CostModelParams {
  double dirty_ratio = 0.0;
  double write_seconds = 0.0;
  double hash_seconds = 0.0;
};

inline double dcp_overhead(const CostModelParams& p) {
  if (p.dirty_ratio < 0.0 || p.dirty_ratio > 1.0) throw ParamError("dirty ratio must lie in [0, 1]");
  if (!(p.write_seconds > 0.0)) throw ParamError("full write time must be positive");
  if (p.hash_seconds < 0.0) throw ParamError("hashing cost must be non-negative");
  // Same value as H - (1 - n_d) * W, arranged so the break-even point is exact.
  return p.dirty_ratio * p.write_seconds - (p.write_seconds - p.hash_seconds);
}

// Dirty ratio at which differential and full checkpoints cost the same.
inline double dcp_threshold(double write_seconds, double hash_seconds) {
  if (!(write_seconds > 0.0)) throw ParamError("full write time must be positive");
  return 1.0 - hash_seconds / write_seconds;
}

}  // namespace openchk
