#pragma once

// Coordinated checkpoint/restart runtime: context lifecycle, region
// registration, store/load across ranks, epoch bookkeeping and dispatch to
// the level schemes of a backend profile.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/comm.hpp"
#include "openchk/container.hpp"
#include "openchk/diff.hpp"
#include "openchk/digest.hpp"
#include "openchk/error.hpp"
#include "openchk/flush_agent.hpp"
#include "openchk/levels.hpp"
#include "openchk/manifest.hpp"
#include "openchk/storage.hpp"
#include "openchk/translator.hpp"

namespace openchk {

// ---------------------------------------------------------------------------
// Configuration

struct Config {
  fs::path root;
  std::string profile = "fti-like";
  std::uint64_t block_size = kDefaultBlockSize;
  bool agent = false;
  int group_size = 0;  // 0: pick from the world size
  bool flush_global = false;
  std::size_t max_chain = 8;  // diffs allowed before a forced full checkpoint

  // Programmatic only.
  std::shared_ptr<StorageSink> sink;
  FaultHook fault_hook;
};

inline bool parse_switch(std::string_view key, std::string_view value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ConfigError("'" + std::string(key) + "' must be on or off, got '" + std::string(value) + "'");
}

// key=value lines; '#' starts a comment line.
inline Config parse_config(std::string_view text) {
  Config cfg;
  std::size_t lineno = 0;
  for (auto line : detail::split_lines(text)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(lineno) + ": missing '='");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    auto number = [&]() -> std::uint64_t {
      const auto v = parse_numbered(value, "");
      if (!v) throw ConfigError("config key '" + std::string(key) + "' needs a non-negative integer");
      return *v;
    };
    if (key == "root") cfg.root = std::string(value);
    else if (key == "profile") cfg.profile = std::string(value);
    else if (key == "block_size") cfg.block_size = number();
    else if (key == "agent") cfg.agent = parse_switch(key, value);
    else if (key == "group_size") cfg.group_size = static_cast<int>(number());
    else if (key == "flush_global") cfg.flush_global = parse_switch(key, value);
    else if (key == "max_chain") cfg.max_chain = number();
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
  return cfg;
}

inline Config load_config(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw ConfigError("cannot read config file " + path.string());
  return parse_config(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Regions

// Application memory protected under a descriptor. `memory` covers the whole
// object; the descriptor's spans select the protected elements.
struct RegionBinding {
  RegionDescriptor descriptor;
  std::span<std::byte> memory;
  TypeCode type = TypeCode::Byte;
  std::string name;  // dataset name; empty means Dataset_<ordinal>
};

template <typename T>
RegionBinding bind_array(std::uint64_t ordinal, std::span<T> values, std::string name = {}) {
  static_assert(std::is_trivially_copyable_v<T>);
  RegionBinding b;
  b.descriptor = describe_region(name.empty() ? default_dataset_name(ordinal) : name, ordinal, sizeof(T),
                                 {values.size()}, {{0, values.empty() ? 0 : values.size() - 1}});
  if (values.empty()) b.descriptor.spans = {{0, 0}}, b.descriptor.total_bytes = 0;
  b.memory = std::as_writable_bytes(values);
  b.type = type_code_for<T>();
  b.name = std::move(name);
  return b;
}

template <typename T>
RegionBinding bind_scalar(std::uint64_t ordinal, T& value, std::string name = {}) {
  return bind_array(ordinal, std::span<T>(&value, 1), std::move(name));
}

// Binds memory under a descriptor produced by the translator.
inline RegionBinding bind_described(RegionDescriptor descriptor, std::span<std::byte> memory,
                                    TypeCode type = TypeCode::Byte, std::string name = {}) {
  return RegionBinding{std::move(descriptor), memory, type, std::move(name)};
}

namespace detail {

inline void check_binding(const RegionBinding& b) {
  const auto& d = b.descriptor;
  if (d.total_bytes == 0) throw StoreError("region " + std::to_string(d.ordinal) + " protects no bytes");
  for (const auto& s : d.spans)
    if ((s.offset + s.count) * d.element_size > b.memory.size())
      throw StoreError("region " + std::to_string(d.ordinal) + " spans exceed the bound memory");
}

inline Bytes gather_region(const RegionBinding& b) {
  Bytes out;
  out.reserve(b.descriptor.total_bytes);
  const auto es = b.descriptor.element_size;
  for (const auto& s : b.descriptor.spans)
    append(out, std::span<const std::byte>(b.memory.data() + s.offset * es, s.count * es));
  return out;
}

inline void scatter_region(const RegionBinding& b, std::span<const std::byte> data) {
  const auto es = b.descriptor.element_size;
  std::size_t pos = 0;
  for (const auto& s : b.descriptor.spans) {
    std::memcpy(b.memory.data() + s.offset * es, data.data() + pos, s.count * es);
    pos += s.count * es;
  }
}

inline Dataset region_dataset(const RegionBinding& b) {
  Dataset d;
  d.name = b.name.empty() ? default_dataset_name(b.descriptor.ordinal) : b.name;
  d.data = gather_region(b);
  if (b.type != TypeCode::Byte && type_width(b.type) == b.descriptor.element_size) {
    d.type = b.type;
    d.dims = {d.data.size() / b.descriptor.element_size};
  } else {
    d.type = TypeCode::Byte;
    d.dims = {d.data.size()};
  }
  return d;
}

inline std::optional<std::uint64_t> read_current(const Layout& layout) {
  std::error_code ec;
  if (!fs::is_regular_file(layout.current(), ec)) return std::nullopt;
  const auto text = trim(read_text_file(layout.current()));
  return parse_numbered(text, "");
}

inline std::optional<CheckpointManifest> read_manifest(const Layout& layout, std::uint64_t epoch) {
  std::error_code ec;
  if (!fs::is_regular_file(layout.manifest(epoch), ec)) return std::nullopt;
  try {
    return decode_manifest(read_text_file(layout.manifest(epoch)));
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline std::vector<std::uint64_t> committed_epochs(const Layout& layout) {
  std::vector<std::uint64_t> out;
  std::error_code ec;
  if (!fs::is_directory(layout.meta_dir(), ec)) return out;
  for (const auto& entry : fs::directory_iterator(layout.meta_dir(), ec))
    if (auto e = parse_numbered(entry.path().filename().string(), "epoch_", ".manifest")) out.push_back(*e);
  std::sort(out.begin(), out.end());
  return out;
}

// Epoch directories under l<level>/ and global/, keyed by epoch.
inline std::multimap<std::uint64_t, fs::path> epoch_directories(const Layout& layout) {
  std::multimap<std::uint64_t, fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(layout.root, ec)) return out;
  for (const auto& top : fs::directory_iterator(layout.root, ec)) {
    const auto name = top.path().filename().string();
    if (!parse_numbered(name, "l") && name != "global") continue;
    for (const auto& sub : fs::directory_iterator(top.path(), ec))
      if (auto e = parse_numbered(sub.path().filename().string(), "epoch_")) out.emplace(*e, sub.path());
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Recovery (shared by the runtime and the post-mortem crawler)

// Returns `rank`'s artifact for `m` via the cascade: staged file, then the
// level's scheme, then a global copy.
inline Bytes recover_artifact(const Layout& layout, const BackendProfile& profile, const CheckpointManifest& m,
                              int rank) {
  if (auto local = detail::try_read(layout.payload(m.level, m.epoch, rank))) return *local;
  std::string reasons;
  try {
    const auto scheme = map_level(profile, m.level);
    if (scheme.tag != SchemeTag::Local)
      return recover_scheme(scheme, rank, m.world_size(), m.epoch, m.level, layout);
  } catch (const Error& e) {
    reasons = e.what();
  }
  if (auto global = detail::try_read(layout.global_payload(m.epoch, rank))) return *global;
  throw Unrecoverable("rank " + std::to_string(rank) + " epoch " + std::to_string(m.epoch) +
                      " unrecoverable at every level" + (reasons.empty() ? "" : ": " + reasons));
}

// Rebuilds the container bytes of `rank` at `m`, following diff chains.
inline Bytes recover_payload(const Layout& layout, const BackendProfile& profile, const CheckpointManifest& m,
                             int rank, std::size_t depth = 0) {
  if (depth > 1024) throw ChainError("diff chain too long");
  auto raw = recover_artifact(layout, profile, m, rank);
  if (m.kind == CheckpointKind::Full) {
    if (!is_container(raw)) throw FormatError("full checkpoint payload is not a container");
    return raw;
  }
  auto d = decode_diff(raw);
  if (!m.base_epoch || d.base_epoch != *m.base_epoch) throw ChainError("diff base does not match manifest");
  const auto base = detail::read_manifest(layout, d.base_epoch);
  if (!base) throw ChainError("base epoch " + std::to_string(d.base_epoch) + " has no manifest");
  Bytes image = recover_payload(layout, profile, *base, rank, depth + 1);
  apply_diff(image, d);
  return image;
}

// Parses a recovered payload and checks it against the rank's manifest entries.
inline std::vector<Dataset> verify_payload(std::span<const std::byte> payload, const std::vector<RegionEntry>& entries) {
  auto datasets = read_container(payload);
  if (datasets.size() != entries.size())
    throw FormatError("payload holds " + std::to_string(datasets.size()) + " datasets, manifest lists " +
                      std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (datasets[i].data.size() != entries[i].bytes || digest_of(datasets[i].data) != entries[i].digest)
      throw FormatError("dataset " + std::to_string(i) + " does not match its manifest digest");
  }
  return datasets;
}

// ---------------------------------------------------------------------------
// Context

struct StoreReport {
  std::uint64_t epoch = 0;
  CheckpointKind kind = CheckpointKind::Full;  // what was written (DIFF may fall back to FULL)
  bool committed = false;
  bool pending = false;  // handed to the flush agent; commits at the next collective call
  double dirty_ratio = 1.0;
  std::uint64_t bytes_written = 0;
};

struct LoadOutcome {
  enum class Status { FreshStart, Restored };
  Status status = Status::FreshStart;
  std::int64_t user_id = 0;
  std::uint64_t epoch = 0;

  bool restored() const { return status == Status::Restored; }
};

class Context {
 public:
  Context(Communicator& comm, Config config)
      : comm_(&comm), config_(std::move(config)), layout_{config_.root} {
    std::error_code ec;
    if (config_.root.empty() || !fs::is_directory(config_.root, ec))
      throw StorageError("checkpoint root '" + config_.root.string() + "' is not a directory");
    if (config_.block_size == 0) throw ConfigError("block_size must be positive");
    const int group = config_.group_size > 0 ? config_.group_size : default_group_size(comm.size());
    profile_ = make_profile(config_.profile, group);
    if (!config_.sink) config_.sink = std::make_shared<FsSink>();
    if (config_.fault_hook) config_.sink->set_fault_hook(config_.fault_hook);

    bool ok = true;
    std::string why;
    if (comm.rank() == 0) {
      try {
        fs::create_directories(layout_.meta_dir());
        discovered_ = detail::read_current(layout_);
        next_epoch_ = discover_next_epoch();
      } catch (const std::exception& e) {
        ok = false;
        why = e.what();
      }
    }
    if (!comm.allreduce_and(ok)) throw StorageError("cannot prepare checkpoint root: " + why);
    next_epoch_ = comm.broadcast_u64(0, next_epoch_);
    const auto found = comm.broadcast_u64(0, discovered_ ? *discovered_ + 1 : 0);
    discovered_ = found ? std::optional<std::uint64_t>(found - 1) : std::nullopt;
    if (config_.agent) agent_ = std::make_unique<FlushAgent>();
  }

  Context(const Context&) = delete;
  Context& operator=(const Context&) = delete;
  ~Context() = default;

  int rank() const { return comm_->rank(); }
  int world_size() const { return comm_->size(); }
  const Config& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  const BackendProfile& profile() const { return profile_; }
  bool open() const { return !shut_; }
  // Newest committed epoch present when the context was created.
  std::optional<std::uint64_t> discovered_epoch() const { return discovered_; }

  // ---- one-shot operations ----------------------------------------------

  StoreReport store(std::span<const RegionBinding> regions, std::int64_t user_id, int level, CheckpointKind kind) {
    require_idle();
    InFlight guard(in_flight_, Op::Store);
    return do_store(regions, user_id, level, kind);
  }

  LoadOutcome load(std::span<const RegionBinding> regions) {
    require_idle();
    InFlight guard(in_flight_, Op::Load);
    return do_load(regions);
  }

  // Completes a commit handed to the flush agent, if any. Collective.
  void sync() {
    require_idle();
    if (auto err = finalize_pending()) throw *err;
  }

  void shutdown() {
    if (shut_) throw LifecycleError("checkpoint context already shut down");
    if (in_flight_ != Op::None) throw LifecycleError("shutdown while a store or load is in flight");
    std::optional<FlushError> failure = finalize_pending();
    if (agent_) agent_->stop();
    comm_->barrier();
    if (rank() == 0) remove_uncommitted();
    comm_->barrier();
    shut_ = true;
    if (!failure && !flush_failures_.empty()) failure = flush_failures_.front();
    if (failure) throw *failure;
  }

  // ---- call-level interface (what translated directives call) -----------

  void begin_store(std::int64_t user_id, int level, CheckpointKind kind) {
    require_idle();
    in_flight_ = Op::Store;
    staged_regions_.clear();
    pending_request_ = {user_id, level, kind};
  }

  void begin_load() {
    require_idle();
    in_flight_ = Op::Load;
    staged_regions_.clear();
  }

  void register_region(RegionBinding binding) {
    if (in_flight_ == Op::None) throw LifecycleError("register outside of a store or load");
    if (binding.descriptor.ordinal != staged_regions_.size()) {
      in_flight_ = Op::None;
      throw ManifestMismatch("region ordinal " + std::to_string(binding.descriptor.ordinal) + " registered at position " +
                             std::to_string(staged_regions_.size()));
    }
    staged_regions_.push_back(std::move(binding));
  }

  // Drops a begun store or load whose registration failed. Local only.
  void abandon() {
    in_flight_ = Op::None;
    staged_regions_.clear();
  }

  StoreReport commit_store() {
    if (in_flight_ != Op::Store) throw LifecycleError("commit_store without begin_store");
    InFlight guard(in_flight_, Op::Store, /*already_set=*/true);
    auto regions = std::move(staged_regions_);
    staged_regions_.clear();
    return do_store(regions, pending_request_.user_id, pending_request_.level, pending_request_.kind);
  }

  LoadOutcome commit_load() {
    if (in_flight_ != Op::Load) throw LifecycleError("commit_load without begin_load");
    InFlight guard(in_flight_, Op::Load, /*already_set=*/true);
    auto regions = std::move(staged_regions_);
    staged_regions_.clear();
    return do_load(regions);
  }

 private:
  enum class Op { None, Store, Load };

  struct InFlight {
    InFlight(Op& slot, Op op, bool already_set = false) : slot_(slot) {
      if (!already_set) slot_ = op;
    }
    ~InFlight() { slot_ = Op::None; }
    Op& slot_;
  };

  struct StoreRequest {
    std::int64_t user_id = 0;
    int level = 1;
    CheckpointKind kind = CheckpointKind::Full;
  };

  struct Chain {
    std::vector<std::uint64_t> epochs;  // full base first
    DigestTable table;                  // digests of the head payload
  };

  struct Pending {
    CheckpointManifest draft;  // this rank's entries only
    Bytes payload;
    int level = 1;
  };

  void require_idle() const {
    if (shut_) throw LifecycleError("checkpoint context is shut down");
    if (in_flight_ != Op::None) throw LifecycleError("another store or load is in flight");
  }

  void hook(std::string_view point) const {
    if (config_.fault_hook) config_.fault_hook(point);
  }

  std::uint64_t discover_next_epoch() {
    std::uint64_t highest = 0;
    for (auto e : detail::committed_epochs(layout_)) highest = std::max(highest, e);
    if (discovered_) highest = std::max(highest, *discovered_);
    const auto committed = detail::committed_epochs(layout_);
    for (const auto& [epoch, dir] : detail::epoch_directories(layout_)) {
      highest = std::max(highest, epoch);
      // Leftovers of a store that never committed.
      if (!std::binary_search(committed.begin(), committed.end(), epoch)) fs::remove_all(dir);
    }
    return highest + 1;
  }

  void remove_epoch_dirs(std::uint64_t epoch) {
    std::error_code ec;
    for (const auto& [e, dir] : detail::epoch_directories(layout_))
      if (e == epoch) fs::remove_all(dir, ec);
  }

  void remove_uncommitted() {
    std::error_code ec;
    const auto committed = detail::committed_epochs(layout_);
    for (const auto& [epoch, dir] : detail::epoch_directories(layout_))
      if (!std::binary_search(committed.begin(), committed.end(), epoch)) fs::remove_all(dir, ec);
    for (const auto& entry : fs::directory_iterator(layout_.meta_dir(), ec))
      if (entry.path().extension() == ".tmp") fs::remove(entry.path(), ec);
    // Directories that never received anything.
    for (const auto& top : fs::directory_iterator(layout_.root, ec)) {
      const auto name = top.path().filename().string();
      if ((parse_numbered(name, "l") || name == "global" || name == "meta") && fs::is_empty(top.path(), ec))
        fs::remove(top.path(), ec);
    }
  }

  // Older epochs at `level` that the new head does not depend on.
  void collect_garbage(int level, const std::vector<std::uint64_t>& keep) {
    std::error_code ec;
    for (auto epoch : detail::committed_epochs(layout_)) {
      if (std::find(keep.begin(), keep.end(), epoch) != keep.end()) continue;
      const auto m = detail::read_manifest(layout_, epoch);
      if (!m || m->level != level) continue;
      fs::remove(layout_.manifest(epoch), ec);
      hook("gc.partial");
      remove_epoch_dirs(epoch);
    }
  }

  bool can_diff(int level) const {
    auto it = chains_.find(level);
    return it != chains_.end() && it->second.epochs.size() <= config_.max_chain &&
           it->second.table.block_size == config_.block_size;
  }

  // Agreement round, publish by rank 0, then garbage collection. Returns
  // whether the epoch is committed.
  bool coordinated_commit(const CheckpointManifest& draft, bool local_ok, const std::vector<std::uint64_t>& keep) {
    hook("commit.vote");
    Bytes mine = to_bytes(encode_manifest([&] {
      CheckpointManifest m = draft;
      m.ranks = {draft.ranks.empty() ? std::vector<RegionEntry>{} : draft.ranks.front()};
      return m;
    }()));
    const auto all = comm_->gather(0, mine);
    const bool agreed = comm_->allreduce_and(local_ok);
    if (!agreed) {
      if (rank() == 0) remove_epoch_dirs(draft.epoch);
      comm_->barrier();
      return false;
    }
    hook("commit.agreed");
    bool published = true;
    if (rank() == 0) {
      CheckpointManifest m = draft;
      m.ranks.clear();
      for (const auto& blob : all) {
        const auto part = decode_manifest(to_string(blob));
        m.ranks.push_back(part.ranks.empty() ? std::vector<RegionEntry>{} : part.ranks.front());
      }
      m.committed = true;
      try {
        if (!m.complete()) throw StoreError("incomplete manifest");
        auto& sink = *config_.sink;
        write_atomic(sink, layout_.manifest(m.epoch), to_bytes(encode_manifest(m)), config_.fault_hook,
                     "publish.manifest_tmp");
        hook("publish.manifest");
        write_atomic(sink, layout_.current(), to_bytes(std::to_string(m.epoch) + "\n"), config_.fault_hook,
                     "publish.current_tmp");
        hook("publish.done");
      } catch (const Error&) {
        published = false;
        std::error_code ec;
        fs::remove(layout_.manifest(m.epoch), ec);
        remove_epoch_dirs(m.epoch);
      }
    }
    std::byte flag{static_cast<unsigned char>(published ? 1 : 0)};
    published = comm_->broadcast(0, std::span(&flag, 1)).at(0) == std::byte{1};
    if (published && rank() == 0) collect_garbage(draft.level, keep);
    return published;
  }

  // Runs the commit round of an epoch whose scheme work went to the agent.
  std::optional<FlushError> finalize_pending() {
    if (!pending_) return std::nullopt;
    auto p = std::move(*pending_);
    pending_.reset();
    const auto failure = agent_ ? agent_->wait_epoch(p.draft.epoch) : std::nullopt;
    const auto keep = chain_after(p.draft);
    const bool committed = coordinated_commit(p.draft, !failure, keep);
    if (committed) {
      advance_chain(p.draft, p.payload);
      return std::nullopt;
    }
    FlushError err(failure ? *failure : "commit round aborted", p.draft.epoch);
    flush_failures_.push_back(err);
    return err;
  }

  std::vector<std::uint64_t> chain_after(const CheckpointManifest& m) const {
    if (m.kind == CheckpointKind::Full) return {m.epoch};
    auto keep = chains_.at(m.level).epochs;
    keep.push_back(m.epoch);
    return keep;
  }

  void advance_chain(const CheckpointManifest& m, const Bytes& payload) {
    auto& chain = chains_[m.level];
    chain.epochs = chain_after(m);
    chain.table = digest_blocks(payload, config_.block_size);
  }

  StoreReport do_store(std::span<const RegionBinding> regions, std::int64_t user_id, int level, CheckpointKind kind) {
    bool valid = !regions.empty();
    std::string why = regions.empty() ? "nothing to protect: empty region list" : "";
    for (std::size_t i = 0; valid && i < regions.size(); ++i) {
      try {
        detail::check_binding(regions[i]);
        if (regions[i].descriptor.ordinal != i) throw StoreError("region ordinals must be dense from 0");
      } catch (const StoreError& e) {
        valid = false;
        why = e.what();
      }
    }
    if (!comm_->allreduce_and(valid)) throw StoreError(why.empty() ? "another rank rejected its region list" : why);
    auto scheme = map_level(profile_, level);
    validate_scheme(scheme, world_size());

    if (auto err = finalize_pending()) {
      (void)err;  // recorded; surfaces from sync() or shutdown()
    }

    const auto epoch = next_epoch_++;
    hook("store.begin");

    std::vector<Dataset> datasets;
    CheckpointManifest draft;
    draft.user_id = user_id;
    draft.epoch = epoch;
    draft.level = level;
    draft.ranks.resize(1);
    for (const auto& r : regions) {
      datasets.push_back(detail::region_dataset(r));
      draft.ranks[0].push_back({r.descriptor.ordinal, datasets.back().data.size(), digest_of(datasets.back().data)});
    }
    Bytes payload = encode_container(datasets);

    StoreReport report;
    report.epoch = epoch;
    const bool diff_ok = comm_->allreduce_and(kind == CheckpointKind::Diff && can_diff(level));
    Bytes artifact;
    if (diff_ok) {
      const auto& chain = chains_.at(level);
      const auto d = diff(chain.table, payload, chain.epochs.back());
      draft.kind = CheckpointKind::Diff;
      draft.base_epoch = chain.epochs.back();
      report.dirty_ratio = d.dirty_ratio();
      artifact = encode_diff(d);
    } else {
      artifact = payload;
    }
    report.kind = draft.kind;
    report.bytes_written = artifact.size();

    bool ok = true;
    try {
      config_.sink->write(layout_.payload(level, epoch, rank()), artifact, ArtifactRole::Payload);
      hook("payload.done");
    } catch (const Error&) {
      ok = false;
    }
    if (!comm_->allreduce_and(ok)) {
      if (rank() == 0) remove_epoch_dirs(epoch);
      comm_->barrier();
      throw StoreAborted("epoch " + std::to_string(epoch) + ": a rank failed to write its payload");
    }

    const bool scheme_work = scheme.tag != SchemeTag::Local || config_.flush_global;
    auto work = [scheme, level, epoch, r = rank(), world = world_size(), layout = layout_, sink = config_.sink,
                 global = config_.flush_global](std::span<const std::byte> staged) {
      apply_scheme(scheme, r, world, epoch, level, layout, *sink, staged);
      if (global && scheme.tag != SchemeTag::Global)
        sink->write(layout.global_payload(epoch, r), staged, ArtifactRole::Scheme);
    };

    if (agent_ && scheme_work) {
      agent_->enqueue(FlushTask{epoch, rank(), scheme, layout_.payload(level, epoch, rank()), digest_of(artifact), work});
      pending_ = Pending{draft, std::move(payload), level};
      report.pending = true;
      return report;
    }

    if (scheme_work) {
      try {
        work(artifact);
        hook("scheme.done");
      } catch (const Error&) {
        ok = false;
      }
    }
    const auto keep = chain_after(draft);
    if (!coordinated_commit(draft, ok, keep))
      throw StoreAborted("epoch " + std::to_string(epoch) + ": commit round aborted");
    advance_chain(draft, payload);
    report.committed = true;
    return report;
  }

  LoadOutcome do_load(std::span<const RegionBinding> regions) {
    if (auto err = finalize_pending()) (void)err;
    // Memory that cannot hold its descriptor is rejected before anything is scattered.
    std::string bad;
    for (const auto& r : regions) {
      try {
        detail::check_binding(r);
      } catch (const Error& e) {
        bad = e.what();
      }
    }
    if (!comm_->allreduce_and(bad.empty()))
      throw ManifestMismatch(bad.empty() ? "another rank registered an unusable region" : bad);
    std::vector<std::uint64_t> candidates;
    if (rank() == 0) {
      if (const auto current = detail::read_current(layout_)) {
        for (auto e : detail::committed_epochs(layout_))
          if (e <= *current) candidates.push_back(e);
        std::reverse(candidates.begin(), candidates.end());
      }
    }
    Bytes encoded;
    for (auto e : candidates) put_le<std::uint64_t>(encoded, e);
    encoded = comm_->broadcast(0, encoded);
    candidates.clear();
    for (std::size_t i = 0; i + 8 <= encoded.size(); i += 8) candidates.push_back(get_le<std::uint64_t>(encoded, i));
    if (candidates.empty()) return {};

    for (auto epoch : candidates) {
      const auto m = detail::read_manifest(layout_, epoch);
      bool matches = m && m->world_size() == world_size();
      if (matches) {
        const auto& entries = m->ranks[static_cast<std::size_t>(rank())];
        matches = entries.size() == regions.size();
        for (std::size_t i = 0; matches && i < entries.size(); ++i)
          matches = entries[i].ordinal == regions[i].descriptor.ordinal &&
                    entries[i].bytes == regions[i].descriptor.total_bytes;
      }
      if (!comm_->allreduce_and(matches))
        throw ManifestMismatch("epoch " + std::to_string(epoch) +
                               ": registered regions do not match the stored ordinals and byte lengths");

      std::vector<Dataset> datasets;
      Bytes payload;
      bool ok = true;
      try {
        payload = recover_payload(layout_, profile_, *m, rank());
        datasets = verify_payload(payload, m->ranks[static_cast<std::size_t>(rank())]);
      } catch (const Error&) {
        ok = false;
      }
      if (!comm_->allreduce_and(ok)) continue;

      for (std::size_t i = 0; i < regions.size(); ++i) detail::scatter_region(regions[i], datasets[i].data);
      auto& chain = chains_[m->level];
      chain.epochs = {m->epoch};
      for (auto base = m->base_epoch; base;) {
        chain.epochs.insert(chain.epochs.begin(), *base);
        const auto bm = detail::read_manifest(layout_, *base);
        base = bm ? bm->base_epoch : std::nullopt;
      }
      chain.table = digest_blocks(payload, config_.block_size);
      LoadOutcome out;
      out.status = LoadOutcome::Status::Restored;
      out.user_id = m->user_id;
      out.epoch = m->epoch;
      return out;
    }
    throw RecoveryFailed("no committed epoch could be recovered on every rank");
  }

  Communicator* comm_;
  Config config_;
  Layout layout_;
  BackendProfile profile_;
  std::uint64_t next_epoch_ = 1;
  std::optional<std::uint64_t> discovered_;
  std::map<int, Chain> chains_;
  std::optional<Pending> pending_;
  std::vector<FlushError> flush_failures_;
  std::unique_ptr<FlushAgent> agent_;
  Op in_flight_ = Op::None;
  std::vector<RegionBinding> staged_regions_;
  StoreRequest pending_request_;
  bool shut_ = false;
};

// ---------------------------------------------------------------------------
// Post-mortem consistency check

struct CrawlReport {
  std::optional<std::uint64_t> current;
  std::vector<std::string> problems;
  bool consistent() const { return problems.empty(); }
};

// Checks that `current` names either nothing or an epoch whose manifest lists
// every rank and whose recoverable payloads match the recorded digests.
inline CrawlReport crawl(const fs::path& root, const std::string& profile_name, int world_size, int group_size = 0) {
  CrawlReport report;
  const Layout layout{root};
  const auto profile = make_profile(profile_name, group_size > 0 ? group_size : default_group_size(world_size));
  try {
    report.current = detail::read_current(layout);
  } catch (const Error& e) {
    report.problems.push_back(std::string("current marker unreadable: ") + e.what());
    return report;
  }
  std::error_code ec;
  if (!report.current) {
    if (fs::exists(layout.current(), ec)) report.problems.push_back("current marker is not an epoch number");
    return report;
  }
  const auto m = detail::read_manifest(layout, *report.current);
  if (!m) {
    report.problems.push_back("current names epoch " + std::to_string(*report.current) + " without a manifest");
    return report;
  }
  if (m->world_size() != world_size || !m->complete()) {
    report.problems.push_back("manifest of epoch " + std::to_string(m->epoch) + " is missing ranks");
    return report;
  }
  for (int r = 0; r < world_size; ++r) {
    try {
      verify_payload(recover_payload(layout, profile, *m, r), m->ranks[static_cast<std::size_t>(r)]);
    } catch (const Error& e) {
      report.problems.push_back("rank " + std::to_string(r) + ": " + e.what());
    }
  }
  return report;
}

}  // namespace openchk
