#pragma once

// On-disk layout of a checkpoint root and the sinks artifacts are written through.
//
//   <root>/l<level>/epoch_<k>/rank_<r>.ochk                 payload staged at a level
//   <root>/l<level>/epoch_<k>/partner/rank_<p>/rank_<r>.ochk partner copy held by p
//   <root>/l<level>/epoch_<k>/xor/group_<g>.parity          group parity
//   <root>/global/epoch_<k>/rank_<r>.ochk                   global copy
//   <root>/meta/epoch_<k>.manifest, <root>/meta/current

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/error.hpp"

namespace openchk {

namespace fs = std::filesystem;

struct Layout {
  fs::path root;

  fs::path level_dir(int level) const { return root / ("l" + std::to_string(level)); }
  fs::path epoch_dir(int level, std::uint64_t epoch) const {
    return level_dir(level) / ("epoch_" + std::to_string(epoch));
  }
  fs::path payload(int level, std::uint64_t epoch, int rank) const {
    return epoch_dir(level, epoch) / ("rank_" + std::to_string(rank) + ".ochk");
  }
  fs::path partner_area(int level, std::uint64_t epoch, int holder) const {
    return epoch_dir(level, epoch) / "partner" / ("rank_" + std::to_string(holder));
  }
  fs::path partner_copy(int level, std::uint64_t epoch, int holder, int owner) const {
    return partner_area(level, epoch, holder) / ("rank_" + std::to_string(owner) + ".ochk");
  }
  fs::path parity(int level, std::uint64_t epoch, int group) const {
    return epoch_dir(level, epoch) / "xor" / ("group_" + std::to_string(group) + ".parity");
  }
  fs::path global_dir() const { return root / "global"; }
  fs::path global_epoch_dir(std::uint64_t epoch) const { return global_dir() / ("epoch_" + std::to_string(epoch)); }
  fs::path global_payload(std::uint64_t epoch, int rank) const {
    return global_epoch_dir(epoch) / ("rank_" + std::to_string(rank) + ".ochk");
  }
  fs::path meta_dir() const { return root / "meta"; }
  fs::path manifest(std::uint64_t epoch) const {
    return meta_dir() / ("epoch_" + std::to_string(epoch) + ".manifest");
  }
  fs::path current() const { return meta_dir() / "current"; }
};

// Parses "<prefix><number><suffix>"; nullopt when the name does not match.
inline std::optional<std::uint64_t> parse_numbered(std::string_view name, std::string_view prefix,
                                                   std::string_view suffix = {}) {
  if (name.size() <= prefix.size() + suffix.size() || name.substr(0, prefix.size()) != prefix ||
      name.substr(name.size() - suffix.size()) != suffix)
    return std::nullopt;
  const auto digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
  std::uint64_t v = 0;
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + static_cast<std::uint64_t>(c - '0');
  }
  return v;
}

enum class ArtifactRole { Payload, Scheme, Meta };

inline std::string_view to_string(ArtifactRole role) {
  switch (role) {
    case ArtifactRole::Payload: return "payload";
    case ArtifactRole::Scheme: return "scheme";
    case ArtifactRole::Meta: return "meta";
  }
  return "?";
}

// Called at named points of the checkpoint protocol; tests use it to kill a
// rank process at a chosen instant.
using FaultHook = std::function<void(std::string_view point)>;

class StorageSink {
 public:
  virtual ~StorageSink() = default;
  virtual void write(const fs::path& path, std::span<const std::byte> data, ArtifactRole role) = 0;
  void set_fault_hook(FaultHook hook) { hook_ = std::move(hook); }

 protected:
  void fault_point(std::string_view point) const {
    if (hook_) hook_(point);
  }

 private:
  FaultHook hook_;
};

// Plain file writes. Data goes out in two halves with a fault point between
// them so a crash can leave a torn file behind.
class FsSink : public StorageSink {
 public:
  void write(const fs::path& path, std::span<const std::byte> data, ArtifactRole role) override {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot create " + path.string());
    const auto half = data.size() / 2;
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(half));
    out.flush();
    fault_point(std::string(to_string(role)) + ".partial");
    out.write(reinterpret_cast<const char*>(data.data() + half), static_cast<std::streamsize>(data.size() - half));
    out.flush();
    if (!out) throw StorageError("write failed on " + path.string());
  }
};

// Write to a temporary name, then rename over the target.
inline void write_atomic(StorageSink& sink, const fs::path& path, std::span<const std::byte> data,
                         const FaultHook& hook = {}, std::string_view point = {}) {
  auto tmp = path;
  tmp += ".tmp";
  sink.write(tmp, data, ArtifactRole::Meta);
  if (hook && !point.empty()) hook(point);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("rename " + tmp.string() + " failed: " + ec.message());
}

// Forwards to an inner sink after sleeping on selected roles; records when
// each delayed write started and finished.
class DelayedSink : public StorageSink {
 public:
  using Clock = std::chrono::steady_clock;

  DelayedSink(std::shared_ptr<StorageSink> inner, std::chrono::milliseconds delay,
              ArtifactRole delayed_role = ArtifactRole::Scheme)
      : inner_(std::move(inner)), delay_(delay), role_(delayed_role) {}

  void write(const fs::path& path, std::span<const std::byte> data, ArtifactRole role) override {
    if (role == role_) {
      const auto start = Clock::now();
      std::this_thread::sleep_for(delay_);
      inner_->write(path, data, role);
      std::lock_guard lock(mu_);
      windows_.push_back({start, Clock::now()});
      return;
    }
    inner_->write(path, data, role);
  }

  struct Window {
    Clock::time_point start, end;
  };

  std::vector<Window> windows() const {
    std::lock_guard lock(mu_);
    return windows_;
  }

 private:
  std::shared_ptr<StorageSink> inner_;
  std::chrono::milliseconds delay_;
  ArtifactRole role_;
  mutable std::mutex mu_;
  std::vector<Window> windows_;
};

// Fails every write for which `predicate` returns true.
class FailingSink : public StorageSink {
 public:
  using Predicate = std::function<bool(const fs::path&, ArtifactRole)>;

  FailingSink(std::shared_ptr<StorageSink> inner, Predicate predicate)
      : inner_(std::move(inner)), predicate_(std::move(predicate)) {}

  void write(const fs::path& path, std::span<const std::byte> data, ArtifactRole role) override {
    if (predicate_(path, role)) throw StorageError("injected write failure on " + path.string());
    inner_->write(path, data, role);
  }

 private:
  std::shared_ptr<StorageSink> inner_;
  Predicate predicate_;
};

}  // namespace openchk
