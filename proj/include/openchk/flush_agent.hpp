#pragma once

// Per-rank background worker for the slow part of a checkpoint: replication
// work that runs after the payload is staged locally, overlapped with the
// application. Tasks run strictly in FIFO order.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "openchk/bytes.hpp"
#include "openchk/digest.hpp"
#include "openchk/error.hpp"
#include "openchk/levels.hpp"

namespace openchk {

struct FlushTask {
  std::uint64_t epoch = 0;
  int rank = 0;
  Scheme scheme;
  // Staged artifact and the digest it was sealed with; verified before `work` runs.
  fs::path staged;
  Digest sealed;
  std::function<void(std::span<const std::byte> staged_bytes)> work;
};

struct FlushTicket {
  std::uint64_t sequence = 0;
  std::uint64_t epoch = 0;
};

class FlushAgent {
 public:
  FlushAgent() : worker_([this] { run(); }) {}
  FlushAgent(const FlushAgent&) = delete;
  FlushAgent& operator=(const FlushAgent&) = delete;

  ~FlushAgent() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  FlushTicket enqueue(FlushTask task) {
    std::lock_guard lock(mu_);
    if (stopping_) throw AgentError("flush agent is stopped");
    const FlushTicket ticket{next_sequence_++, task.epoch};
    ++pending_[task.epoch];
    queue_.push_back({ticket, std::move(task)});
    cv_.notify_all();
    return ticket;
  }

  // Blocks until every queued task has finished. The first failure since the
  // previous drain is raised as FlushError.
  void drain() {
    std::unique_lock lock(mu_);
    if (stopping_) throw AgentError("flush agent is stopped");
    idle_.wait(lock, [&] { return queue_.empty() && !busy_; });
    if (!unreported_.empty()) {
      const auto [epoch, message] = unreported_.front();
      unreported_.clear();
      throw FlushError(message, epoch);
    }
  }

  // Blocks until all tasks of `epoch` are done; returns the failure message, if any.
  std::optional<std::string> wait_epoch(std::uint64_t epoch) {
    std::unique_lock lock(mu_);
    idle_.wait(lock, [&] { return pending_[epoch] == 0; });
    pending_.erase(epoch);
    auto it = failures_.find(epoch);
    if (it == failures_.end()) return std::nullopt;
    auto message = it->second;
    failures_.erase(it);
    std::erase_if(unreported_, [&](const auto& f) { return f.first == epoch; });
    return message;
  }

  // Drains, then refuses further work. Idempotent.
  void stop() {
    std::unique_lock lock(mu_);
    idle_.wait(lock, [&] { return queue_.empty() && !busy_; });
    stopping_ = true;
    cv_.notify_all();
  }

  bool running() const {
    std::lock_guard lock(mu_);
    return !stopping_;
  }

  // Sequence numbers in completion order.
  std::vector<std::uint64_t> completed() const {
    std::lock_guard lock(mu_);
    return completed_;
  }

 private:
  struct Entry {
    FlushTicket ticket;
    FlushTask task;
  };

  void run() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      auto entry = std::move(queue_.front());
      queue_.pop_front();
      busy_ = true;
      lock.unlock();
      std::optional<std::string> failure;
      try {
        Bytes staged;
        if (!entry.task.staged.empty()) {
          staged = read_file(entry.task.staged);
          if (digest_of(staged) != entry.task.sealed) throw StorageError("staged artifact changed after sealing");
        }
        if (entry.task.work) entry.task.work(staged);
      } catch (const std::exception& e) {
        failure = e.what();
      }
      lock.lock();
      busy_ = false;
      completed_.push_back(entry.ticket.sequence);
      if (failure) {
        failures_.emplace(entry.ticket.epoch, *failure);
        unreported_.emplace_back(entry.ticket.epoch, *failure);
      }
      --pending_[entry.ticket.epoch];
      idle_.notify_all();
    }
  }

  mutable std::mutex mu_;
  std::condition_variable cv_, idle_;
  std::deque<Entry> queue_;
  std::map<std::uint64_t, int> pending_;
  std::map<std::uint64_t, std::string> failures_;
  std::vector<std::pair<std::uint64_t, std::string>> unreported_;
  std::vector<std::uint64_t> completed_;
  std::uint64_t next_sequence_ = 0;
  bool busy_ = false;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace openchk
