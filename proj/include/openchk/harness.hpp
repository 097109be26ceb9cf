#pragma once

// Multi-process world: forks one process per rank, runs a demo app with a
// load before the loop and a periodic store inside it, injects faults, and
// relaunches until the run completes.

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "openchk/apps.hpp"
#include "openchk/runtime.hpp"

namespace openchk {

// Kill one rank at the n-th time it reaches a named protocol point.
struct KillPoint {
  int rank = 0;
  std::string point;
  int occurrence = 1;
};

struct WorldConfig {
  int ranks = 4;
  std::string app = "heat2d";
  std::int64_t iterations = 200;
  double ckpt_every = 0.1;          // fraction of iterations; 0 disables checkpointing
  std::optional<double> fault_at;   // progress fraction; every rank dies there on the first attempt
  int level = 1;
  CheckpointKind kind = CheckpointKind::Full;
  std::string profile = "fti-like";
  std::uint64_t seed = 1;
  fs::path root;
  std::uint64_t block_size = kDefaultBlockSize;
  bool agent = false;
  bool flush_global = false;
  int max_retries = 3;
  AppShape shape;
  std::optional<KillPoint> kill;  // first attempt only
  // Called by the supervisor after each attempt has fully exited.
  std::function<void(int attempt)> after_attempt;
};

struct RunReport {
  bool completed = false;
  int restarts = 0;
  int checkpoints_taken = 0;
  double wall_time = 0;
  std::optional<Digest> final_digest;
  std::vector<std::int64_t> resumed_at;  // iteration each attempt started from
};

inline std::int64_t checkpoint_period(const WorldConfig& cfg) {
  if (cfg.ckpt_every <= 0) return 0;
  return std::max<std::int64_t>(1, std::llround(static_cast<double>(cfg.iterations) * cfg.ckpt_every));
}

inline std::optional<std::int64_t> fault_iteration(const WorldConfig& cfg) {
  if (!cfg.fault_at) return std::nullopt;
  return std::llround(static_cast<double>(cfg.iterations) * *cfg.fault_at);
}

inline void validate(const WorldConfig& cfg) {
  if (cfg.ranks <= 0) throw HarnessError("ranks must be positive");
  if (cfg.iterations <= 0) throw HarnessError("iterations must be positive");
  if (cfg.ckpt_every < 0 || cfg.ckpt_every > 1) throw HarnessError("ckpt_every must lie in (0, 1]");
  if (cfg.fault_at && (*cfg.fault_at <= 0 || *cfg.fault_at >= 1))
    throw HarnessError("fault_at must lie in (0, 1)");
  if (cfg.ckpt_every > 0 && cfg.root.empty()) throw HarnessError("checkpointing needs a root directory");
}

namespace detail {

// Body of one rank process for one attempt. Rank 0 reports progress lines on `report`.
inline void rank_main(Communicator& comm, const WorldConfig& cfg, int attempt, std::FILE* report) {
  auto say = [&](const std::string& line) {
    if (report) {
      std::fputs((line + "\n").c_str(), report);
      std::fflush(report);
    }
  };
  auto app = make_app(cfg.app, comm.rank(), comm.size(), cfg.seed, cfg.shape);
  const auto period = checkpoint_period(cfg);
  const auto fault = attempt == 0 ? fault_iteration(cfg) : std::nullopt;

  std::int64_t t = 0;
  std::vector<RegionBinding> regions{bind_scalar(0, t, "t"), bind_array(1, app->state(), "local")};
  std::optional<Context> ctx;
  if (period > 0) {
    Config c;
    c.root = cfg.root;
    c.profile = cfg.profile;
    c.block_size = cfg.block_size;
    c.agent = cfg.agent;
    c.flush_global = cfg.flush_global;
    if (cfg.kill && attempt == 0 && cfg.kill->rank == comm.rank()) {
      c.fault_hook = [kill = *cfg.kill, seen = 0](std::string_view point) mutable {
        if (point == kill.point && ++seen == kill.occurrence) std::raise(SIGKILL);
      };
    }
    ctx.emplace(comm, c);
  }
  bool restored = false;
  if (ctx) restored = ctx->load(regions).restored();
  say("resumed=" + std::to_string(t));

  for (; t < cfg.iterations; ++t) {
    if (fault && t == *fault) std::raise(SIGKILL);
    // The iteration just restored is already on disk.
    if (ctx && t % period == 0 && !restored) {
      ctx->store(regions, t, cfg.level, cfg.kind);
      say("checkpoint=" + std::to_string(t));
    }
    restored = false;
    app->step(comm);
  }
  if (ctx) ctx->shutdown();

  const auto raw = std::as_bytes(app->state());
  const auto blocks = comm.gather(0, raw);
  if (comm.rank() == 0) {
    Bytes all;
    for (const auto& b : blocks) append(all, b);
    say("digest=" + digest_of(all).hex());
    say("completed=1");
  }
}

}  // namespace detail

inline RunReport run_world(const WorldConfig& cfg) {
  validate(cfg);
  RunReport report;
  const auto start = std::chrono::steady_clock::now();
  std::cout.flush();
  std::cerr.flush();
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    int pipefd[2];
    if (::pipe2(pipefd, O_CLOEXEC) != 0) throw HarnessError("pipe failed");
    auto world = make_socket_world(cfg.ranks);
    std::vector<pid_t> pids;
    for (int r = 0; r < cfg.ranks; ++r) {
      const pid_t pid = ::fork();
      if (pid < 0) throw HarnessError("fork failed");
      if (pid == 0) {
        for (int other = 0; other < cfg.ranks; ++other)
          if (other != r) world[static_cast<std::size_t>(other)].reset();
        ::close(pipefd[0]);
        std::FILE* out = nullptr;
        if (r == 0) out = ::fdopen(pipefd[1], "w");
        else ::close(pipefd[1]);
        int code = 0;
        try {
          detail::rank_main(*world[static_cast<std::size_t>(r)], cfg, attempt, out);
        } catch (const CommError&) {
          code = 1;  // a peer died; the supervisor relaunches
        } catch (const std::exception& e) {
          std::fprintf(stderr, "rank %d: %s\n", r, e.what());
          code = 1;
        }
        if (out) std::fclose(out);
        std::fflush(stderr);
        ::_exit(code);
      }
      pids.push_back(pid);
    }
    world.clear();
    ::close(pipefd[1]);

    std::string text;
    char buf[4096];
    for (;;) {
      const auto n = ::read(pipefd[0], buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      text.append(buf, static_cast<std::size_t>(n));
    }
    ::close(pipefd[0]);
    bool all_ok = true;
    for (auto pid : pids) {
      int status = 0;
      while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) all_ok = false;
    }
    if (cfg.after_attempt) cfg.after_attempt(attempt);

    bool completed = false;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      const auto eq = line.find('=');
      const auto key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "resumed") report.resumed_at.push_back(std::stoll(value));
      else if (key == "checkpoint") ++report.checkpoints_taken;
      else if (key == "digest") report.final_digest = Digest::from_hex(value);
      else if (key == "completed") completed = true;
    }
    if (completed && all_ok) {
      report.completed = true;
      report.restarts = attempt;
      report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return report;
    }
    report.final_digest.reset();
  }
  throw HarnessError("run did not complete within " + std::to_string(cfg.max_retries) + " relaunches");
}

inline double overhead_report(const RunReport& base, const RunReport& with_ckpt) {
  if (!(base.wall_time > 0)) throw ReportError("base run has no positive wall time");
  return with_ckpt.wall_time / base.wall_time;
}

inline std::string format_report(const RunReport& r) {
  std::ostringstream out;
  out << "completed=" << (r.completed ? 1 : 0) << "\n"
      << "restarts=" << r.restarts << "\n"
      << "checkpoints=" << r.checkpoints_taken << "\n"
      << "wall_time=" << r.wall_time << "\n"
      << "final_digest=" << (r.final_digest ? r.final_digest->hex() : "none") << "\n";
  for (std::size_t i = 0; i < r.resumed_at.size(); ++i) out << "resumed_at_" << i << "=" << r.resumed_at[i] << "\n";
  return out.str();
}

}  // namespace openchk
