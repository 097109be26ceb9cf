// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <thread>

#include "openchk/openchk.hpp"
#include "test_util.hpp"

using namespace openchk;
using testutil::TempDir;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  bool ok = true;
  std::string why;
  void expect(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why = what;
    }
  }
};

int failures = 0;

void report(int n, const std::string& title, const std::function<void(Check&)>& body) {
  const auto start = Clock::now();
  Check c;
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (!c.ok) ++failures;
  std::printf("%s %d %s (%.2fs)%s%s\n", c.ok ? "PASS" : "FAIL", n, title.c_str(), secs, c.ok ? "" : ": ",
              c.why.c_str());
  std::fflush(stdout);
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (auto eq = line.find('='); eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  return out;
}

std::string run_command(const std::string& cmd) {
  std::string out;
  if (auto* p = ::popen(cmd.c_str(), "r")) {
    char buf[512];
    while (auto n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
    if (::pclose(p) != 0) throw std::runtime_error("command failed: " + cmd);
  }
  return out;
}

// ---------------------------------------------------------------------------

void cost_model(Check& c) {
  auto at = [](double nd) {
    return key_values(run_command(std::string(OPENCHK_CLI) + " dcp-model --nd " + std::to_string(nd) + " --w 88 --h 4.4"));
  };
  const auto start = Clock::now();
  const auto even = at(0.95), worst = at(1.0);
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  c.expect(std::stod(even.at("delta")) == 0.0, "delta(0.95)=" + even.at("delta"));
  c.expect(std::abs(std::stod(worst.at("delta")) - 4.4) < 1.0, "delta(1.0)=" + worst.at("delta"));
  c.expect(std::abs(std::stod(worst.at("slope_per_10pct")) - 8.8) < 0.5, "slope=" + worst.at("slope_per_10pct"));
  c.expect(secs < 1.0, "runtime " + std::to_string(secs) + "s");
}

WorldConfig demo_world(const fs::path& root, const std::string& app) {
  WorldConfig w;
  w.ranks = 4;
  w.app = app;
  w.iterations = 200;
  w.ckpt_every = 0.1;
  w.root = root;
  return w;
}

void crash_equivalence(Check& c) {
  for (const std::string app : {"heat2d", "nbody"}) {
    std::optional<Digest> reference;
    {
      TempDir dir;
      reference = run_world(demo_world(dir.path(), app)).final_digest;
    }
    for (const auto& [profile, levels] : {std::pair{"fti-like", 4}, std::pair{"scr-like", 3}})
      for (int level = 1; level <= levels; ++level)
        for (auto kind : {CheckpointKind::Full, CheckpointKind::Diff}) {
          TempDir dir;
          auto w = demo_world(dir.path(), app);
          w.profile = profile;
          w.level = level;
          w.kind = kind;
          w.fault_at = 0.9;
          const auto start = Clock::now();
          const auto r = run_world(w);
          const double secs = std::chrono::duration<double>(Clock::now() - start).count();
          const auto tag = app + " " + profile + " level " + std::to_string(level) + " " + std::string(to_string(kind));
          c.expect(r.completed && r.restarts == 1, tag + ": restarts=" + std::to_string(r.restarts));
          c.expect(r.final_digest == reference, tag + ": digest differs from the fault-free run");
          c.expect(r.resumed_at.size() == 2 && r.resumed_at[1] == 160, tag + ": unexpected resume iteration");
          c.expect(secs < 120, tag + ": took " + std::to_string(secs) + "s");
        }
  }
}

void commit_safety(Check& c) {
  static const char* points[] = {"store.begin",       "payload.partial",     "payload.done",  "scheme.partial",
                                 "scheme.done",       "commit.vote",         "commit.agreed", "publish.manifest_tmp",
                                 "publish.manifest",  "publish.current_tmp", "publish.done",  "meta.partial",
                                 "gc.partial"};
  std::mt19937_64 rng(2024);
  int killed = 0, trial = 0;
  // Some drawn points are never reached (no gc yet, no scheme at level 1); keep drawing.
  for (; killed < 60 && trial < 300; ++trial) {
    TempDir dir;
    WorldConfig w;
    w.ranks = 3;
    w.app = trial % 2 ? "nbody" : "heat2d";
    w.iterations = 40;
    w.ckpt_every = 0.1;
    w.root = dir.path();
    w.shape.heat_rows = 24;
    w.shape.heat_cols = 24;
    w.shape.nbody_per_rank = 8;
    w.level = 1 + static_cast<int>(rng() % 4);
    w.kind = rng() % 2 ? CheckpointKind::Diff : CheckpointKind::Full;
    w.block_size = 256;
    w.kill = KillPoint{static_cast<int>(rng() % 3), points[rng() % std::size(points)], 1 + static_cast<int>(rng() % 8)};
    const auto tag = w.kill->point + "@" + std::to_string(w.kill->occurrence) + " rank " + std::to_string(w.kill->rank);
    w.after_attempt = [&](int attempt) {
      const auto crawl_report = crawl(dir.path(), w.profile, w.ranks);
      for (const auto& p : crawl_report.problems) c.expect(false, tag + " attempt " + std::to_string(attempt) + ": " + p);
    };
    const auto r = run_world(w);
    c.expect(r.completed, tag + ": did not complete");
    killed += r.restarts > 0;
  }
  std::printf("  %d trials, %d killed a rank\n", trial, killed);
  c.expect(killed >= 50, "only " + std::to_string(killed) + " trials actually killed a rank");
}

void scheme_recovery(Check& c) {
  std::mt19937_64 rng(99);
  FsSink sink;
  auto stage = [&](const Layout& layout, const Scheme& s, int world, const std::vector<Bytes>& payloads) {
    for (int r = 0; r < world; ++r) sink.write(layout.payload(1, 1, r), payloads[static_cast<std::size_t>(r)], ArtifactRole::Payload);
    for (int r = 0; r < world; ++r) apply_scheme(s, r, world, 1, 1, layout, sink, payloads[static_cast<std::size_t>(r)]);
  };
  for (int trial = 0; trial < 120; ++trial) {
    TempDir dir;
    const Layout layout{dir.path()};
    const int world = 2 + static_cast<int>(rng() % 7);
    Scheme s{SchemeTag::Xor, 0, 2 + static_cast<int>(rng() % 3)};
    while (world % s.group_size) --s.group_size;
    if (s.group_size < 2) s.group_size = world;
    std::vector<Bytes> payloads;
    for (int r = 0; r < world; ++r) payloads.push_back(testutil::random_bytes(rng, rng() % 5000));
    stage(layout, s, world, payloads);
    const int lost = static_cast<int>(rng() % static_cast<std::uint64_t>(world));
    simulate_node_loss(layout, lost);
    c.expect(recover_scheme(s, lost, world, 1, 1, layout) == payloads[static_cast<std::size_t>(lost)],
             "xor trial " + std::to_string(trial));
    // A second loss in the same group is unrecoverable.
    const int buddy = lost / s.group_size * s.group_size + (lost % s.group_size + 1) % s.group_size;
    simulate_node_loss(layout, buddy);
    bool unrecoverable = false;
    try {
      recover_scheme(s, lost, world, 1, 1, layout);
    } catch (const Unrecoverable&) {
      unrecoverable = true;
    }
    c.expect(unrecoverable, "double loss recovered in xor trial " + std::to_string(trial));
  }
  for (int trial = 0; trial < 60; ++trial) {
    TempDir dir;
    const Layout layout{dir.path()};
    const int world = 2 + static_cast<int>(rng() % 7);
    const Scheme s{SchemeTag::Partner, 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(world - 1)), 0};
    std::vector<Bytes> payloads;
    for (int r = 0; r < world; ++r) payloads.push_back(testutil::random_bytes(rng, rng() % 5000));
    stage(layout, s, world, payloads);
    const int lost = static_cast<int>(rng() % static_cast<std::uint64_t>(world));
    simulate_node_loss(layout, lost);
    c.expect(recover_scheme(s, lost, world, 1, 1, layout) == payloads[static_cast<std::size_t>(lost)],
             "partner trial " + std::to_string(trial));
  }
  // Runtime cascade: two losses in one xor group fall through to the global copy.
  for (bool global : {true, false}) {
    TempDir dir;
    Config cfg;
    cfg.root = dir.path();
    cfg.profile = "scr-like";
    cfg.flush_global = global;
    auto run = [&](auto&& body) {
      auto world = make_socket_world(4);
      std::vector<std::thread> ts;
      for (int r = 0; r < 4; ++r) ts.emplace_back([&, r] { body(*world[static_cast<std::size_t>(r)]); });
      for (auto& t : ts) t.join();
    };
    run([&](Communicator& comm) {
      Context ctx(comm, cfg);
      std::vector<double> v(500, comm.rank());
      std::vector<RegionBinding> regions{bind_array(0, std::span<double>(v))};
      ctx.store(regions, 0, 3, CheckpointKind::Full);
      ctx.shutdown();
    });
    simulate_node_loss(Layout{dir.path()}, 0);
    simulate_node_loss(Layout{dir.path()}, 1);
    std::atomic<int> restored{0}, failed{0};
    run([&](Communicator& comm) {
      Context ctx(comm, cfg);
      std::vector<double> v(500, -1);
      std::vector<RegionBinding> regions{bind_array(0, std::span<double>(v))};
      try {
        if (ctx.load(regions).restored() && v == std::vector<double>(500, comm.rank())) ++restored;
      } catch (const RecoveryFailed&) {
        ++failed;
      }
      ctx.shutdown();
    });
    if (global) c.expect(restored == 4, "global cascade did not restore every rank");
    else c.expect(failed == 4, "double xor loss without a global copy did not fail");
  }
}

void diff_correctness(Check& c) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t bs = 1 + rng() % 600;
    Bytes current = testutil::random_bytes(rng, rng() % 20000);
    const Snapshot base{1, current};
    auto table = digest_blocks(current, bs);
    std::vector<DiffArtifact> chain;
    const int steps = 1 + static_cast<int>(rng() % 6);
    for (int s = 0; s < steps; ++s) {
      // Mutate a few bytes, sometimes resize.
      for (auto k = rng() % 12; k > 0 && !current.empty(); --k) current[rng() % current.size()] ^= std::byte{0x5A};
      if (rng() % 4 == 0) current.resize(rng() % 20000, std::byte{7});
      auto d = diff(table, current, s == 0 ? 1 : 1 + static_cast<std::uint64_t>(s));
      d.epoch = 2 + static_cast<std::uint64_t>(s);
      const auto blocks = d.dirty.size();
      const bool has_short = !d.dirty.empty() && d.dirty.back().bytes.size() < bs;
      const auto expected = blocks * bs - (has_short ? bs - d.dirty.back().bytes.size() : 0);
      c.expect(d.data_bytes() == expected, "byte accounting in trial " + std::to_string(trial));
      const auto round = decode_diff(encode_diff(d));
      c.expect(round.dirty == d.dirty, "diff encoding in trial " + std::to_string(trial));
      chain.push_back(d);
      table = digest_blocks(current, bs);
    }
    c.expect(reconstruct(base, chain) == current, "reconstruction in trial " + std::to_string(trial));
  }
}

void frontend_goldens(Check& c) {
  const auto dir = testutil::source_path("tests/golden");
  for (const auto& [file, dialect] : {std::pair{"snippets.c", Dialect::C}, std::pair{"snippets.f90", Dialect::Fortran}}) {
    auto render = [&, file = file, dialect = dialect] {
      std::string got;
      for (const auto& hit : scan_directives(read_text_file(dir / file), dialect))
        got += std::to_string(hit.line) + ": " + print_directive(parse_directive(hit.text, dialect), dialect) + "\n";
      return got;
    };
    const auto got = render();
    c.expect(got == read_text_file(dir / (std::string(file) + ".expected")), std::string(file) + " golden differs");
    c.expect(got == render(), std::string(file) + " not byte-stable");
  }
  const auto iter = parse_directive("chk store({data[i], i=0;4}) id(1) level(1)", Dialect::C);
  const auto flat = parse_directive("chk store(data[0], data[1], data[2], data[3]) id(1) level(1)", Dialect::C);
  c.expect(expand_self_iterative(iter.data_exprs.at(0), {}) == flat.data_exprs, "self-iterative expansion");
  const auto st = parse_symbol_file(read_text_file(dir / "self_iterative.sym"));
  c.expect(lower_directive(iter, st) == lower_directive(flat, st), "self-iterative lowering");
  for (const auto& [text, clause] : {std::pair{"chk store(a) level(1)", "id"}, std::pair{"chk store(a) id(4)", "level"}}) {
    bool raised = false;
    try {
      parse_directive(text, Dialect::C);
    } catch (const MissingMandatoryClause& e) {
      raised = e.clause() == clause;
    }
    c.expect(raised, std::string("no MissingMandatoryClause for ") + clause);
  }
  const auto sym = parse_symbol_file(read_text_file(dir / "nbody_kernel.sym"));
  const auto source = read_text_file(dir / "nbody_kernel.c");
  const auto out = translate_unit(source, Dialect::C, sym);
  c.expect(out == read_text_file(dir / "nbody_kernel.expected.c"), "nbody kernel lowering golden differs");
  c.expect(out == translate_unit(source, Dialect::C, sym), "nbody kernel lowering not byte-stable");
}

void container_dump(Check& c) {
  std::mt19937_64 rng(3);
  static const TypeCode types[] = {TypeCode::I8, TypeCode::I32, TypeCode::I64, TypeCode::F32, TypeCode::F64, TypeCode::Byte};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Dataset> ds;
    for (std::size_t i = 0, n = rng() % 10; i < n; ++i) {
      Dataset d;
      d.name = default_dataset_name(i);
      d.type = types[rng() % std::size(types)];
      for (auto k = rng() % 3 + 1; k > 0; --k) d.dims.push_back(rng() % 9);
      d.data = testutil::random_bytes(rng, d.element_count() * type_width(d.type));
      ds.push_back(std::move(d));
    }
    c.expect(read_container(encode_container(ds)) == ds, "round trip in trial " + std::to_string(trial));
  }
  const std::int32_t one = 1;
  const auto text = dump_text(encode_container({make_dataset<std::int32_t>("Dataset_0", std::span(&one, 1))}));
  // Expected Dataset_0 block under the documented whitespace policy.
  c.expect(text.find("   DATASET \"Dataset_0\" {\n"
                     "      DATATYPE  H5T_STD_I32LE\n"
                     "      DATASPACE  SIMPLE { ( 1 ) / ( 1 ) }\n"
                     "      DATA {\n"
                     "      (0): 1\n"
                     "      }\n"
                     "   }\n") != std::string::npos,
           "Dataset_0 block differs:\n" + text);
}

// Iterations that finished while a delayed scheme write was in flight.
int iterations_inside_delay(bool agent) {
  TempDir dir;
  auto sink = std::make_shared<DelayedSink>(std::make_shared<FsSink>(), std::chrono::milliseconds(500));
  auto world = make_socket_world(1);
  Config cfg;
  cfg.root = dir.path();
  cfg.agent = agent;
  cfg.sink = sink;
  Context ctx(*world[0], cfg);
  std::int64_t t = 0;
  std::vector<double> state(4096, 1.0);
  std::vector<RegionBinding> regions{bind_scalar(0, t), bind_array(1, std::span<double>(state))};
  std::vector<Clock::time_point> finished;
  for (; t < 80; ++t) {
    if (t % 40 == 0) ctx.store(regions, t, 4, CheckpointKind::Full);
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    state[static_cast<std::size_t>(t)] += 1;
    finished.push_back(Clock::now());
  }
  ctx.shutdown();
  int inside = 0;
  for (const auto& w : sink->windows())
    for (const auto& f : finished) inside += f > w.start && f < w.end;
  return inside;
}

void flush_overlap(Check& c) {
  const int with_agent = iterations_inside_delay(true);
  const int without = iterations_inside_delay(false);
  std::printf("  agent=on iterations inside delay: %d, agent=off: %d\n", with_agent, without);
  c.expect(with_agent >= 1, "no iteration overlapped the delayed flush");
  c.expect(without == 0, "iterations ran while a blocking store was in flight");
}

void overhead(Check& c) {
  TempDir dir;
  WorldConfig w;
  w.ranks = 1;
  w.app = "heat2d";
  w.iterations = 200;
  w.shape.heat_rows = 128;
  w.shape.heat_cols = 128;
  w.root = dir.path();
  w.ckpt_every = 0;
  const auto base = run_world(w);
  w.ckpt_every = 0.1;
  const auto with = run_world(w);
  const double ratio = overhead_report(base, with);
  std::printf("  heat2d 1 rank: base %.4fs, checkpointed %.4fs, ratio %.4f\n", base.wall_time, with.wall_time, ratio);
  c.expect(std::isfinite(ratio) && ratio > 0, "ratio not finite");
  c.expect(base.final_digest == with.final_digest, "checkpointing changed the result");
}

}  // namespace

int main() {
  report(1, "differential cost model", cost_model);
  report(2, "crash-recovery equivalence", crash_equivalence);
  report(3, "coordinated-commit safety under kill points", commit_safety);
  report(4, "scheme recovery", scheme_recovery);
  report(5, "diff reconstruction and byte accounting", diff_correctness);
  report(6, "frontend and translator goldens", frontend_goldens);
  report(7, "container round trip and dump", container_dump);
  report(8, "flush overlap with the background agent", flush_overlap);
  report(9, "checkpoint overhead ratio", overhead);
  return failures ? 1 : 0;
}
