// Runs an annotated loop twice over two ranks: the first run stops halfway,
// the second resumes from the last committed checkpoint.
//
//   replay_demo [root]

#include <iostream>
#include <thread>

#include "openchk/openchk.hpp"

using namespace openchk;

namespace {

constexpr std::string_view kSource = R"(int t = 0;
double field[32];
#pragma chk init comm(world)
#pragma chk load (field, t)
for (; t < 20; t++) {
    #pragma chk store (field, t) id(t) level(2) kind(CHK_DIFF) if(t % 4 == 0)
    step(field);
}
#pragma chk shutdown
)";

void run_attempt(const fs::path& root, std::int64_t stop_at) {
  const auto symtab = parse_symbol_file("field=8:32\nt=8\n");
  std::vector<CallPlan> plans;
  for (const auto& d : scan_directives(kSource, Dialect::C))
    plans.push_back(lower_directive(parse_directive(d.text, Dialect::C), symtab));

  auto world = make_socket_world(2);
  std::vector<std::thread> ranks;
  for (int r = 0; r < 2; ++r)
    ranks.emplace_back([&, r] {
      auto& comm = *world[static_cast<std::size_t>(r)];
      std::int64_t t = 0;
      std::vector<double> field(32, 0.0);
      Config cfg;
      cfg.root = root;
      cfg.block_size = 64;
      Replayer rep({{"world", &comm}}, cfg, [&](std::string_view name) -> std::optional<std::int64_t> {
        if (name == "t") return t;
        return std::nullopt;
      });
      rep.bind("field", {std::as_writable_bytes(std::span(field)), TypeCode::F64});
      rep.bind("t", {std::as_writable_bytes(std::span(&t, 1)), TypeCode::I64});
      rep.run(plans[0]);
      const auto loaded = rep.run(plans[1]).load;
      if (r == 0)
        std::cout << (loaded->restored() ? "restored id " + std::to_string(loaded->user_id) : "fresh start") << "\n";
      for (; t < 20; ++t) {
        if (t == stop_at) break;
        const auto res = rep.run(plans[2]);
        if (res.executed && r == 0)
          std::cout << "  t=" << t << " epoch " << res.store->epoch << " " << to_string(res.store->kind)
                    << " dirty " << res.store->dirty_ratio << "\n";
        field[static_cast<std::size_t>(t)] += 1.0 + r;
      }
      rep.run(plans[3]);
      if (r == 0) std::cout << "stopped at t=" << t << "\n";
    });
  for (auto& th : ranks) th.join();
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "openchk_replay_demo";
  fs::remove_all(root);
  fs::create_directories(root);
  std::cout << "attempt 1\n";
  run_attempt(root, 10);
  std::cout << "attempt 2\n";
  run_attempt(root, -1);
  return 0;
}
