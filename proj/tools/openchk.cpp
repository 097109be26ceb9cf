// openchk command line: translate annotated sources, run the demo world,
// dump checkpoint payloads and evaluate the differential cost model.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "openchk/openchk.hpp"

using namespace openchk;

namespace {

int cmd_translate(const std::string& dialect, const std::string& symbols, const std::string& input,
                  const std::string& output) {
  const auto d = dialect == "fortran" ? Dialect::Fortran : Dialect::C;
  const auto symtab = parse_symbol_file(read_text_file(symbols));
  const auto text = translate_unit(read_text_file(input), d, symtab, input);
  if (output.empty() || output == "-") {
    std::cout << text;
  } else {
    std::ofstream out(output, std::ios::binary);
    out << text;
    if (!out) throw StorageError("cannot write " + output);
  }
  return 0;
}

int cmd_dump(const std::string& file, const DumpOptions& opt) {
  const auto data = read_file(file);
  if (is_diff(data)) {
    const auto d = decode_diff(data);
    std::cout << "kind=diff\nbase_epoch=" << d.base_epoch << "\nblock_size=" << d.block_size
              << "\ndirty_blocks=" << d.dirty.size() << "\nlength=" << d.new_length << "\n";
    return 0;
  }
  std::cout << dump_text(data, opt);
  return 0;
}

int cmd_dcp_model(double nd, double w, double h) {
  const auto delta = dcp_overhead({nd, w, h});
  // Change per 10 points of dirty ratio, measured downward from nd when possible.
  const double lo = nd >= 0.1 ? nd - 0.1 : nd, hi = nd >= 0.1 ? nd : nd + 0.1;
  const auto slope = dcp_overhead({hi, w, h}) - dcp_overhead({lo, w, h});
  std::cout << "nd=" << nd << "\nw=" << w << "\nh=" << h << "\ndelta=" << delta
            << "\nthreshold=" << dcp_threshold(w, h) << "\nslope_per_10pct=" << slope
            << "\nverdict=" << (delta > 0 ? "full" : delta < 0 ? "diff" : "even") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"openchk checkpoint/restart toolkit"};
  app.require_subcommand(1);

  std::string dialect = "c", symbols, input, output;
  auto* translate = app.add_subcommand("translate", "Replace checkpoint directives with runtime calls");
  translate->add_option("--dialect", dialect, "Source dialect")->check(CLI::IsMember({"c", "fortran"}));
  translate->add_option("--symbols", symbols, "Symbol file (name=elem_size[:extents])")->required();
  translate->add_option("input", input, "Annotated source")->required();
  translate->add_option("-o,--output", output, "Output file ('-' for stdout)");

  WorldConfig world;
  std::string fault_at = "none", kind = "full", root;
  auto* run = app.add_subcommand("run", "Run a demo application over a simulated world");
  run->add_option("--app", world.app)->check(CLI::IsMember({"heat2d", "nbody"}));
  run->add_option("--ranks", world.ranks)->check(CLI::PositiveNumber);
  run->add_option("--iters", world.iterations)->check(CLI::PositiveNumber);
  run->add_option("--ckpt-every", world.ckpt_every, "Fraction of iterations between checkpoints (0: none)");
  run->add_option("--fault-at", fault_at, "Progress fraction at which every rank dies, or 'none'");
  run->add_option("--level", world.level);
  run->add_option("--kind", kind)->check(CLI::IsMember({"full", "diff"}));
  run->add_option("--profile", world.profile);
  run->add_option("--seed", world.seed);
  run->add_option("--root", root, "Checkpoint root directory");
  run->add_option("--block-size", world.block_size);
  run->add_flag("--agent", world.agent, "Hand scheme work to the background flush agent");
  run->add_flag("--flush-global", world.flush_global, "Also copy every checkpoint to global storage");
  run->add_option("--max-retries", world.max_retries);

  std::string dump_file;
  DumpOptions dump_opt;
  auto* dump = app.add_subcommand("dump", "Render a checkpoint payload as text");
  dump->add_option("file", dump_file)->required();
  dump->add_option("--head", dump_opt.head_elements, "Elements shown before elision");
  dump->add_option("--tail", dump_opt.tail_elements, "Elements shown after elision");

  double nd = 0, w = 0, h = 0;
  auto* model = app.add_subcommand("dcp-model", "Differential checkpoint overhead versus a full checkpoint");
  model->set_help_flag("--help", "Print this help message and exit");
  model->add_option("--nd", nd, "Dirty block ratio")->required();
  model->add_option("--w", w, "Full checkpoint write time (s)")->required();
  model->add_option("--h", h, "Hashing cost of one differential pass (s)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*translate) return cmd_translate(dialect, symbols, input, output);
    if (*dump) return cmd_dump(dump_file, dump_opt);
    if (*model) return cmd_dcp_model(nd, w, h);
    if (*run) {
      if (fault_at != "none") world.fault_at = std::stod(fault_at);
      world.kind = kind == "diff" ? CheckpointKind::Diff : CheckpointKind::Full;
      world.root = root;
      if (!root.empty()) fs::create_directories(root);
      const auto report = run_world(world);
      std::cout << format_report(report);
      return report.completed ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "openchk: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
