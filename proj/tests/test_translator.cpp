#include <gtest/gtest.h>

#include <random>
#include <set>

#include "openchk/translator.hpp"
#include "test_util.hpp"

using namespace openchk;

namespace {

SymbolTable symbols() {
  return parse_symbol_file(
      "# test symbols\n"
      "const size=8\n"
      "const n=3\n"
      "scalar=4\n"
      "array=8:8\n"
      "array2=4:10\n"
      "2dArray=8:5,6\n"
      "data=8:4\n");
}

CallPlan lower(const std::string& text, const SymbolTable& st, Dialect d = Dialect::C) {
  return lower_directive(parse_directive(text, d), st);
}

}  // namespace

TEST(SymbolFile, ParsesEntriesAndConstants) {
  const auto st = symbols();
  ASSERT_NE(st.find("2dArray"), nullptr);
  EXPECT_EQ(st.find("2dArray")->extents, (std::vector<std::uint64_t>{5, 6}));
  EXPECT_TRUE(st.find("scalar")->scalar());
  EXPECT_EQ(st.lookup()("size"), 8);
  EXPECT_THROW(parse_symbol_file("a=0\n"), ConfigError);
  EXPECT_THROW(parse_symbol_file("a=4:0\n"), ConfigError);
  EXPECT_THROW(parse_symbol_file("a\n"), ConfigError);
  EXPECT_THROW(parse_symbol_file("const k=x\n"), ConfigError);
}

TEST(Resolve, WholeAndSectionedRegions) {
  const auto st = symbols();
  const auto plan = lower("chk load(scalar, array[0;size], array2[2:4], 2dArray[0;n][2:4])", st);
  ASSERT_EQ(plan.calls.size(), 6u);
  auto reg = [&](std::size_t i) { return std::get<call::Register>(plan.calls[i]).region; };
  EXPECT_EQ(reg(1).spans, (std::vector<ElementSpan>{{0, 1}}));
  EXPECT_EQ(reg(1).total_bytes, 4u);
  EXPECT_EQ(reg(2).spans, (std::vector<ElementSpan>{{0, 8}}));
  EXPECT_EQ(reg(3).spans, (std::vector<ElementSpan>{{2, 3}}));
  EXPECT_EQ(reg(3).total_bytes, 12u);
  // Rows 0..2, columns 2..4 of a 5x6 array.
  EXPECT_EQ(reg(4).spans, (std::vector<ElementSpan>{{2, 3}, {8, 3}, {14, 3}}));
  EXPECT_EQ(reg(4).total_bytes, 72u);
  EXPECT_EQ(reg(4).ordinal, 3u);
}

TEST(Resolve, FullRowsCoalesce) {
  const auto st = symbols();
  const auto plan = lower("chk load(2dArray[1:3][0:5])", st);
  EXPECT_EQ(std::get<call::Register>(plan.calls[1]).region.spans, (std::vector<ElementSpan>{{6, 18}}));
}

TEST(Resolve, Errors) {
  const auto st = symbols();
  EXPECT_THROW(lower("chk load(nothing)", st), UnknownSymbol);
  EXPECT_THROW(lower("chk load(array[4:2])", st), EmptySection);
  EXPECT_THROW(lower("chk load(array[0;0])", st), EmptySection);
  try {
    lower("chk load(2dArray[0:4][0:6])", st);
    FAIL();
  } catch (const OutOfBounds& e) {
    EXPECT_EQ(e.dimension(), 1u);
  }
  EXPECT_THROW(lower("chk load(array[0][1])", st), OutOfBounds);
  EXPECT_THROW(lower("chk load(array[0:unknown])", st), ExprError);
  EXPECT_THROW(lower("chk load(array, array[1])", st), DuplicateRegion);
  EXPECT_NO_THROW(lower("chk load(array[0:3], array[4:7])", st));
  EXPECT_THROW(lower("chk store(array) id(a + b) level(1)", st), ClauseTypeError);
}

TEST(Lower, StorePlanWithGuardAndRuntimeValues) {
  const auto st = symbols();
  const auto plan = lower("chk store(array) id(t) level(n+1) kind(CHK_DIFF) if(t % 10 == 0)", st);
  ASSERT_TRUE(plan.guard);
  EXPECT_EQ(*plan.guard, "t % 10 == 0");
  const auto& begin = std::get<call::BeginStore>(plan.calls.front());
  EXPECT_EQ(begin.id, ClauseValue(std::string("t")));
  EXPECT_EQ(begin.level, ClauseValue(std::int64_t{4}));
  EXPECT_EQ(begin.kind, CheckpointKind::Diff);
  EXPECT_TRUE(std::holds_alternative<call::CommitStore>(plan.calls.back()));
}

TEST(Lower, SelfIterativeEqualsExplicitList) {
  const auto st = symbols();
  EXPECT_EQ(lower("chk store({data[i], i=0;4}) id(1) level(1)", st),
            lower("chk store(data[0], data[1], data[2], data[3]) id(1) level(1)", st));
}

TEST(Lower, FortranMirrorsC) {
  const auto st = symbols();
  const auto c = lower("chk load(2dArray[0;n][2:4])", st, Dialect::C);
  const auto f = lower("chk load(2dArray(0:n-1, 2:4))", st, Dialect::Fortran);
  EXPECT_EQ(c, f);
}

TEST(Render, CAndFortranStatements) {
  const auto st = symbols();
  const auto plan = lower("chk store(array2[2:4]) id(0) level(1) if(cond)", st);
  EXPECT_EQ(render_plan(plan, Dialect::C),
            (std::vector<std::string>{"if (cond) {", "  chk_begin_store(0, 1, CHK_FULL);",
                                      "  chk_register(0, \"array2\", &array2, 4, \"2+3\", 12);",
                                      "  chk_commit_store();", "}"}));
  EXPECT_EQ(render_plan(plan, Dialect::Fortran),
            (std::vector<std::string>{"if (cond) then", "  call chk_begin_store(0, 1, CHK_FULL)",
                                      "  call chk_register(0, \"array2\", array2, 4, \"2+3\", 12)",
                                      "  call chk_commit_store()", "end if"}));
  EXPECT_EQ(render_plan(lower("chk init comm(world)", st), Dialect::C),
            (std::vector<std::string>{"chk_ctx_init(world);"}));
}

TEST(TranslateUnit, NoDirectivesIsByteIdentical) {
  const std::string src = "int main() {\r\n  return 0;\r\n}\n// trailing";
  EXPECT_EQ(translate_unit(src, Dialect::C, {}), src);
}

TEST(TranslateUnit, PreservesSurroundingLinesAndIndent) {
  const auto st = symbols();
  const std::string src = "a();\n    #pragma chk load(scalar)\nb();\n";
  EXPECT_EQ(translate_unit(src, Dialect::C, st),
            "a();\n    chk_begin_load();\n    chk_register(0, \"scalar\", &scalar, 4, \"0+1\", 4);\n"
            "    chk_commit_load();\nb();\n");
}

TEST(TranslateUnit, ErrorsCarryTheDirectiveLine) {
  const auto st = symbols();
  try {
    translate_unit("x\ny\n#pragma chk store(scalar) level(1)\n", Dialect::C, st);
    FAIL();
  } catch (const TranslateError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("'id'"), std::string::npos);
  }
}

TEST(Golden, NbodyKernelLowering) {
  const auto dir = testutil::source_path("tests/golden");
  const auto st = parse_symbol_file(read_text_file(dir / "nbody_kernel.sym"));
  const auto out = translate_unit(read_text_file(dir / "nbody_kernel.c"), Dialect::C, st);
  EXPECT_EQ(out, read_text_file(dir / "nbody_kernel.expected.c"));
  EXPECT_EQ(out, translate_unit(read_text_file(dir / "nbody_kernel.c"), Dialect::C, st));
}

TEST(Golden, FortranLowering) {
  const auto dir = testutil::source_path("tests/golden");
  const auto st = parse_symbol_file(read_text_file(dir / "heat.sym"));
  EXPECT_EQ(translate_unit(read_text_file(dir / "heat.f90"), Dialect::Fortran, st),
            read_text_file(dir / "heat.expected.f90"));
}

// ---- property: spans cover exactly the selected elements --------------------

TEST(Property, SpanVolumeMatchesBruteForce) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto dims = 1 + rng() % 3;
    std::vector<std::uint64_t> ext(dims);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> bounds(dims);
    for (std::size_t d = 0; d < dims; ++d) {
      ext[d] = 1 + rng() % 6;
      const auto a = rng() % ext[d], b = rng() % ext[d];
      bounds[d] = {std::min(a, b), std::max(a, b)};
    }
    const auto rd = describe_region("x", 0, 8, ext, bounds);

    std::set<std::uint64_t> expected;
    std::vector<std::uint64_t> idx(dims);
    std::uint64_t total = 1;
    for (auto e : ext) total *= e;
    for (std::uint64_t lin = 0; lin < total; ++lin) {
      auto rem = lin;
      bool inside = true;
      for (std::size_t d = dims; d-- > 0;) {
        const auto i = rem % ext[d];
        rem /= ext[d];
        inside = inside && i >= bounds[d].first && i <= bounds[d].second;
      }
      if (inside) expected.insert(lin);
    }
    std::set<std::uint64_t> got;
    for (std::size_t s = 0; s < rd.spans.size(); ++s) {
      if (s) {
        ASSERT_LT(rd.spans[s - 1].offset + rd.spans[s - 1].count, rd.spans[s].offset);  // sorted, coalesced
      }
      for (std::uint64_t k = 0; k < rd.spans[s].count; ++k) got.insert(rd.spans[s].offset + k);
    }
    ASSERT_EQ(got, expected);
    ASSERT_EQ(rd.total_bytes, expected.size() * 8);
  }
}
