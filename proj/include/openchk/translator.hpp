#pragma once

// Source-to-source translation: directives are lowered to call plans against
// the runtime's call-level interface and rendered back into the host text.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "openchk/error.hpp"
#include "openchk/expr.hpp"
#include "openchk/pragma.hpp"

namespace openchk {

struct SymbolInfo {
  std::uint64_t element_size = 0;
  std::vector<std::uint64_t> extents;  // empty for scalars
  bool scalar() const { return extents.empty(); }
};

struct SymbolTable {
  std::map<std::string, SymbolInfo, std::less<>> entries;
  std::map<std::string, std::int64_t, std::less<>> constants;

  const SymbolInfo* find(std::string_view name) const {
    auto it = entries.find(name);
    return it == entries.end() ? nullptr : &it->second;
  }

  IntLookup lookup() const {
    return [this](std::string_view name) -> std::optional<std::int64_t> {
      auto it = constants.find(name);
      if (it == constants.end()) return std::nullopt;
      return it->second;
    };
  }
};

// Symbol file: one entry per line.
//   name=elem_bytes                  scalar
//   name=elem_bytes:ext0,ext1,...    array, outermost extent first
//   const name=value                 integer constant for bounds and clauses
// Blank lines and lines starting with '#' are ignored.
inline SymbolTable parse_symbol_file(std::string_view text) {
  SymbolTable table;
  auto to_u64 = [](std::string_view s, std::size_t line) {
    s = trim(s);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw ConfigError("symbol file line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
    return v;
  };
  std::size_t lineno = 0;
  for (auto line : detail::split_lines(text)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const bool constant = line.substr(0, 6) == "const " || line.substr(0, 6) == "const\t";
    if (constant) line = trim(line.substr(6));
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("symbol file line " + std::to_string(lineno) + ": missing '='");
    const auto name = std::string(trim(line.substr(0, eq)));
    if (name.empty()) throw ConfigError("symbol file line " + std::to_string(lineno) + ": empty name");
    const auto value = trim(line.substr(eq + 1));
    if (constant) {
      if (!is_integer_literal(value))
        throw ConfigError("symbol file line " + std::to_string(lineno) + ": constant must be an integer");
      table.constants[name] = evaluate_int(value);
      continue;
    }
    SymbolInfo info;
    const auto colon = value.find(':');
    info.element_size = to_u64(value.substr(0, colon), lineno);
    if (info.element_size == 0)
      throw ConfigError("symbol file line " + std::to_string(lineno) + ": zero element size");
    if (colon != std::string_view::npos) {
      for (auto ext : detail::split_top_level(value.substr(colon + 1), ',')) {
        info.extents.push_back(to_u64(ext, lineno));
        if (info.extents.back() == 0)
          throw ConfigError("symbol file line " + std::to_string(lineno) + ": zero extent");
      }
    }
    table.entries[name] = std::move(info);
  }
  return table;
}

// A contiguous run of elements in the row-major linearization.
struct ElementSpan {
  std::uint64_t offset = 0;
  std::uint64_t count = 0;
  friend bool operator==(const ElementSpan&, const ElementSpan&) = default;
};

struct RegionDescriptor {
  std::uint64_t ordinal = 0;
  std::string base;
  std::uint64_t element_size = 0;
  std::vector<ElementSpan> spans;  // sorted, non-overlapping
  std::uint64_t total_bytes = 0;

  friend bool operator==(const RegionDescriptor&, const RegionDescriptor&) = default;
};

// Builds a descriptor from already-evaluated per-dimension [lo, hi] bounds.
inline RegionDescriptor describe_region(std::string base, std::uint64_t ordinal, std::uint64_t element_size,
                                        const std::vector<std::uint64_t>& extents,
                                        const std::vector<std::pair<std::uint64_t, std::uint64_t>>& bounds) {
  RegionDescriptor rd;
  rd.ordinal = ordinal;
  rd.base = std::move(base);
  rd.element_size = element_size;
  const auto dims = extents.size();
  if (dims == 0) {
    rd.spans.push_back({0, 1});
  } else {
    // Innermost dimension that is not fully covered; everything inside it is one run.
    std::size_t k = dims - 1;
    auto full = [&](std::size_t d) { return bounds[d].first == 0 && bounds[d].second + 1 == extents[d]; };
    while (k > 0 && full(k)) --k;
    std::vector<std::uint64_t> stride(dims, 1);
    for (std::size_t d = dims - 1; d > 0; --d) stride[d - 1] = stride[d] * extents[d];
    const auto run = (bounds[k].second - bounds[k].first + 1) * stride[k];
    std::vector<std::uint64_t> idx(k);
    for (std::size_t d = 0; d < k; ++d) idx[d] = bounds[d].first;
    for (bool more = true; more;) {
      std::uint64_t offset = bounds[k].first * stride[k];
      for (std::size_t d = 0; d < k; ++d) offset += idx[d] * stride[d];
      if (!rd.spans.empty() && rd.spans.back().offset + rd.spans.back().count == offset)
        rd.spans.back().count += run;
      else
        rd.spans.push_back({offset, run});
      // Odometer over the outer dimensions, innermost fastest.
      more = false;
      for (std::size_t d = k; d > 0 && !more; --d) {
        if (++idx[d - 1] <= bounds[d - 1].second) more = true;
        else idx[d - 1] = bounds[d - 1].first;
      }
    }
  }
  std::uint64_t elements = 0;
  for (const auto& s : rd.spans) elements += s.count;
  rd.total_bytes = elements * element_size;
  return rd;
}

inline RegionDescriptor resolve_region(const DataExpr& expr, const SymbolTable& symtab, std::uint64_t ordinal) {
  if (expr.iterator) throw ExpansionError("self-iterative expression must be expanded before resolution");
  const auto* sym = symtab.find(expr.base);
  if (!sym) throw UnknownSymbol("unknown symbol '" + expr.base + "'");
  if (expr.sections.empty()) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> bounds;
    for (auto e : sym->extents) bounds.push_back({0, e - 1});
    return describe_region(expr.base, ordinal, sym->element_size, sym->extents, bounds);
  }
  if (expr.sections.size() != sym->extents.size())
    throw OutOfBounds("'" + expr.base + "' has " + std::to_string(sym->extents.size()) + " dimensions but " +
                          std::to_string(expr.sections.size()) + " sections",
                      std::min(expr.sections.size(), sym->extents.size()));
  const auto lookup = symtab.lookup();
  std::vector<std::pair<std::uint64_t, std::uint64_t>> bounds;
  for (std::size_t d = 0; d < expr.sections.size(); ++d) {
    auto [lo, hi] = std::visit(
        [&](const auto& spec) -> std::pair<std::int64_t, std::int64_t> {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, Range>)
            return {evaluate_int(spec.lower, lookup), evaluate_int(spec.upper, lookup)};
          else if constexpr (std::is_same_v<T, Count>) {
            const auto s = evaluate_int(spec.start, lookup);
            return {s, s + evaluate_int(spec.count, lookup) - 1};
          } else {
            const auto p = evaluate_int(spec.position, lookup);
            return {p, p};
          }
        },
        expr.sections[d]);
    if (hi < lo) throw EmptySection("empty section on dimension " + std::to_string(d) + " of '" + expr.base + "'");
    if (lo < 0 || static_cast<std::uint64_t>(hi) >= sym->extents[d])
      throw OutOfBounds("section [" + std::to_string(lo) + ", " + std::to_string(hi) + "] of '" + expr.base +
                            "' exceeds extent " + std::to_string(sym->extents[d]),
                        d);
    bounds.push_back({static_cast<std::uint64_t>(lo), static_cast<std::uint64_t>(hi)});
  }
  return describe_region(expr.base, ordinal, sym->element_size, sym->extents, bounds);
}

// ---------------------------------------------------------------------------
// Call plans

// An id or level argument: known at translation time, or a runtime identifier.
using ClauseValue = std::variant<std::int64_t, std::string>;

namespace call {
struct CtxInit {
  std::string comm;
  friend bool operator==(const CtxInit&, const CtxInit&) = default;
};
struct CtxShutdown {
  friend bool operator==(const CtxShutdown&, const CtxShutdown&) = default;
};
struct BeginStore {
  ClauseValue id;
  ClauseValue level;
  CheckpointKind kind = CheckpointKind::Full;
  friend bool operator==(const BeginStore&, const BeginStore&) = default;
};
struct BeginLoad {
  friend bool operator==(const BeginLoad&, const BeginLoad&) = default;
};
struct Register {
  RegionDescriptor region;
  friend bool operator==(const Register&, const Register&) = default;
};
struct CommitStore {
  friend bool operator==(const CommitStore&, const CommitStore&) = default;
};
struct CommitLoad {
  friend bool operator==(const CommitLoad&, const CommitLoad&) = default;
};
}  // namespace call

using Call = std::variant<call::CtxInit, call::CtxShutdown, call::BeginStore, call::BeginLoad, call::Register,
                          call::CommitStore, call::CommitLoad>;

struct CallPlan {
  std::optional<std::string> guard;
  std::vector<Call> calls;
  friend bool operator==(const CallPlan&, const CallPlan&) = default;
};

namespace detail {

inline ClauseValue clause_value(const Clause& c, const SymbolTable& symtab) {
  if (auto v = try_evaluate_int(c.payload, symtab.lookup())) return *v;
  if (is_plain_identifier(c.payload)) return std::string(trim(c.payload));
  throw ClauseTypeError("clause " + std::string(to_string(c.tag)) + "(" + c.payload +
                        ") is neither an integer expression nor a plain identifier");
}

inline bool spans_overlap(const RegionDescriptor& a, const RegionDescriptor& b) {
  for (const auto& x : a.spans)
    for (const auto& y : b.spans)
      if (x.offset < y.offset + y.count && y.offset < x.offset + x.count) return true;
  return false;
}

}  // namespace detail

inline CallPlan lower_directive(const DirectiveAst& ast, const SymbolTable& symtab) {
  CallPlan plan;
  switch (ast.kind) {
    case DirectiveKind::Init:
      plan.calls.push_back(call::CtxInit{ast.find(ClauseTag::Comm)->payload});
      return plan;
    case DirectiveKind::Shutdown:
      plan.calls.push_back(call::CtxShutdown{});
      return plan;
    case DirectiveKind::Load:
    case DirectiveKind::Store: break;
  }
  if (const auto* g = ast.find(ClauseTag::If)) plan.guard = g->payload;
  if (ast.kind == DirectiveKind::Store) {
    plan.calls.push_back(call::BeginStore{detail::clause_value(*ast.find(ClauseTag::Id), symtab),
                                          detail::clause_value(*ast.find(ClauseTag::Level), symtab),
                                          ast.checkpoint_kind()});
  } else {
    plan.calls.push_back(call::BeginLoad{});
  }
  std::vector<RegionDescriptor> regions;
  for (const auto& expr : ast.data_exprs) {
    for (const auto& e : expand_self_iterative(expr, symtab.lookup())) {
      auto region = resolve_region(e, symtab, regions.size());
      for (const auto& prev : regions)
        if (prev.base == region.base && detail::spans_overlap(prev, region))
          throw DuplicateRegion("'" + region.base + "' is listed more than once (overlapping sections)");
      regions.push_back(std::move(region));
    }
  }
  for (auto& r : regions) plan.calls.push_back(call::Register{std::move(r)});
  if (ast.kind == DirectiveKind::Store) plan.calls.push_back(call::CommitStore{});
  else plan.calls.push_back(call::CommitLoad{});
  return plan;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string format_spans(const std::vector<ElementSpan>& spans) {
  std::string out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(spans[i].offset) + "+" + std::to_string(spans[i].count);
  }
  return out;
}

inline std::vector<std::string> render_plan(const CallPlan& plan, Dialect dialect) {
  const bool fortran = dialect == Dialect::Fortran;
  auto value = [](const ClauseValue& v) {
    return std::holds_alternative<std::int64_t>(v) ? std::to_string(std::get<std::int64_t>(v))
                                                   : std::get<std::string>(v);
  };
  auto stmt = [&](const std::string& fn, const std::string& args) {
    return fortran ? "call " + fn + "(" + args + ")" : fn + "(" + args + ");";
  };
  std::vector<std::string> body;
  for (const auto& c : plan.calls) {
    body.push_back(std::visit(
        [&](const auto& op) -> std::string {
          using T = std::decay_t<decltype(op)>;
          if constexpr (std::is_same_v<T, call::CtxInit>) return stmt("chk_ctx_init", op.comm);
          else if constexpr (std::is_same_v<T, call::CtxShutdown>) return stmt("chk_ctx_shutdown", "");
          else if constexpr (std::is_same_v<T, call::BeginStore>)
            return stmt("chk_begin_store",
                        value(op.id) + ", " + value(op.level) + ", " + std::string(to_string(op.kind)));
          else if constexpr (std::is_same_v<T, call::BeginLoad>) return stmt("chk_begin_load", "");
          else if constexpr (std::is_same_v<T, call::Register>) {
            const auto& r = op.region;
            const auto addr = fortran ? r.base : "&" + r.base;
            return stmt("chk_register", std::to_string(r.ordinal) + ", \"" + r.base + "\", " + addr + ", " +
                                            std::to_string(r.element_size) + ", \"" + format_spans(r.spans) +
                                            "\", " + std::to_string(r.total_bytes));
          } else if constexpr (std::is_same_v<T, call::CommitStore>) return stmt("chk_commit_store", "");
          else return stmt("chk_commit_load", "");
        },
        c));
  }
  if (!plan.guard) return body;
  std::vector<std::string> out;
  out.push_back(fortran ? "if (" + *plan.guard + ") then" : "if (" + *plan.guard + ") {");
  for (auto& line : body) out.push_back("  " + line);
  out.push_back(fortran ? "end if" : "}");
  return out;
}

// Replaces every directive in `source` with its rendered call plan. Lines that
// hold no directive are copied byte for byte.
inline std::string translate_unit(std::string_view source, Dialect dialect, const SymbolTable& symtab,
                                  const std::string& file_name = {}) {
  std::vector<ScannedDirective> hits;
  try {
    hits = scan_directives(source, dialect);
  } catch (const ScanError& e) {
    throw TranslateError(e.what(), e.line());
  }
  // Physical lines including their terminators.
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < source.size();) {
    auto end = source.find('\n', start);
    end = end == std::string_view::npos ? source.size() : end + 1;
    lines.push_back(source.substr(start, end - start));
    start = end;
  }
  std::string out;
  out.reserve(source.size());
  std::size_t next = 0;
  for (const auto& hit : hits) {
    for (; next + 1 < hit.line; ++next) out += lines[next];
    CallPlan plan;
    try {
      auto ast = parse_directive(hit.text, dialect);
      ast.location = {file_name, hit.line};
      plan = lower_directive(ast, symtab);
    } catch (const Error& e) {
      throw TranslateError(e.what(), hit.line);
    }
    const auto last = lines[hit.last_line - 1];
    std::string_view eol;
    if (!last.empty() && last.back() == '\n')
      eol = last.size() >= 2 && last[last.size() - 2] == '\r' ? last.substr(last.size() - 2) : last.substr(last.size() - 1);
    const auto rendered = render_plan(plan, dialect);
    for (std::size_t i = 0; i < rendered.size(); ++i) {
      out += hit.indent + rendered[i];
      out += i + 1 < rendered.size() ? std::string_view("\n") : eol;
    }
    next = hit.last_line;
  }
  for (; next < lines.size(); ++next) out += lines[next];
  return out;
}

}  // namespace openchk
