#pragma once

// Directive frontend: scanning host sources for `chk` directives and parsing
// them into a validated AST. Both the C (`#pragma chk`) and the free-form
// Fortran (`!$chk`) spellings are accepted.

#include <algorithm>
#include <cctype>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "openchk/error.hpp"
#include "openchk/expr.hpp"

namespace openchk {

enum class Dialect { C, Fortran };

enum class DirectiveKind { Init, Load, Store, Shutdown };

// Order here is the canonical clause order used by the printer.
enum class ClauseTag { Comm, Id, Level, Kind, If };

enum class CheckpointKind { Full, Diff };

inline std::string_view to_string(DirectiveKind k) {
  switch (k) {
    case DirectiveKind::Init: return "init";
    case DirectiveKind::Load: return "load";
    case DirectiveKind::Store: return "store";
    case DirectiveKind::Shutdown: return "shutdown";
  }
  return "?";
}

inline std::string_view to_string(ClauseTag t) {
  switch (t) {
    case ClauseTag::Comm: return "comm";
    case ClauseTag::If: return "if";
    case ClauseTag::Id: return "id";
    case ClauseTag::Level: return "level";
    case ClauseTag::Kind: return "kind";
  }
  return "?";
}

inline std::string_view to_string(CheckpointKind k) {
  return k == CheckpointKind::Full ? "CHK_FULL" : "CHK_DIFF";
}

struct SourceLocation {
  std::string file;
  std::size_t line = 0;
};

struct Clause {
  ClauseTag tag;
  std::string payload;

  friend bool operator==(const Clause&, const Clause&) = default;
};

// `a[l:u]` / `a(l:u)`: inclusive on both ends.
struct Range {
  std::string lower, upper;
  friend bool operator==(const Range&, const Range&) = default;
};

// `a[s;c]`: `count` elements starting at `start`.
struct Count {
  std::string start, count;
  friend bool operator==(const Count&, const Count&) = default;
};

// `a[i]`: a single element, equivalent to Range{i, i}.
struct Index {
  std::string position;
  friend bool operator==(const Index&, const Index&) = default;
};

using SectionSpec = std::variant<Range, Count, Index>;

struct SelfIter {
  std::string var, start, count;
  friend bool operator==(const SelfIter&, const SelfIter&) = default;
};

struct DataExpr {
  std::string base;
  std::vector<SectionSpec> sections;  // outermost dimension first
  std::optional<SelfIter> iterator;
  // Written as an array shaping prefix, `[n] ptr`; sections are then Count{0, n}.
  bool shaped = false;

  friend bool operator==(const DataExpr&, const DataExpr&) = default;
};

struct DirectiveAst {
  DirectiveKind kind = DirectiveKind::Init;
  std::vector<Clause> clauses;  // sorted by tag
  std::vector<DataExpr> data_exprs;
  SourceLocation location;

  const Clause* find(ClauseTag tag) const {
    auto it = std::find_if(clauses.begin(), clauses.end(), [&](const Clause& c) { return c.tag == tag; });
    return it == clauses.end() ? nullptr : &*it;
  }

  CheckpointKind checkpoint_kind() const {
    const auto* k = find(ClauseTag::Kind);
    return (k && k->payload == "CHK_DIFF") ? CheckpointKind::Diff : CheckpointKind::Full;
  }

  // Structural equality; the source location does not participate.
  friend bool operator==(const DirectiveAst& a, const DirectiveAst& b) {
    return a.kind == b.kind && a.clauses == b.clauses && a.data_exprs == b.data_exprs;
  }
};

// ---------------------------------------------------------------------------
// Scanning

struct ScannedDirective {
  std::size_t line = 0;       // first physical line, 1-based
  std::size_t last_line = 0;  // last physical line (after continuations)
  std::string indent;         // leading whitespace of the first line
  std::string text;           // normalized, begins with "chk"
};

namespace detail {

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
         });
}

// Returns the directive body (starting at "chk") if the line opens a directive.
inline std::optional<std::string_view> match_sentinel(std::string_view line, Dialect dialect) {
  auto rest = trim(line);
  auto take_word = [](std::string_view& s) {
    s = trim(s);
    std::size_t n = 0;
    while (n < s.size() && is_ident_char(s[n])) ++n;
    auto w = s.substr(0, n);
    s.remove_prefix(n);
    return w;
  };
  if (dialect == Dialect::C) {
    if (rest.empty() || rest.front() != '#') return std::nullopt;
    rest.remove_prefix(1);
    if (take_word(rest) != "pragma") return std::nullopt;
    rest = trim(rest);
    auto body = rest;
    if (take_word(rest) != "chk") return std::nullopt;
    if (!rest.empty() && !std::isspace(static_cast<unsigned char>(rest.front())) && rest.front() != '(' &&
        rest.front() != '\\')
      return std::nullopt;
    return body;
  }
  if (rest.size() < 5 || !iequals(rest.substr(0, 5), "!$chk")) return std::nullopt;
  if (rest.size() > 5 && is_ident_char(rest[5])) return std::nullopt;
  rest.remove_prefix(2);
  return rest;
}

}  // namespace detail

inline std::vector<ScannedDirective> scan_directives(std::string_view source, Dialect dialect) {
  const auto lines = detail::split_lines(source);
  std::vector<ScannedDirective> hits;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto body = detail::match_sentinel(lines[i], dialect);
    if (!body) continue;
    ScannedDirective hit;
    hit.line = i + 1;
    hit.indent = std::string(lines[i].substr(0, lines[i].find_first_not_of(" \t")));
    const char marker = dialect == Dialect::C ? '\\' : '&';
    std::string text;
    auto piece = trim(*body);
    std::size_t j = i;
    for (;;) {
      const bool continued = !piece.empty() && piece.back() == marker;
      if (continued) piece.remove_suffix(1);
      piece = trim(piece);
      if (!piece.empty()) {
        if (!text.empty()) text.push_back(' ');
        text.append(piece);
      }
      if (!continued) break;
      if (++j >= lines.size()) throw ScanError("unterminated continuation", i + 1);
      piece = trim(lines[j]);
      if (dialect == Dialect::Fortran && !piece.empty() && piece.front() == '&') piece.remove_prefix(1);
    }
    hit.last_line = j + 1;
    hit.text = std::move(text);
    hits.push_back(std::move(hit));
    i = j;
  }
  return hits;
}

// ---------------------------------------------------------------------------
// Data expressions

namespace detail {

inline bool is_open(char c) { return c == '(' || c == '[' || c == '{'; }
inline bool is_close(char c) { return c == ')' || c == ']' || c == '}'; }

// Splits at `sep` occurring at nesting depth zero.
inline std::vector<std::string_view> split_top_level(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (is_open(text[i])) ++depth;
    else if (is_close(text[i])) --depth;
    else if (text[i] == sep && depth == 0) {
      parts.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  parts.push_back(text.substr(start));
  return parts;
}

// Index of the bracket closing the one at `open_pos`, or npos.
inline std::size_t matching_close(std::string_view text, std::size_t open_pos) {
  int depth = 0;
  for (std::size_t i = open_pos; i < text.size(); ++i) {
    if (is_open(text[i])) ++depth;
    else if (is_close(text[i]) && --depth == 0) return i;
  }
  return std::string_view::npos;
}

inline std::string require_bound(std::string_view part, std::string_view whole) {
  auto t = trim(part);
  if (t.empty()) throw SectionSyntaxError("empty bound in '" + std::string(whole) + "'");
  return std::string(t);
}

inline SectionSpec parse_section(std::string_view inner, Dialect dialect, std::string_view whole) {
  const auto semi = split_top_level(inner, ';');
  const auto colon = split_top_level(inner, ':');
  if (semi.size() > 1 && colon.size() > 1)
    throw SectionSyntaxError("section mixes ';' and ':' in '" + std::string(whole) + "'");
  if (semi.size() > 2 || colon.size() > 2)
    throw SectionSyntaxError("too many separators in '" + std::string(whole) + "'");
  if (semi.size() == 2) {
    if (dialect == Dialect::Fortran)
      throw SectionSyntaxError("start;count sections are C syntax: '" + std::string(whole) + "'");
    return Count{require_bound(semi[0], whole), require_bound(semi[1], whole)};
  }
  if (colon.size() == 2) return Range{require_bound(colon[0], whole), require_bound(colon[1], whole)};
  return Index{require_bound(inner, whole)};
}

inline DataExpr parse_plain_expr(std::string_view text, Dialect dialect) {
  const auto whole = text;
  DataExpr expr;
  text = trim(text);
  if (!text.empty() && text.front() == '[') {
    if (dialect == Dialect::Fortran)
      throw SectionSyntaxError("array shaping is C syntax: '" + std::string(whole) + "'");
    while (!text.empty() && text.front() == '[') {
      const auto close = matching_close(text, 0);
      if (close == std::string_view::npos) throw SectionSyntaxError("unbalanced '[' in '" + std::string(whole) + "'");
      expr.sections.push_back(Count{"0", require_bound(text.substr(1, close - 1), whole)});
      text = trim(text.substr(close + 1));
    }
    expr.shaped = true;
  }
  std::size_t n = 0;
  while (n < text.size() && is_ident_char(text[n])) ++n;
  if (n == 0) throw SectionSyntaxError("expected identifier in '" + std::string(whole) + "'");
  expr.base = std::string(text.substr(0, n));
  text = trim(text.substr(n));
  const char open = dialect == Dialect::C ? '[' : '(';
  const char foreign = dialect == Dialect::C ? '(' : '[';
  while (!text.empty()) {
    if (text.front() == foreign)
      throw SectionSyntaxError("mixed dialect section syntax in '" + std::string(whole) + "'");
    if (text.front() != open || expr.shaped)
      throw SectionSyntaxError("unexpected '" + std::string(text) + "' in '" + std::string(whole) + "'");
    const auto close = matching_close(text, 0);
    if (close == std::string_view::npos)
      throw SectionSyntaxError("unbalanced '" + std::string(1, open) + "' in '" + std::string(whole) + "'");
    const auto inner = text.substr(1, close - 1);
    if (dialect == Dialect::Fortran) {
      for (auto dim : split_top_level(inner, ',')) expr.sections.push_back(parse_section(dim, dialect, whole));
    } else {
      expr.sections.push_back(parse_section(inner, dialect, whole));
    }
    text = trim(text.substr(close + 1));
  }
  return expr;
}

inline bool references_in_sections(const DataExpr& e, std::string_view var) {
  for (const auto& s : e.sections) {
    const bool hit = std::visit(
        [&](const auto& spec) {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, Range>)
            return mentions_identifier(spec.lower, var) || mentions_identifier(spec.upper, var);
          else if constexpr (std::is_same_v<T, Count>)
            return mentions_identifier(spec.start, var) || mentions_identifier(spec.count, var);
          else
            return mentions_identifier(spec.position, var);
        },
        s);
    if (hit) return true;
  }
  return false;
}

}  // namespace detail

inline DataExpr parse_data_expr(std::string_view text, Dialect dialect) {
  const auto t = trim(text);
  if (t.empty()) throw SectionSyntaxError("empty data expression");
  if (t.front() != '{') return detail::parse_plain_expr(t, dialect);

  if (detail::matching_close(t, 0) != t.size() - 1)
    throw SectionSyntaxError("malformed self-iterative expression '" + std::string(t) + "'");
  const auto parts = detail::split_top_level(t.substr(1, t.size() - 2), ',');
  if (parts.size() != 2)
    throw SectionSyntaxError("self-iterative expression needs '{expr, var=start;count}': '" + std::string(t) + "'");
  auto expr = detail::parse_plain_expr(parts[0], dialect);
  const auto loop = trim(parts[1]);
  const auto eq = loop.find('=');
  if (eq == std::string_view::npos)
    throw SectionSyntaxError("missing '=' in iterator of '" + std::string(t) + "'");
  const auto var = trim(loop.substr(0, eq));
  if (!is_plain_identifier(var)) throw SectionSyntaxError("bad iterator variable in '" + std::string(t) + "'");
  const auto bounds = detail::split_top_level(loop.substr(eq + 1), ';');
  if (bounds.size() != 2) throw SectionSyntaxError("iterator needs 'start;count' in '" + std::string(t) + "'");
  SelfIter it{std::string(var), detail::require_bound(bounds[0], t), detail::require_bound(bounds[1], t)};
  if (!detail::references_in_sections(expr, it.var))
    throw SectionSyntaxError("iterator '" + it.var + "' is not used by '" + std::string(t) + "'");
  expr.iterator = std::move(it);
  return expr;
}

// Expands `{expr, i=s;c}` into c expressions with i = s, s+1, ..., s+c-1.
inline std::vector<DataExpr> expand_self_iterative(const DataExpr& expr, const IntLookup& binding) {
  if (!expr.iterator) return {expr};
  const auto& it = *expr.iterator;
  const auto start = evaluate_int(it.start, binding);
  const auto count = evaluate_int(it.count, binding);
  if (count < 0) throw ExpansionError("negative trip count " + std::to_string(count) + " for '" + it.var + "'");
  std::vector<DataExpr> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    const auto value = start + k;
    const auto text = value < 0 ? "(" + std::to_string(value) + ")" : std::to_string(value);
    auto sub = [&](const std::string& s) { return substitute_identifier(s, it.var, text); };
    DataExpr e = expr;
    e.iterator.reset();
    for (auto& s : e.sections) {
      std::visit(
          [&](auto& spec) {
            using T = std::decay_t<decltype(spec)>;
            if constexpr (std::is_same_v<T, Range>) {
              spec.lower = sub(spec.lower);
              spec.upper = sub(spec.upper);
            } else if constexpr (std::is_same_v<T, Count>) {
              spec.start = sub(spec.start);
              spec.count = sub(spec.count);
            } else {
              spec.position = sub(spec.position);
            }
          },
          s);
    }
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Directives

namespace detail {

inline std::optional<ClauseTag> clause_tag(std::string_view name) {
  if (name == "comm") return ClauseTag::Comm;
  if (name == "if") return ClauseTag::If;
  if (name == "id") return ClauseTag::Id;
  if (name == "level") return ClauseTag::Level;
  if (name == "kind") return ClauseTag::Kind;
  return std::nullopt;
}

inline bool clause_allowed(DirectiveKind kind, ClauseTag tag) {
  switch (kind) {
    case DirectiveKind::Init: return tag == ClauseTag::Comm;
    case DirectiveKind::Load: return tag == ClauseTag::If;
    case DirectiveKind::Store: return tag != ClauseTag::Comm;
    case DirectiveKind::Shutdown: return false;
  }
  return false;
}

}  // namespace detail

inline DirectiveAst parse_directive(std::string_view directive_text, Dialect dialect) {
  auto rest = trim(directive_text);
  const auto original = std::string(rest);
  auto fail = [&](const std::string& what) -> ParseError {
    return ParseError(what + " in '" + original + "'");
  };
  // Accept the full sentinel as well as the normalized "chk ..." form.
  if (dialect == Dialect::C && !rest.empty() && rest.front() == '#') {
    auto body = detail::match_sentinel(rest, dialect);
    if (!body) throw fail("missing 'chk' sentinel");
    rest = *body;
  } else if (dialect == Dialect::Fortran && rest.size() >= 2 && rest.substr(0, 2) == "!$") {
    rest.remove_prefix(2);
  }
  auto word = [&]() {
    rest = trim(rest);
    std::size_t n = 0;
    while (n < rest.size() && is_ident_char(rest[n])) ++n;
    auto w = rest.substr(0, n);
    rest.remove_prefix(n);
    return std::string(w);
  };
  auto parenthesized = [&](const std::string& what) {
    rest = trim(rest);
    if (rest.empty() || rest.front() != '(') throw fail("expected '(' after " + what);
    const auto close = detail::matching_close(rest, 0);
    if (close == std::string_view::npos) throw fail("unbalanced parentheses after " + what);
    auto inner = rest.substr(1, close - 1);
    rest.remove_prefix(close + 1);
    return inner;
  };

  auto sentinel = word();
  if (dialect == Dialect::Fortran ? !detail::iequals(sentinel, "chk") : sentinel != "chk")
    throw fail("missing 'chk' sentinel");

  DirectiveAst ast;
  const auto name = word();
  if (name == "init") ast.kind = DirectiveKind::Init;
  else if (name == "load") ast.kind = DirectiveKind::Load;
  else if (name == "store") ast.kind = DirectiveKind::Store;
  else if (name == "shutdown") ast.kind = DirectiveKind::Shutdown;
  else throw fail("unknown directive '" + name + "'");

  if (ast.kind == DirectiveKind::Load || ast.kind == DirectiveKind::Store) {
    const auto list = parenthesized(name);
    for (auto item : detail::split_top_level(list, ','))
      ast.data_exprs.push_back(parse_data_expr(item, dialect));
  }

  while (!trim(rest).empty()) {
    const auto clause_name = word();
    if (clause_name.empty()) throw fail("unexpected '" + std::string(trim(rest)) + "'");
    const auto tag = detail::clause_tag(clause_name);
    if (!tag) throw fail("unknown clause '" + clause_name + "'");
    if (!detail::clause_allowed(ast.kind, *tag))
      throw fail("clause '" + clause_name + "' is not accepted by '" + name + "'");
    if (ast.find(*tag)) throw DuplicateClause("duplicate clause '" + clause_name + "' in '" + original + "'");
    const auto payload = std::string(trim(parenthesized(clause_name)));
    if (payload.empty()) throw fail("empty '" + clause_name + "' clause");
    if (*tag == ClauseTag::Kind && payload != "CHK_FULL" && payload != "CHK_DIFF")
      throw fail("kind must be CHK_FULL or CHK_DIFF, got '" + payload + "'");
    ast.clauses.push_back(Clause{*tag, payload});
  }
  std::sort(ast.clauses.begin(), ast.clauses.end(),
            [](const Clause& a, const Clause& b) { return a.tag < b.tag; });

  if (ast.kind == DirectiveKind::Init && !ast.find(ClauseTag::Comm)) throw MissingMandatoryClause("comm");
  if (ast.kind == DirectiveKind::Store) {
    if (!ast.find(ClauseTag::Id)) throw MissingMandatoryClause("id");
    if (!ast.find(ClauseTag::Level)) throw MissingMandatoryClause("level");
  }
  return ast;
}

// ---------------------------------------------------------------------------
// Printing (canonical form; re-parses to a structurally equal AST)

inline std::string print_data_expr(const DataExpr& e, Dialect dialect) {
  std::string out;
  if (e.shaped) {
    for (const auto& s : e.sections) out += "[" + std::get<Count>(s).count + "]";
    out += " " + e.base;
  } else {
    out = e.base;
    for (const auto& s : e.sections) {
      const auto body = std::visit(
          [&](const auto& spec) -> std::string {
            using T = std::decay_t<decltype(spec)>;
            if constexpr (std::is_same_v<T, Range>) return spec.lower + ":" + spec.upper;
            else if constexpr (std::is_same_v<T, Count>) {
              if (dialect == Dialect::Fortran)
                return spec.start + ":(" + spec.start + ")+(" + spec.count + ")-1";
              return spec.start + ";" + spec.count;
            } else return spec.position;
          },
          s);
      out += dialect == Dialect::C ? "[" + body + "]" : "(" + body + ")";
    }
  }
  if (e.iterator) out = "{" + out + ", " + e.iterator->var + "=" + e.iterator->start + ";" + e.iterator->count + "}";
  return out;
}

inline std::string print_directive(const DirectiveAst& ast, Dialect dialect) {
  std::string out = "chk ";
  out += to_string(ast.kind);
  if (ast.kind == DirectiveKind::Load || ast.kind == DirectiveKind::Store) {
    out += "(";
    for (std::size_t i = 0; i < ast.data_exprs.size(); ++i) {
      if (i) out += ", ";
      out += print_data_expr(ast.data_exprs[i], dialect);
    }
    out += ")";
  }
  for (const auto& c : ast.clauses) {
    out += " ";
    out += to_string(c.tag);
    out += "(" + c.payload + ")";
  }
  return out;
}

}  // namespace openchk
