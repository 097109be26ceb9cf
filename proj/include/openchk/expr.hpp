#pragma once

// Integer expression evaluation for clause payloads and section bounds.
// Grammar is the C subset: literals, identifiers, parentheses, unary + - !,
// * / %, + -, comparisons, == !=, && ||.

#include <cctype>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include "openchk/error.hpp"

namespace openchk {

using IntLookup = std::function<std::optional<std::int64_t>(std::string_view)>;

inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool is_integer_literal(std::string_view s) {
  s = trim(s);
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) s.remove_prefix(1);
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

// Identifier in the host-language sense: must not start with a digit.
inline bool is_plain_identifier(std::string_view s) {
  s = trim(s);
  if (s.empty() || std::isdigit(static_cast<unsigned char>(s.front()))) return false;
  for (char c : s)
    if (!is_ident_char(c)) return false;
  return true;
}

namespace detail {

class ExprParser {
 public:
  ExprParser(std::string_view text, const IntLookup& lookup) : text_(text), lookup_(lookup) {}

  std::int64_t run() {
    const auto value = parse(0);
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(text_.substr(pos_)) + "'");
    return value;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ExprError("cannot evaluate '" + std::string(text_) + "': " + what);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(std::string_view op) {
    skip_ws();
    if (text_.substr(pos_, op.size()) == op) {
      pos_ += op.size();
      return true;
    }
    return false;
  }

  // Binary operators by precedence, lowest first.
  struct BinOp {
    std::string_view token;
    int precedence;
  };

  std::optional<BinOp> peek_binary() {
    skip_ws();
    static constexpr BinOp kOps[] = {
        {"||", 1}, {"&&", 2}, {"==", 3}, {"!=", 3}, {"<=", 4}, {">=", 4}, {"<", 4},
        {">", 4},  {"+", 5},  {"-", 5},  {"*", 6},  {"/", 6},  {"%", 6},
    };
    for (const auto& op : kOps)
      if (text_.substr(pos_, op.token.size()) == op.token) return op;
    return std::nullopt;
  }

  std::int64_t parse(int min_precedence) {
    auto lhs = unary();
    for (;;) {
      const auto op = peek_binary();
      if (!op || op->precedence < min_precedence) break;
      pos_ += op->token.size();
      const auto rhs = parse(op->precedence + 1);
      lhs = apply(op->token, lhs, rhs);
    }
    return lhs;
  }

  std::int64_t apply(std::string_view op, std::int64_t a, std::int64_t b) const {
    if (op == "||") return (a || b) ? 1 : 0;
    if (op == "&&") return (a && b) ? 1 : 0;
    if (op == "==") return a == b;
    if (op == "!=") return a != b;
    if (op == "<=") return a <= b;
    if (op == ">=") return a >= b;
    if (op == "<") return a < b;
    if (op == ">") return a > b;
    if (op == "+") return a + b;
    if (op == "-") return a - b;
    if (op == "*") return a * b;
    if (b == 0) fail("division by zero");
    if (op == "/") return a / b;
    return a % b;
  }

  std::int64_t unary() {
    if (eat("-")) return -unary();
    if (eat("+")) return unary();
    if (eat("!")) return unary() == 0 ? 1 : 0;
    return primary();
  }

  std::int64_t primary() {
    skip_ws();
    if (eat("(")) {
      const auto v = parse(0);
      if (!eat(")")) fail("missing ')'");
      return v;
    }
    const auto start = pos_;
    while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
    const auto token = text_.substr(start, pos_ - start);
    if (token.empty()) fail("expected operand");
    if (is_integer_literal(token)) {
      std::int64_t v = 0;
      for (char c : token) v = v * 10 + (c - '0');
      return v;
    }
    if (!is_plain_identifier(token)) fail("bad token '" + std::string(token) + "'");
    auto value = lookup_ ? lookup_(token) : std::nullopt;
    if (!value) fail("unbound identifier '" + std::string(token) + "'");
    return *value;
  }

  std::string_view text_;
  const IntLookup& lookup_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::int64_t evaluate_int(std::string_view text, const IntLookup& lookup = {}) {
  return detail::ExprParser(text, lookup).run();
}

inline std::optional<std::int64_t> try_evaluate_int(std::string_view text, const IntLookup& lookup = {}) {
  try {
    return evaluate_int(text, lookup);
  } catch (const ExprError&) {
    return std::nullopt;
  }
}

// Replaces every identifier token equal to `name` with `replacement`.
inline std::string substitute_identifier(std::string_view text, std::string_view name,
                                         std::string_view replacement) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_ident_char(text[i])) {
      const auto start = i;
      while (i < text.size() && is_ident_char(text[i])) ++i;
      const auto token = text.substr(start, i - start);
      out += token == name ? replacement : token;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

inline bool mentions_identifier(std::string_view text, std::string_view name) {
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_ident_char(text[i])) {
      const auto start = i;
      while (i < text.size() && is_ident_char(text[i])) ++i;
      if (text.substr(start, i - start) == name) return true;
    } else {
      ++i;
    }
  }
  return false;
}

}  // namespace openchk
