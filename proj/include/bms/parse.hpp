#pragma once

#include <charconv>
#include <cstddef>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bms/opset.hpp"
#include "bms/tree.hpp"

namespace bms {

/// Raised for malformed expression text; `position()` is a byte offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

namespace detail {

struct Token {
  enum Kind { Open, Close, Atom, End } kind;
  std::string_view text;
  std::size_t pos;
};

class Lexer {
 public:
  explicit Lexer(std::string_view s) : s_(s) {}

  Token next() {
    skip();
    if (i_ >= s_.size()) return {Token::End, {}, i_};
    const std::size_t start = i_;
    if (s_[i_] == '(') return {Token::Open, s_.substr(i_++, 1), start};
    if (s_[i_] == ')') return {Token::Close, s_.substr(i_++, 1), start};
    while (i_ < s_.size() && !is_space(s_[i_]) && s_[i_] != '(' && s_[i_] != ')' && s_[i_] != '#')
      ++i_;
    return {Token::Atom, s_.substr(start, i_ - start), start};
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
  void skip() {
    while (i_ < s_.size()) {
      if (is_space(s_[i_])) {
        ++i_;
      } else if (s_[i_] == '#') {
        while (i_ < s_.size() && s_[i_] != '\n') ++i_;
      } else {
        break;
      }
    }
  }
  std::string_view s_;
  std::size_t i_ = 0;
};

/// Parses "x12" / "p3" style atoms; returns the zero-based index.
inline std::optional<int> leaf_index(std::string_view atom, char prefix) {
  if (atom.size() < 2 || atom[0] != prefix) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(atom.data() + 1, atom.data() + atom.size(), v);
  if (ec != std::errc() || ptr != atom.data() + atom.size() || v < 1) return std::nullopt;
  return v - 1;
}

inline void parse_form(Lexer& lex, const Token& first, const OperationSet& opset,
                       std::vector<Symbol>& out) {
  if (first.kind == Token::Atom) {
    if (auto v = leaf_index(first.text, 'x')) {
      if (*v >= opset.n_vars())
        throw ParseError("unknown symbol '" + std::string(first.text) + "' (variable out of range)", first.pos);
      out.push_back(Symbol::variable(*v));
      return;
    }
    if (auto p = leaf_index(first.text, 'p')) {
      if (*p >= opset.n_params())
        throw ParseError("unknown symbol '" + std::string(first.text) + "' (parameter out of range)", first.pos);
      out.push_back(Symbol::parameter(*p));
      return;
    }
    if (opset.find(first.text))
      throw ParseError("operation '" + std::string(first.text) + "' outside a form", first.pos);
    throw ParseError("unknown symbol '" + std::string(first.text) + "'", first.pos);
  }
  if (first.kind == Token::Close) throw ParseError("unexpected ')'", first.pos);
  if (first.kind == Token::End) throw ParseError("unexpected end of input", first.pos);

  const Token head = lex.next();
  if (head.kind != Token::Atom) throw ParseError("expected operation name", head.pos);
  const auto op = opset.find(head.text);
  if (!op) throw ParseError("unknown symbol '" + std::string(head.text) + "'", head.pos);
  const int arity = opset.op(*op).arity;
  out.push_back(Symbol::operation(*op, arity));
  int n_args = 0;
  for (;;) {
    const Token t = lex.next();
    if (t.kind == Token::Close) break;
    if (t.kind == Token::End) throw ParseError("unbalanced form, missing ')'", t.pos);
    if (n_args == arity)
      throw ParseError("arity mismatch: '" + std::string(head.text) + "' takes " +
                           std::to_string(arity) + " argument(s)", t.pos);
    parse_form(lex, t, opset, out);
    ++n_args;
  }
  if (n_args != arity)
    throw ParseError("arity mismatch: '" + std::string(head.text) + "' takes " +
                         std::to_string(arity) + " argument(s), got " + std::to_string(n_args),
                     head.pos);
}

}  // namespace detail

/// Parses one prefix-notation expression: form := atom | "(" op form+ ")".
inline ExpressionTree parse_expression(std::string_view text, const OperationSet& opset,
                                       std::size_t max_size = kDefaultMaxTreeSize) {
  detail::Lexer lex(text);
  std::vector<Symbol> nodes;
  const detail::Token first = lex.next();
  if (first.kind == detail::Token::End) throw ParseError("empty expression", first.pos);
  detail::parse_form(lex, first, opset, nodes);
  if (const auto rest = lex.next(); rest.kind != detail::Token::End)
    throw ParseError("trailing input after expression", rest.pos);
  if (nodes.size() > max_size)
    throw ParseError("tree exceeds maximum size of " + std::to_string(max_size) + " nodes", 0);
  return ExpressionTree(std::move(nodes));
}

inline std::string symbol_text(const Symbol& s, const OperationSet& opset) {
  switch (s.kind) {
    case SymbolKind::Variable: return "x" + std::to_string(s.index + 1);
    case SymbolKind::Parameter: return "p" + std::to_string(s.index + 1);
    case SymbolKind::Operation: return opset.op(s.index).name;
  }
  return {};
}

namespace detail {
inline std::size_t render_at(const ExpressionTree& t, const OperationSet& opset, std::size_t pos,
                             std::string& out) {
  const Symbol& s = t[pos];
  if (s.is_leaf()) {
    out += symbol_text(s, opset);
    return pos + 1;
  }
  out += '(';
  out += opset.op(s.index).name;
  std::size_t next = pos + 1;
  for (int i = 0; i < s.arity; ++i) {
    out += ' ';
    next = render_at(t, opset, next, out);
  }
  out += ')';
  return next;
}
}  // namespace detail

inline std::string render(const ExpressionTree& t, const OperationSet& opset) {
  std::string out;
  if (!t.empty()) detail::render_at(t, opset, 0, out);
  return out;
}

struct ExpressionLine {
  std::size_t line = 0;
  ExpressionTree tree;
};

struct LineError {
  std::size_t line = 0;
  std::string message;
};

/// Reads one expression per line; blank and comment-only lines are skipped.
/// With `strict` the first failure throws ParseError mentioning the line.
inline std::vector<ExpressionLine> read_expressions(std::istream& in, const OperationSet& opset,
                                                    bool strict, std::vector<LineError>* errors,
                                                    std::size_t max_size = kDefaultMaxTreeSize) {
  std::vector<ExpressionLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      out.push_back({lineno, parse_expression(line, opset, max_size)});
    } catch (const ParseError& e) {
      if (strict) throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), e.position());
      if (errors) errors->push_back({lineno, e.what()});
    }
  }
  return out;
}

}  // namespace bms
