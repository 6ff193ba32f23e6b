#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bms/evaluate.hpp"
#include "bms/opset.hpp"
#include "bms/parse.hpp"
#include "bms/tree.hpp"

namespace bms {

/// Algebraic term used for normal forms: n-ary + and *, numeric literals.
struct Term {
  enum class Kind { Number, Variable, Parameter, Apply };
  Kind kind = Kind::Number;
  double value = 0;
  int index = 0;
  std::string op;
  std::vector<Term> args;

  static Term number(double v) { return {Kind::Number, v, 0, {}, {}}; }
  static Term apply(std::string op, std::vector<Term> args) {
    return {Kind::Apply, 0, 0, std::move(op), std::move(args)};
  }
  bool is_number() const { return kind == Kind::Number; }
  bool is_number(double v) const { return kind == Kind::Number && value == v; }
};

inline std::string format_number(double v) {
  if (v == 0) v = 0;  // no "-0"
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline void render_term(const Term& t, std::string& out) {
  switch (t.kind) {
    case Term::Kind::Number: out += format_number(t.value); return;
    case Term::Kind::Variable: out += 'x' + std::to_string(t.index + 1); return;
    case Term::Kind::Parameter: out += 'p' + std::to_string(t.index + 1); return;
    case Term::Kind::Apply:
      out += '(';
      out += t.op;
      for (const auto& a : t.args) {
        out += ' ';
        render_term(a, out);
      }
      out += ')';
      return;
  }
}

inline std::string render_term(const Term& t) {
  std::string s;
  render_term(t, s);
  return s;
}

inline Term to_term(const ExpressionTree& t, const OperationSet& opset, std::size_t pos = 0) {
  const Symbol& s = t[pos];
  if (s.kind == SymbolKind::Variable) return {Term::Kind::Variable, 0, s.index, {}, {}};
  if (s.kind == SymbolKind::Parameter) return {Term::Kind::Parameter, 0, s.index, {}, {}};
  std::vector<Term> args;
  for (auto c : t.children(pos)) args.push_back(to_term(t, opset, c));
  return Term::apply(opset.op(s.index).name, std::move(args));
}

namespace detail {

inline std::optional<OpCode> unary_code(std::string_view op) {
  auto b = find_builtin(op);
  if (b && b->arity == 1) return b->code;
  return std::nullopt;
}

inline void sort_args(std::vector<Term>& args) {
  std::vector<std::pair<std::string, Term>> keyed;
  keyed.reserve(args.size());
  for (auto& a : args) keyed.emplace_back(render_term(a), std::move(a));
  std::sort(keyed.begin(), keyed.end(),
            [](const auto& l, const auto& r) { return l.first < r.first; });
  args.clear();
  for (auto& [k, a] : keyed) args.push_back(std::move(a));
}

/// Shared body of the associative/commutative ops (+, *).
inline Term normalize_chain(const std::string& op, std::vector<Term> args) {
  const bool sum = op == "+";
  const double neutral = sum ? 0.0 : 1.0;
  double acc = neutral;
  bool has_number = false;
  std::vector<Term> flat;
  for (auto& a : args) {
    if (a.kind == Term::Kind::Apply && a.op == op) {
      for (auto& inner : a.args) {
        if (inner.is_number()) {
          acc = sum ? acc + inner.value : acc * inner.value;
          has_number = true;
        } else {
          flat.push_back(std::move(inner));
        }
      }
    } else if (a.is_number()) {
      acc = sum ? acc + a.value : acc * a.value;
      has_number = true;
    } else {
      flat.push_back(std::move(a));
    }
  }
  if (!sum && has_number && acc == 0.0 && std::isfinite(acc)) return Term::number(0.0);
  if (has_number && (acc != neutral || flat.empty())) flat.push_back(Term::number(acc));
  if (flat.empty()) return Term::number(neutral);
  if (flat.size() == 1) return std::move(flat.front());
  sort_args(flat);
  return Term::apply(op, std::move(flat));
}

/// Combines one node whose arguments are already in normal form.
inline Term normalize(std::string op, std::vector<Term> args) {
  if (op == "-") {
    Term neg = normalize("*", {Term::number(-1.0), std::move(args[1])});
    return normalize("+", {std::move(args[0]), std::move(neg)});
  }
  if (op == "neg") return normalize("*", {Term::number(-1.0), std::move(args[0])});
  if (op == "/") {
    Term inv = normalize("pow", {std::move(args[1]), Term::number(-1.0)});
    return normalize("*", {std::move(args[0]), std::move(inv)});
  }
  if (op == "pow2") return normalize("pow", {std::move(args[0]), Term::number(2.0)});
  if (op == "pow3") return normalize("pow", {std::move(args[0]), Term::number(3.0)});
  if (op == "+" || op == "*") return normalize_chain(op, std::move(args));
  if (op == "pow") {
    if (args[0].is_number() && args[1].is_number()) {
      const double v = apply_op(OpCode::Pow, args[0].value, args[1].value);
      if (std::isfinite(v)) return Term::number(v);
    }
    if (args[1].is_number(1.0)) return std::move(args[0]);
    return Term::apply("pow", std::move(args));
  }
  if (args.size() == 1 && args[0].is_number()) {
    if (auto code = unary_code(op)) {
      const double v = apply_op(*code, args[0].value);
      if (std::isfinite(v)) return Term::number(v);
    }
  }
  return Term::apply(std::move(op), std::move(args));
}

}  // namespace detail

/// Bottom-up rewrite to normal form: subtraction, negation and division are
/// expressed through + , * and pow(., -1); + and * chains are flattened and
/// their operands sorted; literal-only subterms are folded.
inline Term canonicalize(const Term& t) {
  if (t.kind != Term::Kind::Apply) return t;
  std::vector<Term> args;
  args.reserve(t.args.size());
  for (const auto& a : t.args) args.push_back(canonicalize(a));
  return detail::normalize(t.op, std::move(args));
}

using CanonicalKey = std::string;

inline CanonicalKey canonical_key(const ExpressionTree& t, const OperationSet& opset) {
  return render_term(canonicalize(to_term(t, opset)));
}

namespace detail {
inline Term parse_term_form(Lexer& lex, const Token& tok) {
  if (tok.kind == Token::Atom) {
    if (auto v = leaf_index(tok.text, 'x')) return {Term::Kind::Variable, 0, *v, {}, {}};
    if (auto p = leaf_index(tok.text, 'p')) return {Term::Kind::Parameter, 0, *p, {}, {}};
    double v = 0;
    if (parse_double(tok.text, v)) return Term::number(v);
    if (tok.text == "inf") return Term::number(std::numeric_limits<double>::infinity());
    if (tok.text == "-inf") return Term::number(-std::numeric_limits<double>::infinity());
    throw ParseError("unknown atom '" + std::string(tok.text) + "'", tok.pos);
  }
  if (tok.kind != Token::Open) throw ParseError("expected term", tok.pos);
  const Token head = lex.next();
  if (head.kind != Token::Atom) throw ParseError("expected operation name", head.pos);
  std::vector<Term> args;
  for (Token t = lex.next(); t.kind != Token::Close; t = lex.next()) {
    if (t.kind == Token::End) throw ParseError("unbalanced term", t.pos);
    args.push_back(parse_term_form(lex, t));
  }
  if (args.empty()) throw ParseError("operation without arguments", head.pos);
  return Term::apply(std::string(head.text), std::move(args));
}
}  // namespace detail

/// Reads a rendered Term (e.g. a canonical key) back.
inline Term parse_term(std::string_view text) {
  detail::Lexer lex(text);
  Term t = detail::parse_term_form(lex, lex.next());
  if (const auto rest = lex.next(); rest.kind != detail::Token::End)
    throw ParseError("trailing input after term", rest.pos);
  return t;
}

}  // namespace bms
