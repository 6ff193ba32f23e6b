#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "bms/dataset.hpp"
#include "bms/opset.hpp"
#include "bms/tree.hpp"

namespace bms {

/// Marker for any value that is not a finite real (domain error, overflow).
inline constexpr double kInvalid = std::numeric_limits<double>::quiet_NaN();

inline double sanitize(double v) { return std::isfinite(v) ? v : kInvalid; }

inline double apply_op(OpCode op, double a, double b = 0.0) {
  if (std::isnan(a) || std::isnan(b)) return kInvalid;
  switch (op) {
    case OpCode::Add: return sanitize(a + b);
    case OpCode::Sub: return sanitize(a - b);
    case OpCode::Mul: return sanitize(a * b);
    case OpCode::Div: return b == 0.0 ? kInvalid : sanitize(a / b);
    case OpCode::Pow: return sanitize(std::pow(a, b));
    case OpCode::Exp: return sanitize(std::exp(a));
    case OpCode::Log: return a <= 0.0 ? kInvalid : sanitize(std::log(a));
    case OpCode::Sin: return sanitize(std::sin(a));
    case OpCode::Cos: return sanitize(std::cos(a));
    case OpCode::Sqrt: return a < 0.0 ? kInvalid : std::sqrt(a);
    case OpCode::Abs: return std::fabs(a);
    case OpCode::Sinh: return sanitize(std::sinh(a));
    case OpCode::Cosh: return sanitize(std::cosh(a));
    case OpCode::Tanh: return std::tanh(a);
    case OpCode::Pow2: return sanitize(a * a);
    case OpCode::Pow3: return sanitize(a * a * a);
    case OpCode::Neg: return -a;
  }
  return kInvalid;
}

namespace detail {
inline std::size_t eval_at(const ExpressionTree& t, const OperationSet& opset, std::size_t pos,
                           std::span<const double> x, std::span<const double> theta, double& out) {
  const Symbol& s = t[pos];
  switch (s.kind) {
    case SymbolKind::Variable: out = sanitize(x[s.index]); return pos + 1;
    case SymbolKind::Parameter: out = sanitize(theta[s.index]); return pos + 1;
    case SymbolKind::Operation: break;
  }
  double a = 0, b = 0;
  std::size_t next = eval_at(t, opset, pos + 1, x, theta, a);
  if (s.arity == 2) next = eval_at(t, opset, next, x, theta, b);
  out = apply_op(opset.op(s.index).code, a, b);
  return next;
}
}  // namespace detail

/// Value of the expression at one point, or kInvalid (NaN) on any domain
/// violation or overflow anywhere in the tree. Never throws.
inline double evaluate(const ExpressionTree& t, const OperationSet& opset,
                       std::span<const double> x, std::span<const double> theta) {
  double v = kInvalid;
  detail::eval_at(t, opset, 0, x, theta, v);
  return v;
}

namespace detail {

/// Non-finite results (overflow, domain errors) become NaN.
inline double clean(double v) { return std::fabs(v) <= std::numeric_limits<double>::max() ? v : kInvalid; }

/// One operand of a compiled step: a register (row vector) or a parameter.
struct Operand {
  int reg = -1;
  int param = -1;
  bool scalar() const { return param >= 0; }
};

template <class F>
void map_unary(std::vector<double>& out, const double* a, bool a_scalar, F f) {
  if (a_scalar) {
    std::fill(out.begin(), out.end(), clean(f(*a)));
    return;
  }
  const std::size_t n = out.size();
  double* o = out.data();
  for (std::size_t i = 0; i < n; ++i) o[i] = clean(f(a[i]));
}

template <class F>
void map_binary(std::vector<double>& out, const double* a, bool a_scalar, const double* b, bool b_scalar, F f) {
  const std::size_t n = out.size();
  double* o = out.data();
  if (a_scalar && b_scalar) {
    std::fill(out.begin(), out.end(), clean(f(*a, *b)));
  } else if (a_scalar) {
    const double av = *a;
    for (std::size_t i = 0; i < n; ++i) o[i] = clean(f(av, b[i]));
  } else if (b_scalar) {
    const double bv = *b;
    for (std::size_t i = 0; i < n; ++i) o[i] = clean(f(a[i], bv));
  } else {
    for (std::size_t i = 0; i < n; ++i) o[i] = clean(f(a[i], b[i]));
  }
}

/// Row-wise op application. IEEE arithmetic already yields NaN or inf on
/// every domain violation, which `clean` folds into NaN; pow is the only op
/// that can map a NaN operand to a finite value, so it checks explicitly.
inline void apply_rows(OpCode op, std::vector<double>& out, const double* a, bool as, const double* b, bool bs) {
  switch (op) {
    case OpCode::Add: return map_binary(out, a, as, b, bs, [](double u, double v) { return u + v; });
    case OpCode::Sub: return map_binary(out, a, as, b, bs, [](double u, double v) { return u - v; });
    case OpCode::Mul: return map_binary(out, a, as, b, bs, [](double u, double v) { return u * v; });
    case OpCode::Div: return map_binary(out, a, as, b, bs, [](double u, double v) { return u / v; });
    case OpCode::Pow:
      return map_binary(out, a, as, b, bs, [](double u, double v) {
        return (std::isnan(u) || std::isnan(v)) ? kInvalid : std::pow(u, v);
      });
    case OpCode::Exp: return map_unary(out, a, as, [](double u) { return std::exp(u); });
    case OpCode::Log: return map_unary(out, a, as, [](double u) { return std::log(u); });
    case OpCode::Sin: return map_unary(out, a, as, [](double u) { return std::sin(u); });
    case OpCode::Cos: return map_unary(out, a, as, [](double u) { return std::cos(u); });
    case OpCode::Sqrt: return map_unary(out, a, as, [](double u) { return std::sqrt(u); });
    case OpCode::Abs: return map_unary(out, a, as, [](double u) { return std::fabs(u); });
    case OpCode::Sinh: return map_unary(out, a, as, [](double u) { return std::sinh(u); });
    case OpCode::Cosh: return map_unary(out, a, as, [](double u) { return std::cosh(u); });
    case OpCode::Tanh: return map_unary(out, a, as, [](double u) { return std::tanh(u); });
    case OpCode::Pow2: return map_unary(out, a, as, [](double u) { return u * u; });
    case OpCode::Pow3: return map_unary(out, a, as, [](double u) { return u * u * u; });
    case OpCode::Neg: return map_unary(out, a, as, [](double u) { return -u; });
  }
}

}  // namespace detail

/// Batch evaluator bound to one tree and one input matrix.
///
/// Subtrees that contain no parameter are evaluated once at construction;
/// `evaluate(theta)` only recomputes the parameter-dependent nodes, reading
/// parameters as scalars rather than broadcasting them.
class CompiledExpression {
 public:
  CompiledExpression(const ExpressionTree& tree, const OperationSet& opset,
                     const std::vector<std::vector<double>>& columns, std::size_t n_rows)
      : n_(n_rows) {
    root_ = compile(tree, opset, columns, 0).value;
    if (root_.scalar()) {
      // a bare parameter: materialise it so evaluate() can return rows
      Step st;
      st.op = OpCode::Add;
      st.arity = 0;
      st.a = root_;
      st.out = new_reg();
      steps_.push_back(st);
      root_ = detail::Operand{st.out, -1};
    }
  }

  std::size_t n_rows() const { return n_; }

  /// Values at every row; invalid rows hold NaN.
  const std::vector<double>& evaluate(std::span<const double> theta) {
    for (const auto& st : steps_) run(st, theta);
    return regs_[static_cast<std::size_t>(root_.reg)];
  }

  /// Sum of squared residuals, +inf when any row is invalid.
  double sse(std::span<const double> theta, std::span<const double> y) {
    const auto& f = evaluate(theta);
    double s = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double r = y[i] - f[i];
      s += r * r;
    }
    return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
  }

 private:
  struct Step {
    OpCode op{};
    int arity = 0;  // 0 = copy a parameter into a register
    int out = 0;
    detail::Operand a, b;
  };
  struct Compiled {
    std::size_t next;
    detail::Operand value;
    bool has_param;
  };

  int new_reg() {
    regs_.emplace_back(n_);
    return static_cast<int>(regs_.size() - 1);
  }

  const double* source(const detail::Operand& o, std::span<const double> theta) const {
    return o.scalar() ? &theta[static_cast<std::size_t>(o.param)] : regs_[static_cast<std::size_t>(o.reg)].data();
  }

  void run(const Step& st, std::span<const double> theta) {
    auto& out = regs_[static_cast<std::size_t>(st.out)];
    if (st.arity == 0) {
      std::fill(out.begin(), out.end(), detail::clean(theta[static_cast<std::size_t>(st.a.param)]));
      return;
    }
    const double* a = source(st.a, theta);
    const double* b = st.arity == 2 ? source(st.b, theta) : nullptr;
    detail::apply_rows(st.op, out, a, st.a.scalar(), b, st.arity == 2 && st.b.scalar());
  }

  Compiled compile(const ExpressionTree& t, const OperationSet& opset,
                   const std::vector<std::vector<double>>& columns, std::size_t pos) {
    const Symbol& s = t[pos];
    if (s.kind == SymbolKind::Variable) {
      const int r = new_reg();
      regs_[static_cast<std::size_t>(r)] = columns.at(s.index);
      return {pos + 1, {r, -1}, false};
    }
    if (s.kind == SymbolKind::Parameter) return {pos + 1, {-1, static_cast<int>(s.index)}, true};
    Step st;
    st.op = opset.op(s.index).code;
    st.arity = s.arity;
    const Compiled a = compile(t, opset, columns, pos + 1);
    st.a = a.value;
    Compiled last = a;
    bool has_param = a.has_param;
    if (s.arity == 2) {
      last = compile(t, opset, columns, a.next);
      st.b = last.value;
      has_param = has_param || last.has_param;
    }
    st.out = new_reg();
    if (has_param) {
      steps_.push_back(st);
    } else {
      run(st, {});
    }
    return {last.next, {st.out, -1}, has_param};
  }

  std::size_t n_;
  detail::Operand root_;
  std::vector<std::vector<double>> regs_;
  std::vector<Step> steps_;
};

}  // namespace bms
