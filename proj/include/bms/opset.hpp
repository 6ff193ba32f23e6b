#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace bms {

/// Maximum number of nodes an expression tree may hold.
inline constexpr std::size_t kDefaultMaxTreeSize = 50;

/// Built-in operations the evaluator knows how to compute.
enum class OpCode : unsigned char {
  Add, Sub, Mul, Div, Pow,
  Exp, Log, Sin, Cos, Sqrt, Abs, Sinh, Cosh, Tanh, Pow2, Pow3, Neg,
};

struct BuiltinOp {
  std::string_view name;
  OpCode code;
  int arity;
  bool commutative;
};

inline constexpr std::array<BuiltinOp, 17> kBuiltinOps{{
    {"+", OpCode::Add, 2, true},
    {"-", OpCode::Sub, 2, false},
    {"*", OpCode::Mul, 2, true},
    {"/", OpCode::Div, 2, false},
    {"pow", OpCode::Pow, 2, false},
    {"exp", OpCode::Exp, 1, false},
    {"log", OpCode::Log, 1, false},
    {"sin", OpCode::Sin, 1, false},
    {"cos", OpCode::Cos, 1, false},
    {"sqrt", OpCode::Sqrt, 1, false},
    {"abs", OpCode::Abs, 1, false},
    {"sinh", OpCode::Sinh, 1, false},
    {"cosh", OpCode::Cosh, 1, false},
    {"tanh", OpCode::Tanh, 1, false},
    {"pow2", OpCode::Pow2, 1, false},
    {"pow3", OpCode::Pow3, 1, false},
    {"neg", OpCode::Neg, 1, false},
}};

inline std::optional<BuiltinOp> find_builtin(std::string_view name) {
  for (const auto& b : kBuiltinOps)
    if (b.name == name) return b;
  return std::nullopt;
}

struct Operation {
  std::string name;
  int arity = 0;
  OpCode code = OpCode::Add;
  bool commutative = false;
};

/// The operations, variables and parameter symbols an expression may use.
///
/// Variables are x1..xK and parameters p1..pP in text form; internally both
/// are zero-based. Operation order is significant: it fixes the index of
/// every operation in count vectors, prior tables and enumerations.
class OperationSet {
 public:
  OperationSet() = default;

  OperationSet(const std::vector<std::string>& names, int n_vars, int n_params)
      : n_vars_(n_vars), n_params_(n_params) {
    if (n_vars < 1) throw std::invalid_argument("operation set needs at least one variable");
    if (n_params < 0) throw std::invalid_argument("negative parameter count");
    for (const auto& name : names) {
      auto b = find_builtin(name);
      if (!b) throw std::invalid_argument("unknown operation '" + name + "'");
      if (find(name)) throw std::invalid_argument("duplicate operation '" + name + "'");
      ops_.push_back({name, b->arity, b->code, b->commutative});
      (b->arity == 1 ? unary_ : binary_).push_back(static_cast<int>(ops_.size() - 1));
    }
  }

  /// {+, -, *, /, pow, exp, log, sin, cos, sqrt, abs, sinh, cosh, tanh, neg}
  static OperationSet defaults(int n_vars, int n_params) {
    return OperationSet(default_names(), n_vars, n_params);
  }

  static std::vector<std::string> default_names() {
    return {"+", "-", "*", "/", "pow", "exp", "log", "sin",
            "cos", "sqrt", "abs", "sinh", "cosh", "tanh", "neg"};
  }

  /// Comma-separated operation list, or "default".
  static OperationSet from_spec(std::string_view spec, int n_vars, int n_params) {
    if (spec.empty() || spec == "default") return defaults(n_vars, n_params);
    std::vector<std::string> names;
    std::string item;
    std::istringstream in{std::string(spec)};
    while (std::getline(in, item, ',')) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (!item.empty()) names.push_back(item);
    }
    return OperationSet(names, n_vars, n_params);
  }

  std::size_t size() const { return ops_.size(); }
  const Operation& op(std::size_t i) const { return ops_.at(i); }
  const std::vector<Operation>& ops() const { return ops_; }
  int n_vars() const { return n_vars_; }
  int n_params() const { return n_params_; }
  /// Number of distinct leaf symbols (0-ETs).
  int n_leaves() const { return n_vars_ + n_params_; }
  const std::vector<int>& unary() const { return unary_; }
  const std::vector<int>& binary() const { return binary_; }

  std::optional<int> find(std::string_view name) const {
    for (std::size_t i = 0; i < ops_.size(); ++i)
      if (ops_[i].name == name) return static_cast<int>(i);
    return std::nullopt;
  }

  std::string spec() const {
    std::string s;
    for (const auto& o : ops_) {
      if (!s.empty()) s += ',';
      s += o.name;
    }
    return s;
  }

  /// Same operations in the same order (variable/parameter counts ignored).
  bool same_operations(const OperationSet& other) const {
    if (ops_.size() != other.ops_.size()) return false;
    return std::equal(ops_.begin(), ops_.end(), other.ops_.begin(),
                      [](const Operation& a, const Operation& b) { return a.name == b.name; });
  }

  OperationSet with_counts(int n_vars, int n_params) const {
    OperationSet o = *this;
    o.n_vars_ = n_vars;
    o.n_params_ = n_params;
    return o;
  }

 private:
  std::vector<Operation> ops_;
  std::vector<int> unary_;
  std::vector<int> binary_;
  int n_vars_ = 1;
  int n_params_ = 0;
};

}  // namespace bms
