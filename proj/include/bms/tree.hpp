#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bms/opset.hpp"

namespace bms {

enum class SymbolKind : std::uint8_t { Operation, Variable, Parameter };

/// One node of an expression tree. `index` is the operation's position in
/// the OperationSet, or the zero-based variable / parameter index.
struct Symbol {
  SymbolKind kind = SymbolKind::Variable;
  std::uint8_t arity = 0;
  std::uint16_t index = 0;

  static constexpr Symbol variable(int i) {
    return {SymbolKind::Variable, 0, static_cast<std::uint16_t>(i)};
  }
  static constexpr Symbol parameter(int i) {
    return {SymbolKind::Parameter, 0, static_cast<std::uint16_t>(i)};
  }
  static constexpr Symbol operation(int op_index, int arity) {
    return {SymbolKind::Operation, static_cast<std::uint8_t>(arity),
            static_cast<std::uint16_t>(op_index)};
  }
  /// Leaf symbol from its position in the 0-ET family (variables first).
  static constexpr Symbol leaf(int leaf_index, int n_vars) {
    return leaf_index < n_vars ? variable(leaf_index) : parameter(leaf_index - n_vars);
  }

  constexpr bool is_leaf() const { return kind != SymbolKind::Operation; }
  friend constexpr bool operator==(const Symbol&, const Symbol&) = default;
};

/// A closed-form expression stored as its prefix (pre-order) node sequence.
///
/// The prefix layout makes every subtree a contiguous range: the subtree
/// rooted at `pos` spans [pos, subtree_end(pos)). Trees are plain values.
class ExpressionTree {
 public:
  ExpressionTree() = default;
  explicit ExpressionTree(std::vector<Symbol> nodes) : nodes_(std::move(nodes)) {
    if (!well_formed(nodes_)) throw std::invalid_argument("malformed prefix node sequence");
  }

  static ExpressionTree leaf(Symbol s) { return ExpressionTree(std::vector<Symbol>{s}); }

  static ExpressionTree apply(Symbol op, std::span<const ExpressionTree> children) {
    if (op.is_leaf() || children.size() != op.arity)
      throw std::invalid_argument("child count does not match arity");
    std::vector<Symbol> nodes{op};
    for (const auto& c : children) nodes.insert(nodes.end(), c.nodes_.begin(), c.nodes_.end());
    return ExpressionTree(std::move(nodes));
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<Symbol>& nodes() const { return nodes_; }
  const Symbol& operator[](std::size_t pos) const { return nodes_[pos]; }
  const Symbol& root() const { return nodes_.front(); }

  std::size_t subtree_end(std::size_t pos) const {
    std::size_t need = 1;
    while (need > 0) {
      need += nodes_[pos].arity;
      --need;
      ++pos;
    }
    return pos;
  }

  std::size_t subtree_size(std::size_t pos) const { return subtree_end(pos) - pos; }

  ExpressionTree subtree(std::size_t pos) const {
    ExpressionTree t;
    t.nodes_.assign(nodes_.begin() + static_cast<std::ptrdiff_t>(pos),
                    nodes_.begin() + static_cast<std::ptrdiff_t>(subtree_end(pos)));
    return t;
  }

  /// Copy of this tree with the subtree at `pos` swapped for `replacement`.
  ExpressionTree replace_subtree(std::size_t pos, const ExpressionTree& replacement) const {
    const auto end = subtree_end(pos);
    ExpressionTree t;
    t.nodes_.reserve(nodes_.size() - (end - pos) + replacement.size());
    t.nodes_.insert(t.nodes_.end(), nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(pos));
    t.nodes_.insert(t.nodes_.end(), replacement.nodes_.begin(), replacement.nodes_.end());
    t.nodes_.insert(t.nodes_.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(end), nodes_.end());
    return t;
  }

  /// Copy with the single node at `pos` relabelled (same arity required).
  ExpressionTree replace_node(std::size_t pos, Symbol s) const {
    if (s.arity != nodes_[pos].arity) throw std::invalid_argument("replacement arity differs");
    ExpressionTree t = *this;
    t.nodes_[pos] = s;
    return t;
  }

  std::vector<std::size_t> children(std::size_t pos) const {
    std::vector<std::size_t> out;
    std::size_t c = pos + 1;
    for (int i = 0; i < nodes_[pos].arity; ++i) {
      out.push_back(c);
      c = subtree_end(c);
    }
    return out;
  }

  std::size_t operation_count() const {
    return static_cast<std::size_t>(std::count_if(
        nodes_.begin(), nodes_.end(), [](const Symbol& s) { return !s.is_leaf(); }));
  }

  /// Sorted distinct parameter indices occurring in the tree.
  std::vector<int> parameters_used() const {
    std::vector<int> out;
    for (const auto& s : nodes_)
      if (s.kind == SymbolKind::Parameter) out.push_back(s.index);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  friend bool operator==(const ExpressionTree&, const ExpressionTree&) = default;

  std::size_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& s : nodes_) {
      const std::uint64_t v = (static_cast<std::uint64_t>(s.kind) << 24) |
                              (static_cast<std::uint64_t>(s.arity) << 16) | s.index;
      h = (h ^ v) * 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }

  static bool well_formed(const std::vector<Symbol>& nodes) {
    if (nodes.empty()) return false;
    long need = 1;
    for (const auto& s : nodes) {
      if (need <= 0) return false;
      if (s.is_leaf() != (s.arity == 0)) return false;
      need += s.arity - 1;
    }
    return need == 0;
  }

 private:
  std::vector<Symbol> nodes_;
};

/// Throws std::invalid_argument unless every symbol is valid for `opset` and
/// the tree fits in `max_size` nodes.
inline void validate(const ExpressionTree& t, const OperationSet& opset,
                     std::size_t max_size = kDefaultMaxTreeSize) {
  if (t.empty()) throw std::invalid_argument("empty expression tree");
  if (t.size() > max_size)
    throw std::invalid_argument("tree has " + std::to_string(t.size()) + " nodes, limit is " +
                                std::to_string(max_size));
  for (const auto& s : t.nodes()) {
    switch (s.kind) {
      case SymbolKind::Operation:
        if (s.index >= opset.size() || opset.op(s.index).arity != s.arity)
          throw std::invalid_argument("operation symbol not in operation set");
        break;
      case SymbolKind::Variable:
        if (s.index >= opset.n_vars()) throw std::invalid_argument("variable index out of range");
        break;
      case SymbolKind::Parameter:
        if (s.index >= opset.n_params()) throw std::invalid_argument("parameter index out of range");
        break;
    }
  }
}

/// Per-operation occurrence counts n_o, indexed like the OperationSet.
using OpCountVector = std::vector<int>;

inline OpCountVector count_operations(const ExpressionTree& t, std::size_t n_ops) {
  OpCountVector counts(n_ops, 0);
  for (const auto& s : t.nodes())
    if (!s.is_leaf()) ++counts.at(s.index);
  return counts;
}

inline OpCountVector count_operations(const ExpressionTree& t, const OperationSet& opset) {
  return count_operations(t, opset.size());
}

}  // namespace bms

template <>
struct std::hash<bms::ExpressionTree> {
  std::size_t operator()(const bms::ExpressionTree& t) const noexcept { return t.hash(); }
};
