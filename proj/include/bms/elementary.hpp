#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "bms/opset.hpp"
#include "bms/tree.hpp"

namespace bms {

// An elementary tree (ET) holds at most one operation. A k-ET is either a
// bare leaf (k = 0) or a k-ary operation whose children are all leaves.

/// Number of distinct k-ETs: s_0 = V + P, s_1 = U * s_0, s_2 = B * s_0^2.
inline std::size_t count_elementary_trees(const OperationSet& opset, int order) {
  const auto leaves = static_cast<std::size_t>(opset.n_leaves());
  switch (order) {
    case 0: return leaves;
    case 1: return opset.unary().size() * leaves;
    case 2: return opset.binary().size() * leaves * leaves;
    default: throw std::invalid_argument("elementary tree order must be 0, 1 or 2");
  }
}

/// The `index`-th k-ET. Indices run operation-major, then leaf slots left to
/// right, variables before parameters.
inline ExpressionTree elementary_tree(const OperationSet& opset, int order, std::size_t index) {
  const auto leaves = static_cast<std::size_t>(opset.n_leaves());
  if (index >= count_elementary_trees(opset, order))
    throw std::out_of_range("elementary tree index out of range");
  const int nv = opset.n_vars();
  const auto leaf = [&](std::size_t i) { return Symbol::leaf(static_cast<int>(i), nv); };
  switch (order) {
    case 0: return ExpressionTree::leaf(leaf(index));
    case 1: {
      const int op = opset.unary()[index / leaves];
      return ExpressionTree({Symbol::operation(op, 1), leaf(index % leaves)});
    }
    default: {
      const int op = opset.binary()[index / (leaves * leaves)];
      const std::size_t rest = index % (leaves * leaves);
      return ExpressionTree({Symbol::operation(op, 2), leaf(rest / leaves), leaf(rest % leaves)});
    }
  }
}

/// Order of the subtree rooted at `pos` if it is an ET, otherwise -1.
inline int elementary_order_at(const ExpressionTree& t, std::size_t pos) {
  const Symbol& s = t[pos];
  if (s.is_leaf()) return 0;
  for (int i = 1; i <= s.arity; ++i)
    if (!t[pos + static_cast<std::size_t>(i)].is_leaf()) return -1;
  return s.arity;
}

/// Positions whose subtree is exactly a k-ET. Every leaf is a 0-ET site,
/// including leaves that sit under a 1-ET or 2-ET.
inline std::vector<std::size_t> list_elementary_subtrees(const ExpressionTree& t, int order) {
  std::vector<std::size_t> out;
  for (std::size_t pos = 0; pos < t.size(); ++pos)
    if (elementary_order_at(t, pos) == order) out.push_back(pos);
  return out;
}

/// Ω_0, Ω_1, Ω_2 for a tree in one pass.
inline std::array<std::size_t, 3> elementary_site_counts(const ExpressionTree& t) {
  std::array<std::size_t, 3> c{0, 0, 0};
  for (std::size_t pos = 0; pos < t.size(); ++pos) {
    const int o = elementary_order_at(t, pos);
    if (o >= 0) ++c[static_cast<std::size_t>(o)];
  }
  return c;
}

/// Candidate new roots for root addition: each unary operation, and each
/// binary operation with every leaf in its right slot. The current tree
/// becomes the leftmost child.
struct RootCandidate {
  int op = 0;
  int arity = 1;
  Symbol right;  // only meaningful for arity 2
};

inline std::vector<RootCandidate> root_catalog(const OperationSet& opset) {
  std::vector<RootCandidate> out;
  for (int op : opset.unary()) out.push_back({op, 1, {}});
  for (int op : opset.binary())
    for (int leaf = 0; leaf < opset.n_leaves(); ++leaf)
      out.push_back({op, 2, Symbol::leaf(leaf, opset.n_vars())});
  return out;
}

inline ExpressionTree add_root(const ExpressionTree& t, const RootCandidate& r) {
  std::vector<Symbol> nodes;
  nodes.reserve(t.size() + static_cast<std::size_t>(r.arity));
  nodes.push_back(Symbol::operation(r.op, r.arity));
  nodes.insert(nodes.end(), t.nodes().begin(), t.nodes().end());
  if (r.arity == 2) nodes.push_back(r.right);
  return ExpressionTree(std::move(nodes));
}

/// Root removal is possible when the root is an operation and all of its
/// children except the leftmost are leaves.
inline bool root_removable(const ExpressionTree& t) {
  if (t.root().is_leaf()) return false;
  const auto kids = t.children(0);
  for (std::size_t i = 1; i < kids.size(); ++i)
    if (!t[kids[i]].is_leaf()) return false;
  return true;
}

inline ExpressionTree remove_root(const ExpressionTree& t) { return t.subtree(1); }

}  // namespace bms
