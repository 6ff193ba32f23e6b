#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include "bms/elementary.hpp"
#include "bms/opset.hpp"
#include "bms/tree.hpp"

namespace bms {

enum class MoveKind { None, NodeReplacement, RootAddition, RootRemoval, ElementaryReplacement, Swap, Init };

inline std::string_view move_name(MoveKind k) {
  switch (k) {
    case MoveKind::None: return "none";
    case MoveKind::NodeReplacement: return "NR";
    case MoveKind::RootAddition: return "RA";
    case MoveKind::RootRemoval: return "RR";
    case MoveKind::ElementaryReplacement: return "ETR";
    case MoveKind::Swap: return "swap";
    case MoveKind::Init: return "init";
  }
  return "none";
}

/// Relative frequencies of the three move classes (root moves cover RA+RR).
struct MoveFrequencies {
  double root = 0.05;
  double node = 0.45;
  double etr = 0.50;

  double total() const { return root + node + etr; }
  void check() const {
    if (root < 0 || node < 0 || etr < 0 || total() <= 0)
      throw std::invalid_argument("move frequencies must be nonnegative and not all zero");
  }
};

/// A proposed transition. `null` proposals leave the chain where it is.
/// log_g_ratio = log g(old | new) - log g(new | old).
struct Proposal {
  MoveKind kind = MoveKind::None;
  bool null = true;
  ExpressionTree tree;
  double log_g_ratio = 0;
};

/// One deterministic proposal path with its total proposal probability.
struct MovePath {
  MoveKind kind = MoveKind::None;
  bool null = true;
  ExpressionTree tree;
  double probability = 0;
  double log_g_ratio = 0;
};

/// Precomputed move machinery for one operation set and size limit.
class MoveSpace {
 public:
  MoveSpace(OperationSet opset, std::size_t max_size = kDefaultMaxTreeSize)
      : opset_(std::move(opset)), max_size_(max_size), catalog_(root_catalog(opset_)) {
    for (int k = 0; k < 3; ++k) et_count_[static_cast<std::size_t>(k)] = count_elementary_trees(opset_, k);
  }

  const OperationSet& opset() const { return opset_; }
  std::size_t max_size() const { return max_size_; }
  std::size_t n_root() const { return catalog_.size(); }
  const std::vector<RootCandidate>& catalog() const { return catalog_; }
  std::size_t et_count(int order) const { return et_count_[static_cast<std::size_t>(order)]; }

  /// Order pairs (o_i, o_f) the ETR move may pick on a tree.
  std::vector<std::pair<int, int>> admissible_pairs(const ExpressionTree& t,
                                                    const std::array<std::size_t, 3>& omega) const {
    std::vector<std::pair<int, int>> out;
    for (int oi = 0; oi < 3; ++oi)
      for (int of = 0; of < 3; ++of)
        if (omega[static_cast<std::size_t>(oi)] > 0 && et_count(of) > 0 &&
            t.size() + static_cast<std::size_t>(of) <= max_size_ + static_cast<std::size_t>(oi))
          out.emplace_back(oi, of);
    return out;
  }

  /// Number of same-arity alternatives for the node at `pos`.
  std::size_t node_alternatives(const Symbol& s) const {
    const std::size_t n = same_arity_count(s.arity);
    return n > 0 ? n - 1 : 0;
  }

  template <class Rng>
  Proposal propose_node_replacement(const ExpressionTree& t, Rng& rng) const {
    Proposal p;
    p.kind = MoveKind::NodeReplacement;
    const std::size_t pos = uniform(rng, t.size());
    const Symbol& s = t[pos];
    const std::size_t alts = node_alternatives(s);
    if (alts == 0) return p;
    const std::size_t r = uniform(rng, alts);
    const std::size_t cur = class_index(s);
    p.tree = t.replace_node(pos, class_symbol(s.arity, r < cur ? r : r + 1));
    p.null = false;
    return p;
  }

  template <class Rng>
  Proposal propose_root_move(const ExpressionTree& t, Rng& rng) const {
    std::bernoulli_distribution coin(0.5);
    return coin(rng) ? propose_root_addition(t, rng) : propose_root_removal(t);
  }

  template <class Rng>
  Proposal propose_root_addition(const ExpressionTree& t, Rng& rng) const {
    Proposal p;
    p.kind = MoveKind::RootAddition;
    if (catalog_.empty()) return p;
    const auto& r = catalog_[uniform(rng, catalog_.size())];
    if (t.size() + static_cast<std::size_t>(r.arity) > max_size_) return p;
    p.tree = add_root(t, r);
    p.null = false;
    p.log_g_ratio = std::log(static_cast<double>(catalog_.size()));
    return p;
  }

  Proposal propose_root_removal(const ExpressionTree& t) const {
    Proposal p;
    p.kind = MoveKind::RootRemoval;
    if (!root_removable(t)) return p;
    p.tree = remove_root(t);
    p.null = false;
    p.log_g_ratio = -std::log(static_cast<double>(catalog_.size()));
    return p;
  }

  template <class Rng>
  Proposal propose_etr(const ExpressionTree& t, Rng& rng) const {
    Proposal p;
    p.kind = MoveKind::ElementaryReplacement;
    const auto omega = elementary_site_counts(t);
    const auto pairs = admissible_pairs(t, omega);
    if (pairs.empty()) return p;
    const auto [oi, of] = pairs[uniform(rng, pairs.size())];
    const auto sites = list_elementary_subtrees(t, oi);
    const std::size_t pos = sites[uniform(rng, sites.size())];
    const std::size_t idx = uniform(rng, et_count(of));
    p.tree = t.replace_subtree(pos, elementary_tree(opset_, of, idx));
    p.null = false;
    p.log_g_ratio = etr_log_g_ratio(t, omega, pairs.size(), oi, of, p.tree);
    return p;
  }

  /// log[(n_if Ω_i s_f) / (n_fi Ω_f s_i)] for an ETR from `before` to `after`.
  double etr_log_g_ratio(const ExpressionTree& before, const std::array<std::size_t, 3>& omega_before,
                         std::size_t n_if, int oi, int of, const ExpressionTree& after) const {
    (void)before;
    const auto omega_after = elementary_site_counts(after);
    const std::size_t n_fi = admissible_pairs(after, omega_after).size();
    const double forward = static_cast<double>(n_if) * static_cast<double>(omega_before[static_cast<std::size_t>(oi)]) *
                           static_cast<double>(et_count(of));
    const double backward = static_cast<double>(n_fi) * static_cast<double>(omega_after[static_cast<std::size_t>(of)]) *
                            static_cast<double>(et_count(oi));
    return std::log(forward) - std::log(backward);
  }

  /// Draws a move class with the given frequencies, then a proposal.
  template <class Rng>
  Proposal propose(const ExpressionTree& t, const MoveFrequencies& f, Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, f.total());
    const double r = u(rng);
    if (r < f.root) return propose_root_move(t, rng);
    if (r < f.root + f.node) return propose_node_replacement(t, rng);
    return propose_etr(t, rng);
  }

  /// Every proposal path out of `t` with its probability under `f`. Paths
  /// that produce null proposals are merged per move class. Probabilities
  /// sum to one.
  std::vector<MovePath> enumerate_moves(const ExpressionTree& t, const MoveFrequencies& f) const {
    std::vector<MovePath> out;
    const double p_root = f.root / f.total(), p_node = f.node / f.total(), p_etr = f.etr / f.total();

    // node replacement
    for (std::size_t pos = 0; pos < t.size(); ++pos) {
      const Symbol& s = t[pos];
      const std::size_t alts = node_alternatives(s);
      const double p_pos = p_node / static_cast<double>(t.size());
      if (alts == 0) {
        out.push_back({MoveKind::NodeReplacement, true, {}, p_pos, 0});
        continue;
      }
      const std::size_t cur = class_index(s);
      for (std::size_t r = 0; r < alts; ++r)
        out.push_back({MoveKind::NodeReplacement, false, t.replace_node(pos, class_symbol(s.arity, r < cur ? r : r + 1)),
                       p_pos / static_cast<double>(alts), 0});
    }

    // root addition / removal (fair coin)
    const double log_nroot = catalog_.empty() ? 0.0 : std::log(static_cast<double>(catalog_.size()));
    if (catalog_.empty()) {
      out.push_back({MoveKind::RootAddition, true, {}, p_root / 2, 0});
    } else {
      for (const auto& r : catalog_) {
        const double pr = p_root / 2 / static_cast<double>(catalog_.size());
        if (t.size() + static_cast<std::size_t>(r.arity) > max_size_)
          out.push_back({MoveKind::RootAddition, true, {}, pr, 0});
        else
          out.push_back({MoveKind::RootAddition, false, add_root(t, r), pr, log_nroot});
      }
    }
    if (root_removable(t))
      out.push_back({MoveKind::RootRemoval, false, remove_root(t), p_root / 2, -log_nroot});
    else
      out.push_back({MoveKind::RootRemoval, true, {}, p_root / 2, 0});

    // elementary tree replacement
    const auto omega = elementary_site_counts(t);
    const auto pairs = admissible_pairs(t, omega);
    if (pairs.empty()) {
      out.push_back({MoveKind::ElementaryReplacement, true, {}, p_etr, 0});
    } else {
      for (const auto& [oi, of] : pairs) {
        const auto sites = list_elementary_subtrees(t, oi);
        const double p = p_etr / static_cast<double>(pairs.size()) / static_cast<double>(sites.size()) /
                         static_cast<double>(et_count(of));
        for (std::size_t pos : sites)
          for (std::size_t idx = 0; idx < et_count(of); ++idx) {
            ExpressionTree nt = t.replace_subtree(pos, elementary_tree(opset_, of, idx));
            const double lg = etr_log_g_ratio(t, omega, pairs.size(), oi, of, nt);
            out.push_back({MoveKind::ElementaryReplacement, false, std::move(nt), p, lg});
          }
      }
    }
    return out;
  }

 private:
  template <class Rng>
  static std::size_t uniform(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }

  std::size_t same_arity_count(int arity) const {
    switch (arity) {
      case 0: return static_cast<std::size_t>(opset_.n_leaves());
      case 1: return opset_.unary().size();
      default: return opset_.binary().size();
    }
  }

  /// Position of a symbol within its arity class (leaves: variables first).
  std::size_t class_index(const Symbol& s) const {
    if (s.kind == SymbolKind::Variable) return s.index;
    if (s.kind == SymbolKind::Parameter) return static_cast<std::size_t>(opset_.n_vars()) + s.index;
    const auto& cls = s.arity == 1 ? opset_.unary() : opset_.binary();
    for (std::size_t i = 0; i < cls.size(); ++i)
      if (cls[i] == s.index) return i;
    throw std::logic_error("operation missing from its arity class");
  }

  Symbol class_symbol(int arity, std::size_t i) const {
    if (arity == 0) return Symbol::leaf(static_cast<int>(i), opset_.n_vars());
    const auto& cls = arity == 1 ? opset_.unary() : opset_.binary();
    return Symbol::operation(cls[i], arity);
  }

  OperationSet opset_;
  std::size_t max_size_;
  std::vector<RootCandidate> catalog_;
  std::array<std::size_t, 3> et_count_{};
};

/// Metropolis-Hastings acceptance probability min{1, exp(-delta + log_g)}.
/// `delta` is the (tempered) description-length difference new - old.
inline double acceptance_probability(double delta, double log_g_ratio) {
  if (std::isnan(delta) || (std::isinf(delta) && delta > 0)) return 0.0;
  const double a = -delta + log_g_ratio;
  return a >= 0 ? 1.0 : std::exp(a);
}

/// Tempered description-length difference between two states. Moving out of
/// an invalid state into a valid one is always favourable; two invalid states
/// compare as equal so a chain can still drift out of an invalid region.
inline double tempered_delta(double dl_old, double dl_new, double bic_old, double bic_new, double e_old,
                             double e_new, double temperature) {
  const bool old_ok = std::isfinite(dl_old), new_ok = std::isfinite(dl_new);
  if (!new_ok && old_ok) return std::numeric_limits<double>::infinity();
  if (new_ok && !old_ok) return -std::numeric_limits<double>::infinity();
  if (!new_ok && !old_ok) return e_new - e_old;
  return (bic_new - bic_old) / (2.0 * temperature) + (e_new - e_old);
}

}  // namespace bms
