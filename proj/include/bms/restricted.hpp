#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bms/canonical.hpp"
#include "bms/dataset.hpp"
#include "bms/model_fit.hpp"
#include "bms/moves.hpp"
#include "bms/opset.hpp"
#include "bms/parse.hpp"
#include "bms/prior.hpp"
#include "bms/sampler.hpp"
#include "bms/synthetic.hpp"
#include "bms/tree.hpp"

namespace bms {

namespace detail {
inline void trees_of_size(const OperationSet& opset, std::size_t n, std::vector<std::vector<ExpressionTree>>& memo) {
  std::vector<ExpressionTree> out;
  if (n == 1) {
    for (int l = 0; l < opset.n_leaves(); ++l) out.push_back(ExpressionTree::leaf(Symbol::leaf(l, opset.n_vars())));
  } else {
    for (int op : opset.unary())
      for (const auto& c : memo[n - 1]) {
        const ExpressionTree kids[] = {c};
        out.push_back(ExpressionTree::apply(Symbol::operation(op, 1), kids));
      }
    for (int op : opset.binary())
      for (std::size_t a = 1; a + 1 < n; ++a)
        for (const auto& l : memo[a])
          for (const auto& r : memo[n - 1 - a]) {
            const ExpressionTree kids[] = {l, r};
            out.push_back(ExpressionTree::apply(Symbol::operation(op, 2), kids));
          }
  }
  memo[n] = std::move(out);
}
}  // namespace detail

/// Every tree over `opset` with at most `max_size` nodes, smallest first.
inline std::vector<ExpressionTree> enumerate_trees(const OperationSet& opset, std::size_t max_size) {
  std::vector<std::vector<ExpressionTree>> memo(max_size + 1);
  std::vector<ExpressionTree> all;
  for (std::size_t n = 1; n <= max_size; ++n) {
    detail::trees_of_size(opset, n, memo);
    all.insert(all.end(), memo[n].begin(), memo[n].end());
  }
  return all;
}

/// A finite, exhaustively enumerated model space.
class RestrictedSpace {
 public:
  RestrictedSpace(OperationSet opset, std::size_t max_size)
      : opset_(std::move(opset)), max_size_(max_size), trees_(enumerate_trees(opset_, max_size)) {
    for (std::size_t i = 0; i < trees_.size(); ++i) index_.emplace(trees_[i], i);
  }

  const OperationSet& opset() const { return opset_; }
  std::size_t max_size() const { return max_size_; }
  std::size_t size() const { return trees_.size(); }
  const ExpressionTree& tree(std::size_t i) const { return trees_[i]; }
  const std::vector<ExpressionTree>& trees() const { return trees_; }

  std::size_t index_of(const ExpressionTree& t) const {
    auto it = index_.find(t);
    if (it == index_.end()) throw std::out_of_range("tree outside the restricted space");
    return it->second;
  }

 private:
  OperationSet opset_;
  std::size_t max_size_;
  std::vector<ExpressionTree> trees_;
  std::unordered_map<ExpressionTree, std::size_t> index_;
};

/// Scores of every tree in the space and pi proportional to exp(-L).
struct ExactPosterior {
  std::vector<FittedModel> models;
  std::vector<double> prob;
};

inline ExactPosterior exact_posterior(const RestrictedSpace& space, const ModelScorer& scorer) {
  ExactPosterior post;
  post.models.reserve(space.size());
  double lmin = kInfinity;
  for (const auto& t : space.trees()) {
    post.models.push_back(scorer.score(t));
    lmin = std::min(lmin, post.models.back().description_length);
  }
  if (!std::isfinite(lmin)) throw std::runtime_error("no tree in the space has a finite description length");
  post.prob.resize(space.size());
  double z = 0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double l = post.models[i].description_length;
    post.prob[i] = std::isfinite(l) ? std::exp(-(l - lmin)) : 0.0;
    z += post.prob[i];
  }
  for (double& p : post.prob) p /= z;
  return post;
}

/// Dense one-step transition matrix of the Metropolis-Hastings chain at the
/// given temperature, assembled from every proposal path.
inline std::vector<std::vector<double>> transition_matrix(const RestrictedSpace& space, const MoveSpace& moves,
                                                          const MoveFrequencies& freqs,
                                                          const std::vector<FittedModel>& models,
                                                          double temperature = 1.0) {
  const std::size_t n = space.size();
  std::vector<std::vector<double>> P(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double moved = 0;
    for (const auto& path : moves.enumerate_moves(space.tree(i), freqs)) {
      if (path.null) continue;
      const std::size_t j = space.index_of(path.tree);
      const FittedModel& a = models[i];
      const FittedModel& b = models[j];
      const double delta = tempered_delta(a.description_length, b.description_length, a.bic, b.bic, a.prior_energy,
                                          b.prior_energy, temperature);
      const double w = path.probability * acceptance_probability(delta, path.log_g_ratio);
      if (j != i) {
        P[i][j] += w;
        moved += w;
      }
    }
    P[i][i] = 1.0 - moved;
  }
  return P;
}

/// max_ij |pi_i P_ij - pi_j P_ji|.
inline double detailed_balance_error(const std::vector<std::vector<double>>& P, const std::vector<double>& pi) {
  double err = 0;
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = i + 1; j < P.size(); ++j) err = std::max(err, std::fabs(pi[i] * P[i][j] - pi[j] * P[j][i]));
  return err;
}

/// max_i |sum_j P_ij - 1| together with the smallest entry.
inline std::pair<double, double> stochasticity_error(const std::vector<std::vector<double>>& P) {
  double err = 0, lo = kInfinity;
  for (const auto& row : P) {
    double s = 0;
    for (double v : row) {
      s += v;
      lo = std::min(lo, v);
    }
    err = std::max(err, std::fabs(s - 1.0));
  }
  return {err, lo};
}

/// max_j |(pi P)_j - pi_j|.
inline double stationarity_error(const std::vector<std::vector<double>>& P, const std::vector<double>& pi) {
  std::vector<double> next(pi.size(), 0.0);
  for (std::size_t i = 0; i < P.size(); ++i)
    for (std::size_t j = 0; j < P.size(); ++j) next[j] += pi[i] * P[i][j];
  double err = 0;
  for (std::size_t j = 0; j < pi.size(); ++j) err = std::max(err, std::fabs(next[j] - pi[j]));
  return err;
}

inline double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("distributions differ in size");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::fabs(p[i] - q[i]);
  return s / 2.0;
}

/// The equilibrium experiment: operations {+, sin}, one variable, one
/// parameter, at most seven nodes, uniform prior, duplicates allowed.
struct EquilibriumConfig {
  bool with_data = true;
  std::size_t n_steps = 1000000;
  std::size_t burn_in = 1000;
  std::size_t ladder_count = 1;
  double ladder_base = 1.05;
  std::size_t max_size = 7;
  double offset = 1.0;  // y = offset + x + sin(x) + noise
  std::size_t n_points = 20;
  double x_low = -4.0, x_high = 4.0;
  double sigma = 0.5;
  double threshold = 0.05;
  std::uint64_t seed = 0;
  MoveFrequencies freqs;
  FitConfig fit;
};

struct EquilibriumRow {
  std::string key;
  std::string expression;  // first tree with this key
  std::size_t n_trees = 0;
  double description_length = kInfinity;
  double exact = 0;
  double empirical = 0;
};

struct EquilibriumReport {
  std::size_t n_trees = 0;
  std::size_t n_keys = 0;
  std::size_t n_samples = 0;
  double tv_trees = 0;
  double tv_keys = 0;
  double threshold = 0.05;
  std::vector<EquilibriumRow> table;  // one row per canonical key
  bool pass() const { return tv_trees < threshold; }
};

inline OperationSet equilibrium_opset() { return OperationSet({"+", "sin"}, 1, 1); }

/// Data y = offset + x + sin(x) + N(0, sigma) with x uniform in [x_low, x_high].
inline Dataset equilibrium_data(const EquilibriumConfig& cfg) {
  const OperationSet opset = equilibrium_opset();
  const ExpressionTree f = parse_expression("(+ (+ p1 x1) (sin x1))", opset);
  ExpressionDataSpec spec;
  spec.theta = {cfg.offset};
  spec.ranges = {{cfg.x_low, cfg.x_high}};
  spec.n = cfg.n_points;
  spec.sigma = cfg.sigma;
  spec.seed = stream_seed(cfg.seed, 0xDA7AULL);
  return generate_expression_data(f, opset, spec);
}

/// Runs the experiment; `observe` (optional) sees every recorded T = 1 state.
inline EquilibriumReport run_equilibrium(const EquilibriumConfig& cfg,
                                         const std::function<void(const ChainState&)>& observe = {}) {
  const OperationSet opset = equilibrium_opset();
  const RestrictedSpace space(opset, cfg.max_size);
  std::optional<Dataset> data;
  if (cfg.with_data) data = equilibrium_data(cfg);

  SamplerConfig sc;
  sc.n_steps = cfg.n_steps;
  sc.burn_in = cfg.burn_in;
  sc.ladder_count = cfg.ladder_count;
  sc.ladder_base = cfg.ladder_base;
  sc.max_tree_size = cfg.max_size;
  sc.forbid_duplicates = false;
  sc.freqs = cfg.freqs;
  sc.seed = cfg.seed;
  sc.fit = cfg.fit;
  const Sampler sampler(opset, data, PriorParams::uniform(opset), sc);
  const ExactPosterior post = exact_posterior(space, sampler.scorer());

  std::vector<double> visits(space.size(), 0.0);
  std::size_t n = 0;
  RunHooks hooks;
  hooks.store_rows = false;
  hooks.on_state = [&](const ChainState& c, std::size_t, std::size_t) {
    visits[space.index_of(c.tree)] += 1;
    ++n;
    if (observe) observe(c);
  };
  sampler.run(hooks);
  for (double& v : visits) v /= static_cast<double>(n);

  EquilibriumReport rep;
  rep.n_trees = space.size();
  rep.n_samples = n;
  rep.threshold = cfg.threshold;
  rep.tv_trees = total_variation(post.prob, visits);

  std::map<std::string, std::size_t> row_of;
  std::vector<double> exact_keys, emp_keys;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const std::string key = canonical_key(space.tree(i), opset);
    auto [it, inserted] = row_of.try_emplace(key, rep.table.size());
    if (inserted) {
      EquilibriumRow r;
      r.key = key;
      r.expression = render(space.tree(i), opset);
      r.description_length = post.models[i].description_length;
      rep.table.push_back(r);
    }
    EquilibriumRow& r = rep.table[it->second];
    ++r.n_trees;
    r.exact += post.prob[i];
    r.empirical += visits[i];
  }
  for (const auto& r : rep.table) {
    exact_keys.push_back(r.exact);
    emp_keys.push_back(r.empirical);
  }
  rep.n_keys = rep.table.size();
  rep.tv_keys = total_variation(exact_keys, emp_keys);
  std::stable_sort(rep.table.begin(), rep.table.end(),
                   [](const EquilibriumRow& a, const EquilibriumRow& b) { return a.exact > b.exact; });
  return rep;
}

}  // namespace bms
