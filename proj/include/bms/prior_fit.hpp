#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "bms/moves.hpp"
#include "bms/opset.hpp"
#include "bms/prior.hpp"
#include "bms/sampler.hpp"
#include "bms/tree.hpp"

namespace bms {

/// Settings for drawing expressions from the prior with the data-free chain.
struct PriorSampleConfig {
  std::size_t n_chains = 8;       // independent chains, drawn round-robin
  std::size_t burn_in = 20000;    // steps per chain before the first draw
  std::size_t thinning = 10;      // steps per chain between draws
  std::size_t max_tree_size = kDefaultMaxTreeSize;
  MoveFrequencies freqs;
  std::uint64_t seed = 0;
};

/// A prior-only Metropolis-Hastings chain (T = infinity: the BIC term is
/// absent, so acceptance depends on the prior energy alone).
class PriorChain {
 public:
  PriorChain(const MoveSpace& space, const PriorParams& params, std::uint64_t seed)
      : space_(&space), params_(&params), rng_(seed) {
    const int v = std::uniform_int_distribution<int>(0, space.opset().n_vars() - 1)(rng_);
    tree_ = ExpressionTree::leaf(Symbol::variable(v));
    counts_ = count_operations(tree_, space.opset().size());
    energy_ = prior_energy(counts_, params);
  }

  void step(const MoveFrequencies& f) {
    Proposal p = space_->propose(tree_, f, rng_);
    if (p.null) return;
    OpCountVector c = count_operations(p.tree, space_->opset().size());
    const double e = prior_energy(c, *params_);
    const double a = acceptance_probability(e - energy_, p.log_g_ratio);
    if (a <= 0.0) return;
    if (a < 1.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng_) >= a) return;
    tree_ = std::move(p.tree);
    counts_ = std::move(c);
    energy_ = e;
  }

  /// Switches to new hyperparameters, keeping the current tree.
  void rebind(const PriorParams& params) {
    params_ = &params;
    energy_ = prior_energy(counts_, params);
  }

  const ExpressionTree& tree() const { return tree_; }
  const OpCountVector& counts() const { return counts_; }
  double energy() const { return energy_; }

 private:
  const MoveSpace* space_;
  const PriorParams* params_;
  std::mt19937_64 rng_;
  ExpressionTree tree_;
  OpCountVector counts_;
  double energy_ = 0;
};

/// A set of data-free chains that persists between batches. Chains are burned
/// in once; after `rebind` to new hyperparameters they continue from their
/// current trees, so successive batches of a fit carry no restart bias.
class PriorSampler {
 public:
  PriorSampler(const PriorParams& params, const OperationSet& opset, const PriorSampleConfig& cfg)
      : cfg_(cfg), space_(opset, cfg.max_tree_size), params_(params.matches(opset) ? params : params.bound_to(opset)) {
    if (cfg.n_chains == 0 || cfg.thinning == 0) throw std::invalid_argument("prior sampling needs chains and thinning >= 1");
    chains_.reserve(cfg.n_chains);
    for (std::size_t c = 0; c < cfg.n_chains; ++c) {
      chains_.emplace_back(space_, params_, stream_seed(cfg.seed, 0x5052494fULL, c + 1));
      for (std::size_t s = 0; s < cfg.burn_in; ++s) chains_.back().step(cfg.freqs);
    }
  }
  PriorSampler(const PriorSampler&) = delete;
  PriorSampler& operator=(const PriorSampler&) = delete;

  void rebind(const PriorParams& params) {
    params_ = params.matches(space_.opset()) ? params : params.bound_to(space_.opset());
    for (auto& ch : chains_) ch.rebind(params_);
  }

  /// Visits the next `n` draws in order, round-robin over the chains.
  void draw(std::size_t n, const std::function<void(const ExpressionTree&, const OpCountVector&)>& visit) {
    for (std::size_t i = 0; i < n; ++i) {
      PriorChain& ch = chains_[next_];
      next_ = (next_ + 1) % chains_.size();
      for (std::size_t s = 0; s < cfg_.thinning; ++s) ch.step(cfg_.freqs);
      visit(ch.tree(), ch.counts());
    }
  }

  std::vector<OpCountVector> draw_counts(std::size_t n) {
    std::vector<OpCountVector> out;
    out.reserve(n);
    draw(n, [&](const ExpressionTree&, const OpCountVector& c) { out.push_back(c); });
    return out;
  }

 private:
  PriorSampleConfig cfg_;
  MoveSpace space_;
  PriorParams params_;
  std::vector<PriorChain> chains_;
  std::size_t next_ = 0;
};

/// Visits `n` prior draws in order; `visit(tree, counts)`.
inline void for_each_prior_sample(const PriorParams& params, const OperationSet& opset, std::size_t n,
                                  const PriorSampleConfig& cfg,
                                  const std::function<void(const ExpressionTree&, const OpCountVector&)>& visit) {
  PriorSampler(params, opset, cfg).draw(n, visit);
}

/// n expressions drawn from the prior by the data-free chain.
inline std::vector<ExpressionTree> sample_from_prior(const PriorParams& params, const OperationSet& opset,
                                                     std::size_t n, const PriorSampleConfig& cfg = {}) {
  std::vector<ExpressionTree> out;
  out.reserve(n);
  for_each_prior_sample(params, opset, n, cfg, [&](const ExpressionTree& t, const OpCountVector&) { out.push_back(t); });
  return out;
}

/// Operation-count vectors of n prior draws.
inline std::vector<OpCountVector> sample_prior_counts(const PriorParams& params, const OperationSet& opset,
                                                      std::size_t n, const PriorSampleConfig& cfg = {}) {
  std::vector<OpCountVector> out;
  out.reserve(n);
  for_each_prior_sample(params, opset, n, cfg, [&](const ExpressionTree&, const OpCountVector& c) { out.push_back(c); });
  return out;
}

struct PriorFitConfig {
  double lambda = 0.05;
  std::size_t batch = 100000;        // M expressions per sweep
  double tolerance = 1e-2;           // max relative parameter change per sweep
  std::size_t patience = 5;          // consecutive sweeps below tolerance
  std::size_t max_sweeps = 500;
  double absent_penalty = 10.0;      // alpha for operations absent from the targets
  double max_relative_error = 5.0;   // clip of (meas - target) / target per update
  std::optional<PriorParams> warm_start;
  PriorSampleConfig sampling;
  std::uint64_t seed = 0;
};

struct PriorFitSweep {
  std::size_t sweep = 0;
  double max_relative_change = 0;
  double max_relative_error = 0;  // over fitted means and mean squares
};

struct PriorFitReport {
  std::size_t sweeps = 0;
  bool converged = false;
  double last_max_relative_change = 0;
  CorpusStats measured;              // statistics of the final batch
  std::vector<PriorFitSweep> history;
};

struct PriorFitResult {
  PriorParams params;
  PriorFitReport report;
};

/// Relative change |new - old| / max(|old|, |new|, 1).
inline double relative_change(double before, double after) {
  return std::fabs(after - before) / std::max({std::fabs(before), std::fabs(after), 1.0});
}

/// One update of every fitted operation:
///   alpha_o += eps * lambda * (meas - target) / target   (same for beta on <n_o^2>)
/// with eps uniform in [0, 1] per update, the relative error clipped to
/// [-clip, clip] and beta clamped at 0. Returns the sweep's change and error.
template <class Rng>
PriorFitSweep prior_update(PriorParams& p, const CorpusStats& meas, const CorpusStats& targets,
                           const std::vector<bool>& fitted, double lambda, double clip, Rng& rng) {
  std::uniform_real_distribution<double> eps(0.0, 1.0);
  PriorFitSweep info;
  for (std::size_t o = 0; o < p.alpha.size(); ++o) {
    if (!fitted[o]) continue;
    const double ra = (meas.mean_count[o] - targets.mean_count[o]) / targets.mean_count[o];
    const double rb = targets.mean_sq_count[o] > 0
                          ? (meas.mean_sq_count[o] - targets.mean_sq_count[o]) / targets.mean_sq_count[o]
                          : 0.0;
    info.max_relative_error = std::max({info.max_relative_error, std::fabs(ra), std::fabs(rb)});
    const double a_new = p.alpha[o] + eps(rng) * lambda * std::clamp(ra, -clip, clip);
    const double b_new = std::max(0.0, p.beta[o] + eps(rng) * lambda * std::clamp(rb, -clip, clip));
    info.max_relative_change =
        std::max({info.max_relative_change, relative_change(p.alpha[o], a_new), relative_change(p.beta[o], b_new)});
    p.alpha[o] = a_new;
    p.beta[o] = b_new;
  }
  return info;
}

/// Stochastic-approximation fit of (alpha, beta) so that prior draws match
/// the target <n_o> and <n_o^2>. Operations with a zero target mean get
/// alpha = absent_penalty, beta = 0 and are not updated.
inline PriorFitResult fit_hyperparameters(const CorpusStats& targets_in, const OperationSet& opset,
                                          const PriorFitConfig& cfg = {},
                                          const std::function<void(const PriorFitSweep&, const PriorParams&)>&
                                              on_sweep = {}) {
  const CorpusStats targets = targets_in.bound_to(opset);
  const std::size_t n_ops = opset.size();
  PriorParams p = cfg.warm_start ? cfg.warm_start->bound_to(opset) : PriorParams::uniform(opset);
  std::vector<bool> fitted(n_ops);
  for (std::size_t o = 0; o < n_ops; ++o) {
    fitted[o] = targets.mean_count[o] > 0;
    if (!fitted[o]) {
      p.alpha[o] = cfg.absent_penalty;
      p.beta[o] = 0;
    }
  }

  PriorFitResult result;
  std::mt19937_64 rng(stream_seed(cfg.seed, 0x464954ULL));
  std::size_t calm = 0;
  PriorSampleConfig sc = cfg.sampling;
  sc.seed = stream_seed(cfg.seed, 0x534d504cULL);
  PriorSampler sampler(p, opset, sc);
  for (std::size_t sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    if (sweep > 1) sampler.rebind(p);
    const CorpusStats meas = CorpusStats::from_counts(opset, sampler.draw_counts(cfg.batch));

    PriorFitSweep info = prior_update(p, meas, targets, fitted, cfg.lambda, cfg.max_relative_error, rng);
    info.sweep = sweep;
    result.report.history.push_back(info);
    result.report.sweeps = sweep;
    result.report.last_max_relative_change = info.max_relative_change;
    result.report.measured = meas;
    if (on_sweep) on_sweep(info, p);
    calm = info.max_relative_change < cfg.tolerance ? calm + 1 : 0;
    if (calm >= cfg.patience) {
      result.report.converged = true;
      break;
    }
  }
  result.params = std::move(p);
  return result;
}

}  // namespace bms
