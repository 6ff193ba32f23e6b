#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <list>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bms/canonical.hpp"
#include "bms/dataset.hpp"
#include "bms/evaluate.hpp"
#include "bms/optimize.hpp"
#include "bms/prior.hpp"
#include "bms/tree.hpp"

namespace bms {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

struct FitConfig {
  std::size_t n_starts = 3;          // first start is all-ones (or the warm start)
  double start_range = 10.0;         // later starts: random sign, magnitude log-uniform in
  double start_min_magnitude = 0.01; //   [start_min_magnitude, start_range] per parameter
  std::size_t evals_per_param = 200; // Nelder-Mead budget per start is this * L
  std::size_t min_evals = 100;
  double ftol = 1e-10;
  double variance_floor_rel = 1e-12; // sigma^2 >= this * var(y)
  double variance_floor_abs = 1e-300;
  std::uint64_t seed = 0;

  void check() const {
    if (!(start_range > 0) || !(start_min_magnitude > 0))
      throw std::invalid_argument("fit start magnitudes must be positive");
    if (!(ftol >= 0)) throw std::invalid_argument("fit tolerance must be nonnegative");
  }
};

/// An expression with its maximum-likelihood parameters and scores.
struct FittedModel {
  ExpressionTree tree;
  std::vector<double> theta;  // one entry per parameter symbol of the opset; unused = 0
  std::vector<int> active;    // parameter indices that occur in the tree
  double sse = kInfinity;
  std::size_t n_active_params = 0;
  double bic = kInfinity;
  double prior_energy = 0;
  double description_length = kInfinity;

  bool valid() const { return std::isfinite(description_length); }
};

/// B = N ln(2 pi s2) + N + (L + 1) ln N with s2 = max(SSE / N, floor).
inline double bic_value(double sse, std::size_t n, std::size_t n_params, double var_y,
                        const FitConfig& cfg = {}) {
  if (!std::isfinite(sse)) return kInfinity;
  const double N = static_cast<double>(n);
  const double floor = std::max(cfg.variance_floor_rel * var_y, cfg.variance_floor_abs);
  const double s2 = std::max(sse / N, floor);
  return N * std::log(2.0 * std::numbers::pi * s2) + N + static_cast<double>(n_params + 1) * std::log(N);
}

inline double bic(const FittedModel& m, const Dataset& data, const FitConfig& cfg = {}) {
  return bic_value(m.sse, data.n_rows(), m.n_active_params, data.target_variance(), cfg);
}

/// Starting points of the multistart fit, one value per active parameter:
/// `warm_start` when given (else all ones), then draws with a random sign and
/// a log-uniform magnitude in [start_min_magnitude, start_range], seeded by
/// `seed`. The log-uniform magnitudes make the search scale-free.
inline std::vector<std::vector<double>> fit_starts(const std::vector<int>& active, const FitConfig& cfg,
                                                   const std::optional<std::vector<double>>& warm_start,
                                                   std::uint64_t seed) {
  const std::size_t L = active.size();
  std::vector<std::vector<double>> starts;
  if (warm_start) {
    std::vector<double> w(L);
    for (std::size_t i = 0; i < L; ++i) w[i] = warm_start->at(static_cast<std::size_t>(active[i]));
    starts.push_back(std::move(w));
  } else {
    starts.emplace_back(L, 1.0);
  }
  std::mt19937_64 rng(seed);
  const double lo = std::log(std::min(cfg.start_min_magnitude, cfg.start_range));
  std::uniform_real_distribution<double> log_mag(lo, std::log(cfg.start_range));
  std::bernoulli_distribution negative(0.5);
  while (starts.size() < std::max<std::size_t>(cfg.n_starts, 1)) {
    std::vector<double> s(L);
    for (auto& v : s) {
      const double m = std::exp(log_mag(rng));
      v = negative(rng) ? -m : m;
    }
    starts.push_back(std::move(s));
  }
  return starts;
}

/// Least-squares fit of the tree's parameters by multistart Nelder-Mead.
///
/// Returns the best fit over `fit_starts`; SSE is +inf when no start reached
/// a point where every row is valid.
inline FittedModel fit_parameters(const ExpressionTree& tree, const OperationSet& opset,
                                  const Dataset& data, const FitConfig& cfg,
                                  const std::optional<std::vector<double>>& warm_start = std::nullopt,
                                  std::uint64_t seed = 0) {
  FittedModel m;
  m.tree = tree;
  m.active = tree.parameters_used();
  m.n_active_params = m.active.size();
  m.theta.assign(static_cast<std::size_t>(opset.n_params()), 0.0);
  const std::size_t L = m.active.size();

  CompiledExpression expr(tree, opset, data.columns, data.n_rows());
  std::vector<double> theta = m.theta;
  auto objective = [&](const std::vector<double>& active_values) {
    for (std::size_t i = 0; i < L; ++i) theta[static_cast<std::size_t>(m.active[i])] = active_values[i];
    return expr.sse(theta, data.y);
  };

  if (L == 0) {
    m.sse = expr.sse(theta, data.y);
    return m;
  }

  const auto starts = fit_starts(m.active, cfg, warm_start, seed);

  NelderMeadOptions nm;
  nm.max_evals = std::max(cfg.min_evals, cfg.evals_per_param * L);
  nm.ftol = cfg.ftol;
  std::vector<double> best_x;
  double best_f = kInfinity;
  for (const auto& s : starts) {
    auto r = nelder_mead(objective, s, nm);
    if (std::isfinite(r.fx)) {
      // one restart from the optimum guards against a collapsed simplex
      auto r2 = nelder_mead(objective, r.x, nm);
      if (r2.fx < r.fx) r = std::move(r2);
    }
    if (r.fx < best_f || best_x.empty()) {
      best_f = r.fx;
      best_x = r.x;
    }
  }
  m.sse = std::isfinite(best_f) ? best_f : kInfinity;
  if (std::isfinite(best_f))
    for (std::size_t i = 0; i < L; ++i) m.theta[static_cast<std::size_t>(m.active[i])] = best_x[i];
  return m;
}

/// Thread-safe bounded LRU map from canonical key to fitted values.
class FitCache {
 public:
  struct Entry {
    std::vector<double> theta;
    double sse = kInfinity;
  };

  explicit FitCache(std::size_t capacity = 100000) : capacity_(capacity) {}

  std::optional<Entry> find(const std::string& key) {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) {
      ++misses_;
      return std::nullopt;
    }
    ++hits_;
    order_.splice(order_.begin(), order_, it->second.second);
    return it->second.first;
  }

  void insert(const std::string& key, Entry e) {
    std::lock_guard lock(mu_);
    if (capacity_ == 0) return;
    auto it = map_.find(key);
    if (it != map_.end()) return;  // first insert wins; fits are pure per key
    order_.push_front(key);
    map_.emplace(key, std::make_pair(std::move(e), order_.begin()));
    if (map_.size() > capacity_) {
      map_.erase(order_.back());
      order_.pop_back();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return map_.size();
  }
  std::size_t hits() const {
    std::lock_guard lock(mu_);
    return hits_;
  }
  std::size_t misses() const {
    std::lock_guard lock(mu_);
    return misses_;
  }

 private:
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::list<std::string> order_;
  std::unordered_map<std::string, std::pair<Entry, std::list<std::string>::iterator>> map_;
  std::size_t hits_ = 0, misses_ = 0;
};

/// Computes description lengths L(f) = B(f)/2 + E(f) against fixed data and
/// prior. Without data the BIC term is zero and L(f) is the prior energy.
class ModelScorer {
 public:
  ModelScorer(OperationSet opset, std::optional<Dataset> data, PriorParams prior, FitConfig cfg = {},
              std::shared_ptr<FitCache> cache = std::make_shared<FitCache>())
      : opset_(std::move(opset)), data_(std::move(data)), prior_(std::move(prior)), cfg_(cfg),
        cache_(std::move(cache)) {
    if (!prior_.matches(opset_)) prior_ = prior_.bound_to(opset_);
    if (data_) {
      data_->check();
      if (static_cast<std::size_t>(opset_.n_vars()) > data_->n_vars())
        throw std::invalid_argument("operation set has more variables than the dataset");
      var_y_ = data_->target_variance();
    }
  }

  const OperationSet& opset() const { return opset_; }
  const PriorParams& prior() const { return prior_; }
  const FitConfig& fit_config() const { return cfg_; }
  bool has_data() const { return data_.has_value(); }
  const Dataset& data() const { return *data_; }
  FitCache* cache() const { return cache_.get(); }

  void remember(const std::string& key, const FittedModel& m) const {
    if (cache_ && data_) cache_->insert(key, {m.theta, m.sse});
  }

  FittedModel score(const ExpressionTree& tree) const { return score(tree, canonical_key(tree, opset_)); }

  FittedModel score(const ExpressionTree& tree, const std::string& key) const {
    return score(tree, key, true, nullptr);
  }

  /// With `insert` false a fresh fit is not written to the cache; `fresh`
  /// reports whether a fit ran, so the caller can `remember` it later. The
  /// sampler uses this to keep cache contents independent of thread timing.
  FittedModel score(const ExpressionTree& tree, const std::string& key, bool insert, bool* fresh) const {
    if (fresh) *fresh = false;
    FittedModel m;
    m.prior_energy = prior_energy(tree, prior_);
    if (!data_) {
      m.tree = tree;
      m.active = tree.parameters_used();
      m.n_active_params = m.active.size();
      m.theta.assign(static_cast<std::size_t>(opset_.n_params()), 0.0);
      m.sse = 0;
      m.bic = 0;
      m.description_length = m.prior_energy;
      return m;
    }
    std::optional<FitCache::Entry> hit = cache_ ? cache_->find(key) : std::nullopt;
    if (hit) {
      m.tree = tree;
      m.active = tree.parameters_used();
      m.n_active_params = m.active.size();
      m.theta = std::move(hit->theta);
      m.sse = hit->sse;
    } else {
      const double e = m.prior_energy;
      m = fit_parameters(tree, opset_, *data_, cfg_, std::nullopt, fnv1a(key, cfg_.seed ^ 0x9e3779b97f4a7c15ULL));
      m.prior_energy = e;
      if (cache_ && insert) cache_->insert(key, {m.theta, m.sse});
      if (fresh) *fresh = true;
    }
    m.bic = bic_value(m.sse, data_->n_rows(), m.n_active_params, var_y_, cfg_);
    m.description_length = std::isfinite(m.bic) ? m.bic / 2.0 + m.prior_energy : kInfinity;
    return m;
  }

 private:
  OperationSet opset_;
  std::optional<Dataset> data_;
  PriorParams prior_;
  FitConfig cfg_;
  std::shared_ptr<FitCache> cache_;
  double var_y_ = 0;
};

}  // namespace bms

namespace bms {

/// One-shot L(f) = B(f)/2 + E(f) without a shared cache.
inline FittedModel description_length(const ExpressionTree& tree, const OperationSet& opset,
                                      const Dataset& data, const PriorParams& prior,
                                      const FitConfig& cfg = {}) {
  return ModelScorer(opset, data, prior, cfg, nullptr).score(tree);
}

}  // namespace bms
