#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "bms/canonical.hpp"
#include "bms/model_fit.hpp"
#include "bms/moves.hpp"
#include "bms/parse.hpp"
#include "bms/prior.hpp"
#include "bms/tree.hpp"

namespace bms {

/// SplitMix64 finaliser; derives independent stream seeds from one seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

class TemperatureLadder {
 public:
  TemperatureLadder() : TemperatureLadder(geometric(1.05, 40)) {}
  explicit TemperatureLadder(std::vector<double> temps) : temps_(std::move(temps)) { check(); }

  /// T_k = base^k for k = 0..count-1.
  static TemperatureLadder geometric(double base, std::size_t count) {
    if (count == 0) throw std::invalid_argument("temperature ladder needs at least one temperature");
    if (count > 1 && !(base > 1.0)) throw std::invalid_argument("temperature ladder base must exceed 1");
    std::vector<double> t(count);
    for (std::size_t k = 0; k < count; ++k) t[k] = std::pow(base, static_cast<double>(k));
    return TemperatureLadder(std::move(t));
  }

  std::size_t size() const { return temps_.size(); }
  double operator[](std::size_t k) const { return temps_[k]; }
  const std::vector<double>& temps() const { return temps_; }

 private:
  void check() const {
    if (temps_.empty() || temps_.front() != 1.0) throw std::invalid_argument("temperature ladder must start at T = 1");
    for (std::size_t k = 1; k < temps_.size(); ++k)
      if (!(temps_[k] > temps_[k - 1])) throw std::invalid_argument("temperatures must be strictly increasing");
  }

  std::vector<double> temps_;
};

struct SamplerConfig {
  std::size_t n_steps = 2500;  // sweeps; every chain steps once per sweep
  MoveFrequencies freqs;
  double ladder_base = 1.05;
  std::size_t ladder_count = 40;
  std::size_t max_tree_size = kDefaultMaxTreeSize;
  std::optional<std::size_t> burn_in;  // default 40% of n_steps
  std::size_t thinning = 1;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  bool forbid_duplicates = true;
  bool record_all_temperatures = false;
  unsigned threads = 1;
  FitConfig fit;

  std::size_t effective_burn_in() const { return burn_in ? *burn_in : (n_steps * 2) / 5; }
  TemperatureLadder ladder() const { return TemperatureLadder::geometric(ladder_base, ladder_count); }

  void check() const {
    freqs.check();
    fit.check();
    (void)ladder();
    if (max_tree_size < 1) throw std::invalid_argument("max_tree_size must be at least 1");
    if (thinning < 1) throw std::invalid_argument("thinning must be at least 1");
    if (restarts < 1) throw std::invalid_argument("restarts must be at least 1");
    if (effective_burn_in() > n_steps) throw std::invalid_argument("burn_in exceeds n_steps");
  }
};

/// One tempered replica. The random stream belongs to the temperature slot;
/// swaps exchange the model (tree, fit, key) between slots.
struct ChainState {
  ExpressionTree tree;
  FittedModel fitted;
  std::string key;
  std::size_t temperature_index = 0;
  std::mt19937_64 rng;
  MoveKind last_move = MoveKind::Init;
  bool last_accepted = true;
  std::size_t proposed = 0;
  std::size_t accepted = 0;
};

/// First-visited tree shape per canonical key. Later trees with the same key
/// but a different shape are forbidden.
class DuplicateRegistry {
 public:
  bool allowed(const std::string& key, const ExpressionTree& t) const {
    std::lock_guard lock(mu_);
    auto it = map_.find(key);
    return it == map_.end() || it->second == t.nodes();
  }
  void visit(const std::string& key, const ExpressionTree& t) {
    std::lock_guard lock(mu_);
    map_.try_emplace(key, t.nodes());
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return map_.size();
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::vector<Symbol>> map_;
};

/// Proposal plus its score, computed without touching shared state.
struct PreparedStep {
  Proposal proposal;
  FittedModel fitted;
  std::string key;
  bool fresh_fit = false;
};

/// Everything a chain step needs besides the chain itself.
struct StepContext {
  const MoveSpace* space = nullptr;
  const ModelScorer* scorer = nullptr;
  MoveFrequencies freqs;
  DuplicateRegistry* registry = nullptr;  // null: duplicates allowed
  bool need_keys = true;
};

inline PreparedStep prepare_step(ChainState& chain, const StepContext& ctx) {
  PreparedStep p;
  p.proposal = ctx.space->propose(chain.tree, ctx.freqs, chain.rng);
  if (p.proposal.null) return p;
  if (ctx.need_keys) p.key = canonical_key(p.proposal.tree, ctx.space->opset());
  p.fitted = ctx.scorer->score(p.proposal.tree, p.key, false, &p.fresh_fit);
  return p;
}

/// Duplicate check, Metropolis-Hastings decision and state update.
/// Returns whether the proposal was accepted.
inline bool commit_step(ChainState& chain, PreparedStep&& p, const StepContext& ctx, double temperature) {
  chain.last_move = p.proposal.kind;
  chain.last_accepted = false;
  ++chain.proposed;
  if (p.proposal.null) return false;
  if (p.fresh_fit) ctx.scorer->remember(p.key, p.fitted);

  const bool forbidden = ctx.registry && !ctx.registry->allowed(p.key, p.proposal.tree);
  double delta = std::numeric_limits<double>::infinity();
  if (!forbidden)
    delta = tempered_delta(chain.fitted.description_length, p.fitted.description_length, chain.fitted.bic,
                           p.fitted.bic, chain.fitted.prior_energy, p.fitted.prior_energy, temperature);
  const double a = acceptance_probability(delta, p.proposal.log_g_ratio);
  if (a <= 0.0) return false;
  if (a < 1.0 && std::uniform_real_distribution<double>(0.0, 1.0)(chain.rng) >= a) return false;

  chain.tree = std::move(p.proposal.tree);
  chain.fitted = std::move(p.fitted);
  chain.key = std::move(p.key);
  chain.last_accepted = true;
  ++chain.accepted;
  if (ctx.registry) ctx.registry->visit(chain.key, chain.tree);
  return true;
}

/// One Metropolis-Hastings step at the given temperature.
inline bool mcmc_step(ChainState& chain, const StepContext& ctx, double temperature) {
  return commit_step(chain, prepare_step(chain, ctx), ctx, temperature);
}

/// Replica-exchange acceptance for models with BICs b_lo (at t_lo) and b_hi
/// (at t_hi > t_lo). The temperature-independent prior cancels.
inline double swap_probability(double b_lo, double b_hi, double t_lo, double t_hi) {
  if (std::isinf(b_lo) && std::isinf(b_hi)) return 1.0;
  const double a = (b_lo - b_hi) / 2.0 * (1.0 / t_lo - 1.0 / t_hi);
  if (std::isnan(a)) return 0.0;
  return a >= 0 ? 1.0 : std::exp(a);
}

/// Attempts one swap between a uniformly chosen adjacent pair. Returns the
/// lower index of the pair if the swap happened.
template <class Rng>
std::optional<std::size_t> swap_attempt(std::vector<ChainState>& chains, const TemperatureLadder& ladder, Rng& rng) {
  if (chains.size() < 2) return std::nullopt;
  const std::size_t k = std::uniform_int_distribution<std::size_t>(0, chains.size() - 2)(rng);
  const double p = swap_probability(chains[k].fitted.bic, chains[k + 1].fitted.bic, ladder[k], ladder[k + 1]);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (!(u < p)) return std::nullopt;
  std::swap(chains[k].tree, chains[k + 1].tree);
  std::swap(chains[k].fitted, chains[k + 1].fitted);
  std::swap(chains[k].key, chains[k + 1].key);
  return k;
}

/// One recorded chain state.
struct TraceRow {
  std::size_t restart = 0;
  std::size_t step = 0;
  std::size_t temperature_index = 0;
  double temperature = 1.0;
  std::string key;
  std::string expression;
  std::vector<double> theta;
  double sse = kInfinity;
  double bic = kInfinity;
  double prior_energy = 0;
  double description_length = kInfinity;
  std::size_t n_active_params = 0;
  std::size_t size = 0;
  MoveKind move = MoveKind::Init;
  bool accepted = true;
};

/// Run-level information written ahead of the rows.
struct TraceMetadata {
  std::uint64_t seed = 0;
  std::string config_text;  // canonical key = value dump
  std::uint64_t config_hash = 0;
  std::string opset;
  int n_vars = 1;
  int n_params = 0;
  std::vector<double> ladder;
  PriorParams prior;
  bool has_data = false;
  std::size_t n_rows = 0;  // data points
  std::vector<std::string> variables;  // input column names, x1.. without data
  std::string target;
};

struct ModelTrace {
  TraceMetadata meta;
  std::vector<TraceRow> rows;
};

/// Periodic progress summary for long runs.
struct Progress {
  std::size_t restart = 0;
  std::size_t step = 0;
  std::size_t n_steps = 0;
  double best_dl = kInfinity;
  double t0_acceptance = 0;
  std::size_t cache_size = 0;
};

/// Optional callbacks for `Sampler::run`.
struct RunHooks {
  std::function<void(const ChainState&, std::size_t restart, std::size_t step)> on_state;
  std::function<void(const Progress&)> on_progress;
  std::size_t progress_every = 0;
  bool store_rows = true;
};

/// Canonical text form of a sampler configuration (one key = value per line).
inline std::string describe_config(const SamplerConfig& c) {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "n_steps = " << c.n_steps << '\n'
    << "freq_root = " << c.freqs.root << '\n'
    << "freq_node = " << c.freqs.node << '\n'
    << "freq_etr = " << c.freqs.etr << '\n'
    << "ladder_base = " << c.ladder_base << '\n'
    << "ladder_count = " << c.ladder_count << '\n'
    << "max_tree_size = " << c.max_tree_size << '\n'
    << "burn_in = " << c.effective_burn_in() << '\n'
    << "thinning = " << c.thinning << '\n'
    << "restarts = " << c.restarts << '\n'
    << "seed = " << c.seed << '\n'
    << "forbid_duplicates = " << (c.forbid_duplicates ? "true" : "false") << '\n'
    << "record_all_temperatures = " << (c.record_all_temperatures ? "true" : "false") << '\n'
    << "fit_starts = " << c.fit.n_starts << '\n'
    << "fit_start_range = " << c.fit.start_range << '\n'
    << "fit_start_min_magnitude = " << c.fit.start_min_magnitude << '\n'
    << "fit_evals_per_param = " << c.fit.evals_per_param << '\n'
    << "fit_min_evals = " << c.fit.min_evals << '\n'
    << "fit_ftol = " << c.fit.ftol << '\n';
  return o.str();
}

/// Parallel-tempering Metropolis-Hastings sampler over expression trees.
class Sampler {
 public:
  Sampler(OperationSet opset, std::optional<Dataset> data, PriorParams prior, SamplerConfig cfg,
          std::shared_ptr<FitCache> cache = std::make_shared<FitCache>())
      : cfg_((cfg.check(), cfg)),
        space_(opset, cfg.max_tree_size),
        scorer_(std::move(opset), std::move(data), std::move(prior), cfg.fit, std::move(cache)),
        ladder_(cfg_.ladder()) {}

  const SamplerConfig& config() const { return cfg_; }
  const MoveSpace& space() const { return space_; }
  const ModelScorer& scorer() const { return scorer_; }
  const TemperatureLadder& ladder() const { return ladder_; }

  TraceMetadata metadata() const {
    TraceMetadata m;
    m.seed = cfg_.seed;
    m.config_text = describe_config(cfg_);
    m.config_hash = fnv1a(m.config_text);
    m.opset = space_.opset().spec();
    m.n_vars = space_.opset().n_vars();
    m.n_params = space_.opset().n_params();
    m.ladder = ladder_.temps();
    m.prior = scorer_.prior();
    m.has_data = scorer_.has_data();
    m.n_rows = scorer_.has_data() ? scorer_.data().n_rows() : 0;
    if (scorer_.has_data()) {
      m.variables = scorer_.data().names;
      m.target = scorer_.data().target_name;
    } else {
      for (int v = 0; v < m.n_vars; ++v) m.variables.push_back("x" + std::to_string(v + 1));
    }
    return m;
  }

  /// Chains for one restart, each starting at a uniformly drawn variable leaf.
  std::vector<ChainState> initial_chains(std::size_t restart, DuplicateRegistry* registry) const {
    std::vector<ChainState> chains(ladder_.size());
    for (std::size_t k = 0; k < chains.size(); ++k) {
      ChainState& c = chains[k];
      c.temperature_index = k;
      c.rng.seed(stream_seed(cfg_.seed, restart + 1, k + 1));
      const int v = std::uniform_int_distribution<int>(0, space_.opset().n_vars() - 1)(c.rng);
      c.tree = ExpressionTree::leaf(Symbol::variable(v));
      if (need_keys()) c.key = canonical_key(c.tree, space_.opset());
      c.fitted = scorer_.score(c.tree, c.key);
      if (registry) registry->visit(c.key, c.tree);
    }
    return chains;
  }

  /// Steps every chain once (scoring in parallel when threads > 1, committing
  /// in chain order) and then attempts one adjacent swap.
  template <class Rng>
  void sweep(std::vector<ChainState>& chains, DuplicateRegistry* registry, Rng& swap_rng) const {
    const StepContext ctx = context(registry);
    std::vector<PreparedStep> prepared(chains.size());
    const unsigned nt = std::max(1u, std::min<unsigned>(cfg_.threads, static_cast<unsigned>(chains.size())));
    if (nt <= 1) {
      for (std::size_t k = 0; k < chains.size(); ++k) prepared[k] = prepare_step(chains[k], ctx);
    } else {
      std::vector<std::thread> pool;
      for (unsigned t = 0; t < nt; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t k = t; k < chains.size(); k += nt) prepared[k] = prepare_step(chains[k], ctx);
        });
      for (auto& th : pool) th.join();
    }
    for (std::size_t k = 0; k < chains.size(); ++k) commit_step(chains[k], std::move(prepared[k]), ctx, ladder_[k]);
    swap_attempt(chains, ladder_, swap_rng);
  }

  ModelTrace run(const RunHooks& hooks = {}) const {
    ModelTrace trace;
    trace.meta = metadata();
    const std::size_t burn = cfg_.effective_burn_in();
    for (std::size_t r = 0; r < cfg_.restarts; ++r) {
      DuplicateRegistry registry;
      DuplicateRegistry* reg = cfg_.forbid_duplicates ? &registry : nullptr;
      auto chains = initial_chains(r, reg);
      std::mt19937_64 swap_rng(stream_seed(cfg_.seed, r + 1, 0));
      double best = kInfinity;
      std::size_t t0_prop = 0, t0_acc = 0;
      auto record = [&](std::size_t step) {
        best = std::min(best, chains[0].fitted.description_length);
        if (step < burn || (step - burn) % cfg_.thinning != 0) return;
        const std::size_t top = cfg_.record_all_temperatures ? chains.size() : 1;
        for (std::size_t k = 0; k < top; ++k) {
          if (hooks.on_state) hooks.on_state(chains[k], r, step);
          if (hooks.store_rows) trace.rows.push_back(make_row(chains[k], r, step));
        }
      };
      record(0);
      for (std::size_t s = 1; s <= cfg_.n_steps; ++s) {
        sweep(chains, reg, swap_rng);
        ++t0_prop;
        if (chains[0].last_accepted) ++t0_acc;
        record(s);
        if (hooks.on_progress && hooks.progress_every && (s % hooks.progress_every == 0 || s == cfg_.n_steps)) {
          Progress p{r, s, cfg_.n_steps, best, static_cast<double>(t0_acc) / static_cast<double>(t0_prop),
                     scorer_.cache() ? scorer_.cache()->size() : 0};
          hooks.on_progress(p);
        }
      }
    }
    return trace;
  }

  TraceRow make_row(const ChainState& c, std::size_t restart, std::size_t step) const {
    TraceRow row;
    row.restart = restart;
    row.step = step;
    row.temperature_index = c.temperature_index;
    row.temperature = ladder_[c.temperature_index];
    row.key = c.key.empty() ? canonical_key(c.tree, space_.opset()) : c.key;
    row.expression = render(c.tree, space_.opset());
    row.theta = c.fitted.theta;
    row.sse = c.fitted.sse;
    row.bic = c.fitted.bic;
    row.prior_energy = c.fitted.prior_energy;
    row.description_length = c.fitted.description_length;
    row.n_active_params = c.fitted.n_active_params;
    row.size = c.tree.size();
    row.move = c.last_move;
    row.accepted = c.last_accepted;
    return row;
  }

  StepContext context(DuplicateRegistry* registry) const {
    StepContext ctx;
    ctx.space = &space_;
    ctx.scorer = &scorer_;
    ctx.freqs = cfg_.freqs;
    ctx.registry = registry;
    ctx.need_keys = need_keys();
    return ctx;
  }

 private:
  bool need_keys() const { return scorer_.has_data() || cfg_.forbid_duplicates; }

  SamplerConfig cfg_;
  MoveSpace space_;
  ModelScorer scorer_;
  TemperatureLadder ladder_;
};

}  // namespace bms
