// bms: command-line front end for the Bayesian symbolic-regression library.
//
//   bms fit-prior             fit prior hyperparameters to a corpus or stats table
//   bms generate expression   synthetic data from a closed-form expression
//   bms generate rossler      synthetic derivative data from the Rössler system
//   bms sample                parallel-tempering MCMC over expressions -> JSONL trace
//   bms predict               MDL / posterior-median / median-model predictions
//   bms validate-equilibrium  sampler vs. exact posterior on a small enumerable space
//
// Every option can also be given as `key = value` in the file passed to
// --config; command-line values take precedence.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bms/bms.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitThreshold = 3;

/// Invalid input or configuration (exit status 1).
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Command-line options that map onto configuration keys.
class OptionTable {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto slot = std::make_shared<std::string>();
    CLI::Option* opt = app->add_option(flag, *slot, help + "  [" + key + "]");
    values_.push_back({opt, key, slot, {}});
  }

  void flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& value,
            const std::string& help) {
    const std::string text = help + "  [" + key + " = " + value + "]";
    CLI::Option* opt = app->add_flag(flag, text);
    values_.push_back({opt, key, nullptr, value});
  }

  /// Copies every option given on the command line into `cfg`.
  void apply(bms::KeyValueConfig& cfg) const {
    for (const auto& v : values_)
      if (v.opt->count() > 0) cfg.set(v.key, v.slot ? *v.slot : v.fixed);
  }

 private:
  struct Entry {
    CLI::Option* opt;
    std::string key;
    std::shared_ptr<std::string> slot;
    std::string fixed;
  };
  std::vector<Entry> values_;
};

struct Context {
  bms::KeyValueConfig cfg;
  bool verbose = false;

  std::uint64_t seed() const { return cfg.get_size("seed", 0); }

  std::string require(const std::string& key) const {
    if (!cfg.has(key) || cfg.get_string(key).empty()) throw UsageError("missing required setting '" + key + "'");
    return cfg.get_string(key);
  }

  void warn_unused() const {
    for (const auto& k : cfg.unused())
      if (k != "seed" && k != "threads") std::cerr << "warning: setting '" << k << "' is not used by this command\n";
  }
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return out;
}

double to_number(const std::string& s, const std::string& what) {
  double v = 0;
  if (!bms::detail::parse_double(s, v)) throw UsageError(what + ": '" + s + "' is not a number");
  return v;
}

std::vector<double> number_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  if (s.empty()) return out;
  for (const auto& item : split(s, ',')) out.push_back(to_number(item, what));
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + what + " '" + path + "'");
}

/// An output stream: a file, or stdout for "" and "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  bool is_stdout() const { return !file_.is_open(); }

 private:
  std::ofstream file_;
};

std::string settings_text(const bms::KeyValueConfig& cfg, const std::vector<std::string>& keys) {
  std::ostringstream o;
  for (const auto& k : keys)
    if (cfg.has(k)) o << k << " = " << cfg.get_string(k) << '\n';
  return o.str();
}

// ---------------------------------------------------------------- fit-prior

bms::PriorFitConfig prior_fit_config(const Context& ctx, const std::string& prefix) {
  const auto& c = ctx.cfg;
  bms::PriorFitConfig f;
  f.lambda = c.get_double(prefix + "lambda", f.lambda);
  f.batch = c.get_size(prefix + "batch", f.batch);
  f.tolerance = c.get_double(prefix + "tolerance", f.tolerance);
  f.patience = c.get_size(prefix + "patience", f.patience);
  f.max_sweeps = c.get_size(prefix + "max_sweeps", f.max_sweeps);
  f.absent_penalty = c.get_double(prefix + "absent_penalty", f.absent_penalty);
  f.max_relative_error = c.get_double(prefix + "clip", f.max_relative_error);
  f.sampling.n_chains = c.get_size(prefix + "chains", f.sampling.n_chains);
  f.sampling.burn_in = c.get_size(prefix + "sample_burn_in", f.sampling.burn_in);
  f.sampling.thinning = c.get_size(prefix + "sample_thinning", f.sampling.thinning);
  f.sampling.max_tree_size = c.get_size("max_tree_size", f.sampling.max_tree_size);
  f.seed = ctx.seed();
  if (!(f.lambda > 0)) throw UsageError("lambda must be positive");
  if (f.batch < 1 || f.max_sweeps < 1 || f.patience < 1) throw UsageError("batch, max_sweeps and patience must be >= 1");
  if (!(f.max_relative_error > 0)) throw UsageError("clip must be positive");
  if (f.sampling.n_chains < 1 || f.sampling.thinning < 1) throw UsageError("chains and sample_thinning must be >= 1");
  return f;
}

bms::OperationSet opset_from(const Context& ctx, int n_vars, int n_params) {
  if (n_vars < 1) throw UsageError("n_vars must be at least 1");
  if (n_params < 0) throw UsageError("n_params must be nonnegative");
  try {
    return bms::OperationSet::from_spec(ctx.cfg.get_string("ops", "default"), n_vars, n_params);
  } catch (const std::exception& e) {
    throw UsageError(std::string("ops: ") + e.what());
  }
}

bms::CorpusStats load_targets(const Context& ctx, const std::string& path, const bms::OperationSet& opset) {
  require_file(path, "corpus");
  const bool strict = ctx.cfg.get_bool("strict", true);
  std::vector<bms::LineError> errors;
  bms::CorpusStats s;
  try {
    s = bms::load_stats(path, opset, strict, &errors);
  } catch (const bms::ParseError& e) {
    throw UsageError(path + ": " + e.what());
  }
  for (const auto& e : errors) std::cerr << "warning: " << path << ": line " << e.line << ": skipped: " << e.message << '\n';
  return s;
}

int cmd_fit_prior(Context& ctx) {
  const int nv = static_cast<int>(ctx.cfg.get_size("n_vars", 1));
  const int np = static_cast<int>(ctx.cfg.get_size("n_params", 1));
  const bms::OperationSet opset = opset_from(ctx, nv, np);
  const std::string corpus = ctx.require("corpus");
  bms::PriorFitConfig fc = prior_fit_config(ctx, "");
  if (ctx.cfg.has("warm_start")) {
    const std::string ws = ctx.cfg.get_string("warm_start");
    require_file(ws, "warm-start table");
    fc.warm_start = bms::read_prior_file(ws);
  }
  const bms::CorpusStats targets = load_targets(ctx, corpus, opset).bound_to(opset);
  const std::string out_path = ctx.cfg.get_string("output", "-");
  if (ctx.cfg.get_bool("stats_only", false)) {
    ctx.warn_unused();
    Output out(out_path);
    bms::write_stats_tsv(out.stream(), targets);
    return kExitOk;
  }
  const std::string report_path = ctx.cfg.get_string("report", "");
  const std::size_t every = ctx.verbose ? 1 : std::max<std::size_t>(1, ctx.cfg.get_size("progress_every", 25));
  ctx.warn_unused();

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = bms::fit_hyperparameters(targets, opset, fc, [&](const bms::PriorFitSweep& s, const bms::PriorParams&) {
    if (s.sweep % every == 0)
      std::cerr << "sweep " << s.sweep << "  max relative change " << s.max_relative_change << "  max relative error "
                << s.max_relative_error << '\n';
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << (result.report.converged ? "converged" : "not converged") << " after " << result.report.sweeps
            << " sweeps (" << std::fixed << std::setprecision(1) << secs << " s)\n"
            << std::defaultfloat << std::setprecision(6);
  std::cerr << "op\ttarget_mean\tmeasured_mean\ttarget_sq\tmeasured_sq\n";
  for (std::size_t o = 0; o < opset.size(); ++o)
    std::cerr << targets.ops[o] << '\t' << targets.mean_count[o] << '\t' << result.report.measured.mean_count[o] << '\t'
              << targets.mean_sq_count[o] << '\t' << result.report.measured.mean_sq_count[o] << '\n';

  const std::string text = settings_text(ctx.cfg, {"corpus", "ops", "n_vars", "n_params", "lambda", "batch", "tolerance",
                                                   "patience", "max_sweeps", "absent_penalty", "clip", "chains",
                                                   "sample_burn_in", "sample_thinning", "max_tree_size", "seed"});
  Output out(out_path);
  out.stream() << "#seed\t" << ctx.seed() << "\n#config_hash\t" << bms::fnv1a(text) << "\n#converged\t"
               << (result.report.converged ? "true" : "false") << "\n#sweeps\t" << result.report.sweeps << '\n';
  bms::write_prior_tsv(out.stream(), result.params);

  if (!report_path.empty()) {
    Output rep(report_path);
    auto& r = rep.stream();
    r << "#converged\t" << (result.report.converged ? "true" : "false") << "\n#sweeps\t" << result.report.sweeps << '\n';
    r << "sweep\tmax_relative_change\tmax_relative_error\n" << std::setprecision(10);
    for (const auto& h : result.report.history)
      r << h.sweep << '\t' << h.max_relative_change << '\t' << h.max_relative_error << '\n';
  }
  return kExitOk;
}

// ----------------------------------------------------------------- generate

int cmd_generate_expression(Context& ctx) {
  const std::string expr = ctx.require("expr");
  const std::vector<double> theta = number_list(ctx.cfg.get_string("theta", ""), "theta");
  std::vector<std::pair<double, double>> ranges;
  for (const auto& r : split(ctx.require("ranges"), ',')) {
    const auto lohi = split(r, ':');
    if (lohi.size() != 2) throw UsageError("ranges: expected lo:hi, got '" + r + "'");
    ranges.emplace_back(to_number(lohi[0], "ranges"), to_number(lohi[1], "ranges"));
  }
  bms::ExpressionDataSpec spec;
  spec.theta = theta;
  spec.ranges = ranges;
  spec.n = ctx.cfg.get_size("n", spec.n);
  spec.sigma = ctx.cfg.get_double("sigma", spec.sigma);
  spec.seed = ctx.seed();
  const bms::OperationSet opset = opset_from(ctx, static_cast<int>(ranges.size()), static_cast<int>(theta.size()));
  const std::string out_path = ctx.cfg.get_string("output", "-");
  ctx.warn_unused();
  bms::ExpressionTree tree;
  try {
    tree = bms::parse_expression(expr, opset);
  } catch (const bms::ParseError& e) {
    throw UsageError(std::string("expr: ") + e.what());
  }
  bms::Dataset d;
  try {
    d = bms::generate_expression_data(tree, opset, spec);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Output out(out_path);
  bms::write_csv(out.stream(), d);
  return kExitOk;
}

int cmd_generate_rossler(Context& ctx) {
  bms::RosslerSpec p;
  p.a = ctx.cfg.get_double("a", p.a);
  p.b = ctx.cfg.get_double("b", p.b);
  p.c = ctx.cfg.get_double("c", p.c);
  p.dt = ctx.cfg.get_double("dt", p.dt);
  p.transient = ctx.cfg.get_double("transient", p.transient);
  p.span = ctx.cfg.get_double("span", p.span);
  if (ctx.cfg.has("initial")) {
    const auto v = number_list(ctx.cfg.get_string("initial"), "initial");
    if (v.size() != 3) throw UsageError("initial: expected three comma-separated values");
    p.initial = {v[0], v[1], v[2]};
  }
  p.n = ctx.cfg.get_size("n", p.n);
  p.sigma = ctx.cfg.get_double("sigma", p.sigma);
  const std::string target = ctx.cfg.get_string("target", "x");
  if (target.size() != 1) throw UsageError("target must be x, y or z");
  p.target = target[0];
  p.seed = ctx.seed();
  const std::string out_path = ctx.cfg.get_string("output", "-");
  ctx.warn_unused();
  bms::Dataset d;
  try {
    d = bms::generate_rossler_data(p);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  Output out(out_path);
  bms::write_csv(out.stream(), d);
  return kExitOk;
}

// ------------------------------------------------------------------- sample

bms::PriorParams load_prior(const Context& ctx, const bms::OperationSet& opset) {
  const std::string src = ctx.cfg.get_string("prior", "uniform");
  if (src == "uniform") return bms::PriorParams::uniform(opset);
  require_file(src, "prior");
  {
    std::ifstream in(src);
    std::string first;
    while (std::getline(in, first) && first.starts_with("#") && !first.starts_with("#n_vars")) {
    }
    if (first.starts_with("#n_vars") || first.starts_with("op\talpha")) {
      const bms::PriorParams p = bms::read_prior_file(src);
      if (p.n_vars != opset.n_vars() || p.n_params != opset.n_params())
        std::cerr << "warning: prior table was fitted for n_vars = " << p.n_vars << ", n_params = " << p.n_params
                  << "; sampling uses n_vars = " << opset.n_vars() << ", n_params = " << opset.n_params() << '\n';
      try {
        return p.bound_to(opset);
      } catch (const std::exception& e) {
        throw UsageError(src + ": " + e.what());
      }
    }
  }
  // A corpus or a stats table: fit the hyperparameters first.
  const bms::CorpusStats targets = load_targets(ctx, src, opset);
  const bms::PriorFitConfig fc = prior_fit_config(ctx, "prior_");
  std::cerr << "fitting prior hyperparameters to " << src << '\n';
  const auto r = bms::fit_hyperparameters(targets, opset, fc);
  std::cerr << (r.report.converged ? "converged" : "not converged") << " after " << r.report.sweeps << " sweeps\n";
  return r.params;
}

bms::SamplerConfig sampler_config(const Context& ctx) {
  const auto& c = ctx.cfg;
  bms::SamplerConfig s;
  s.n_steps = c.get_size("n_steps", s.n_steps);
  s.ladder_base = c.get_double("ladder_base", s.ladder_base);
  s.ladder_count = c.get_size("ladder_count", s.ladder_count);
  s.max_tree_size = c.get_size("max_tree_size", s.max_tree_size);
  if (c.has("burn_in")) s.burn_in = c.get_size("burn_in", 0);
  s.thinning = c.get_size("thinning", s.thinning);
  s.restarts = c.get_size("restarts", s.restarts);
  s.seed = ctx.seed();
  s.forbid_duplicates = c.get_bool("forbid_duplicates", s.forbid_duplicates);
  s.record_all_temperatures = c.get_bool("record_all_temperatures", s.record_all_temperatures);
  s.threads = static_cast<unsigned>(c.get_size("threads", s.threads));
  s.freqs.root = c.get_double("freq_root", s.freqs.root);
  s.freqs.node = c.get_double("freq_node", s.freqs.node);
  s.freqs.etr = c.get_double("freq_etr", s.freqs.etr);
  s.fit.n_starts = c.get_size("fit_starts", s.fit.n_starts);
  s.fit.start_range = c.get_double("fit_start_range", s.fit.start_range);
  s.fit.start_min_magnitude = c.get_double("fit_start_min_magnitude", s.fit.start_min_magnitude);
  s.fit.evals_per_param = c.get_size("fit_evals_per_param", s.fit.evals_per_param);
  s.fit.min_evals = c.get_size("fit_min_evals", s.fit.min_evals);
  s.fit.ftol = c.get_double("fit_ftol", s.fit.ftol);
  s.fit.seed = s.seed;
  try {
    s.check();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return s;
}

int cmd_sample(Context& ctx) {
  std::optional<bms::Dataset> data;
  int n_vars = 0;
  if (ctx.cfg.has("data")) {
    const std::string path = ctx.cfg.get_string("data");
    require_file(path, "data file");
    try {
      data = bms::read_csv_file(path, ctx.cfg.get_string("target", ""));
      data->check();
    } catch (const std::exception& e) {
      throw UsageError(path + ": " + e.what());
    }
    n_vars = static_cast<int>(data->n_vars());
    if (ctx.cfg.has("n_vars") && static_cast<int>(ctx.cfg.get_size("n_vars", 0)) != n_vars)
      throw UsageError("n_vars disagrees with the number of input columns in the data");
  } else {
    if (!ctx.cfg.has("n_vars")) throw UsageError("give a data file, or n_vars for prior-only sampling");
    n_vars = static_cast<int>(ctx.cfg.get_size("n_vars", 1));
  }
  const int n_params = static_cast<int>(ctx.cfg.get_size("n_params", 3));
  const bms::OperationSet opset = opset_from(ctx, n_vars, n_params);
  const bms::SamplerConfig sc = sampler_config(ctx);
  const bms::PriorParams prior = load_prior(ctx, opset);
  const std::string out_path = ctx.cfg.get_string("output", "-");
  const std::size_t every = ctx.cfg.get_size("progress_every", std::max<std::size_t>(1, sc.n_steps / 10));
  ctx.warn_unused();

  const bms::Sampler sampler(opset, data, prior, sc);
  Output out(out_path);
  bms::TraceWriter writer(out.stream(), sampler.metadata());
  bms::RunHooks hooks;
  hooks.store_rows = false;
  hooks.on_state = [&](const bms::ChainState& c, std::size_t restart, std::size_t step) {
    writer.write(sampler.make_row(c, restart, step));
  };
  hooks.progress_every = every;
  const auto t0 = std::chrono::steady_clock::now();
  hooks.on_progress = [&](const bms::Progress& p) {
    std::cerr << "restart " << p.restart + 1 << "/" << sc.restarts << "  step " << p.step << "/" << p.n_steps
              << "  best DL " << p.best_dl << "  T0 acceptance " << std::fixed << std::setprecision(3) << p.t0_acceptance
              << std::defaultfloat << std::setprecision(6);
    if (ctx.verbose)
      std::cerr << "  cached fits " << p.cache_size << "  elapsed "
                << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s";
    std::cerr << '\n';
  };
  sampler.run(hooks);
  out.stream().flush();
  if (!out.stream()) throw std::runtime_error("failed writing trace");
  return kExitOk;
}

// ------------------------------------------------------------------ predict

/// Query rows with columns ordered as the trace variables.
std::vector<std::vector<double>> query_rows(const Context& ctx, const bms::TraceMetadata& meta) {
  const auto& vars = meta.variables;
  if (ctx.cfg.has("input")) {
    const std::string path = ctx.cfg.get_string("input");
    require_file(path, "input file");
    std::ifstream in(path);
    std::vector<std::string> header;
    std::vector<std::vector<double>> raw;
    try {
      raw = bms::read_input_rows(in, &header);
    } catch (const std::exception& e) {
      throw UsageError(path + ": " + e.what());
    }
    std::vector<std::size_t> col(vars.size());
    for (std::size_t v = 0; v < vars.size(); ++v) {
      std::size_t j = 0;
      while (j < header.size() && header[j] != vars[v]) ++j;
      if (j == header.size()) throw UsageError(path + ": missing input column '" + vars[v] + "'");
      col[v] = j;
    }
    std::vector<std::vector<double>> rows;
    for (const auto& r : raw) {
      std::vector<double> x(vars.size());
      for (std::size_t v = 0; v < vars.size(); ++v) x[v] = r[col[v]];
      rows.push_back(std::move(x));
    }
    return rows;
  }
  if (ctx.cfg.has("grid")) {
    // name=lo:hi:count, one per variable; the cartesian product, last variable fastest
    std::map<std::string, std::vector<double>> axes;
    for (const auto& item : split(ctx.cfg.get_string("grid"), ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw UsageError("grid: expected name=lo:hi:count, got '" + item + "'");
      const auto parts = split(item.substr(eq + 1), ':');
      if (parts.size() != 3) throw UsageError("grid: expected name=lo:hi:count, got '" + item + "'");
      const double lo = to_number(parts[0], "grid"), hi = to_number(parts[1], "grid");
      const double cnt = to_number(parts[2], "grid");
      if (!(cnt >= 1) || cnt != std::floor(cnt)) throw UsageError("grid: count must be a positive integer");
      std::vector<double> axis(static_cast<std::size_t>(cnt));
      for (std::size_t i = 0; i < axis.size(); ++i)
        axis[i] = axis.size() == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(axis.size() - 1);
      axes[item.substr(0, eq)] = axis;
    }
    std::vector<std::vector<double>> rows{{}};
    for (const auto& v : vars) {
      auto it = axes.find(v);
      if (it == axes.end()) throw UsageError("grid: no axis for variable '" + v + "'");
      std::vector<std::vector<double>> next;
      for (const auto& r : rows)
        for (double x : it->second) {
          auto e = r;
          e.push_back(x);
          next.push_back(std::move(e));
        }
      rows = std::move(next);
      axes.erase(it);
    }
    if (!axes.empty()) throw UsageError("grid: '" + axes.begin()->first + "' is not a variable of the trace");
    return rows;
  }
  return {};
}

void write_number(std::ostream& out, const std::optional<double>& v) {
  if (v && std::isfinite(*v))
    out << *v;
  else
    out << "nan";
}

std::string quantile_label(double q) {
  std::ostringstream o;
  o << "q" << q;
  return o.str();
}

int cmd_predict(Context& ctx) {
  const std::string trace_path = ctx.require("trace");
  const std::string mode = ctx.cfg.get_string("mode", "mdl");
  if (mode != "mdl" && mode != "median" && mode != "median-model")
    throw UsageError("mode must be one of mdl, median, median-model");
  const auto qs = number_list(ctx.cfg.get_string("quantiles", "0.05,0.95"), "quantiles");
  if (qs.size() != 2 || !(qs[0] >= 0 && qs[0] <= qs[1] && qs[1] <= 1))
    throw UsageError("quantiles: expected two values 0 <= low <= high <= 1");
  require_file(trace_path, "trace");
  bms::ModelTrace trace;
  try {
    trace = bms::read_trace_file(trace_path);
  } catch (const std::exception& e) {
    throw UsageError(trace_path + ": " + e.what());
  }
  if (trace.meta.variables.empty())
    for (int v = 0; v < trace.meta.n_vars; ++v) trace.meta.variables.push_back("x" + std::to_string(v + 1));
  const auto rows = query_rows(ctx, trace.meta);
  const std::string out_path = ctx.cfg.get_string("output", "-");
  ctx.warn_unused();

  const bms::PredictiveEnsemble ens = bms::ensemble_from_trace(trace);
  const auto& vars = trace.meta.variables;
  Output out(out_path);
  std::ostream& summary = (rows.empty() || !out.is_stdout()) ? std::cout : std::cerr;
  std::ostream& csv = out.stream();
  csv << std::setprecision(17);
  auto header = [&](const std::vector<std::string>& tail) {
    for (const auto& v : vars) csv << v << ',';
    for (std::size_t i = 0; i < tail.size(); ++i) csv << tail[i] << (i + 1 < tail.size() ? ',' : '\n');
  };
  auto single_model = [&](const bms::FittedModel& m) {
    header({"prediction"});
    for (const auto& x : rows) {
      for (double v : x) csv << v << ',';
      write_number(csv, bms::evaluate(m.tree, ens.opset, x, m.theta));
      csv << '\n';
    }
  };
  auto print_theta = [&](const bms::FittedModel& m) {
    summary << "theta =";
    for (double t : m.theta) summary << ' ' << std::setprecision(10) << t;
    summary << std::setprecision(6) << '\n';
  };

  if (mode == "mdl") {
    const std::size_t i = bms::mdl_index(ens);
    const bms::FittedModel& m = ens.models[i];
    summary << "expression = " << bms::render(m.tree, ens.opset) << '\n'
            << "key = " << ens.keys[i] << '\n'
            << "description_length = " << std::setprecision(12) << m.description_length << std::setprecision(6) << '\n';
    print_theta(m);
    if (!rows.empty()) single_model(m);
    return kExitOk;
  }
  if (rows.empty()) throw UsageError("mode " + mode + " needs query points: give input or grid");
  if (mode == "median") {
    header({"median", quantile_label(qs[0]), quantile_label(qs[1]), "n_finite_members"});
    for (const auto& x : rows) {
      const auto s = bms::summarize_prediction(ens, x, qs[0], qs[1]);
      for (double v : x) csv << v << ',';
      write_number(csv, s.median);
      csv << ',';
      write_number(csv, s.low);
      csv << ',';
      write_number(csv, s.high);
      csv << ',' << s.n_finite << '\n';
    }
    return kExitOk;
  }
  const auto r = bms::median_predictive_model(ens, rows);
  const bms::FittedModel& m = ens.models[r.index];
  summary << "expression = " << bms::render(m.tree, ens.opset) << '\n'
          << "key = " << ens.keys[r.index] << '\n'
          << "mean_abs_distance_to_median = " << r.distance << '\n';
  print_theta(m);
  single_model(m);
  return kExitOk;
}

// ----------------------------------------------------- validate-equilibrium

int cmd_validate_equilibrium(Context& ctx) {
  bms::EquilibriumConfig e;
  const auto& c = ctx.cfg;
  e.with_data = c.get_bool("with_data", e.with_data);
  e.n_steps = c.get_size("n_steps", e.n_steps);
  e.burn_in = c.get_size("burn_in", e.burn_in);
  e.ladder_count = c.get_size("ladder_count", e.ladder_count);
  e.ladder_base = c.get_double("ladder_base", e.ladder_base);
  e.max_size = c.get_size("max_tree_size", e.max_size);
  e.offset = c.get_double("offset", e.offset);
  e.n_points = c.get_size("n", e.n_points);
  e.sigma = c.get_double("sigma", e.sigma);
  e.threshold = c.get_double("threshold", e.threshold);
  e.seed = ctx.seed();
  const std::string table_path = c.get_string("table", "");
  ctx.warn_unused();
  if (e.n_steps < 1) throw UsageError("n_steps must be >= 1");
  if (e.burn_in >= e.n_steps) throw UsageError("burn_in must be smaller than n_steps");

  const auto t0 = std::chrono::steady_clock::now();
  bms::EquilibriumReport rep;
  try {
    rep = bms::run_equilibrium(e);
  } catch (const std::invalid_argument& err) {
    throw UsageError(err.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "space: {+, sin}, 1 variable, 1 parameter, <= " << e.max_size << " nodes, uniform prior\n"
            << "data: ";
  if (e.with_data)
    std::cout << e.n_points << " points, y = " << e.offset << " + x + sin(x) + N(0, " << e.sigma << ")\n";
  else
    std::cout << "none\n";
  std::cout
            << "trees " << rep.n_trees << "  distinct expressions " << rep.n_keys << "  samples " << rep.n_samples
            << "  ladder " << e.ladder_count << '\n'
            << "total variation (trees) " << rep.tv_trees << "\n"
            << "total variation (expressions) " << rep.tv_keys << "\n"
            << "threshold " << rep.threshold << "  " << (rep.pass() ? "PASS" : "FAIL") << "  (" << std::fixed
            << std::setprecision(1) << secs << " s)\n"
            << std::defaultfloat << std::setprecision(6);
  if (ctx.verbose) {
    std::cout << "top expressions (exact vs sampled):\n";
    for (std::size_t i = 0; i < std::min<std::size_t>(10, rep.table.size()); ++i)
      std::cout << "  " << rep.table[i].expression << "  " << rep.table[i].exact << "  " << rep.table[i].empirical << '\n';
  }
  if (!table_path.empty()) {
    Output out(table_path);
    auto& t = out.stream();
    t << "key\texpression\tn_trees\tdescription_length\texact\tempirical\n" << std::setprecision(12);
    for (const auto& r : rep.table)
      t << r.key << '\t' << r.expression << '\t' << r.n_trees << '\t' << r.description_length << '\t' << r.exact << '\t'
        << r.empirical << '\n';
  }
  return rep.pass() ? kExitOk : kExitThreshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian symbolic regression: sample closed-form models from their posterior."};
  app.set_version_flag("--version", "bms 0.1.0");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string seed, threads;
  bool verbose = false;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Random seed (default 0)");
  CLI::Option* threads_opt = app.add_option("--threads", threads, "Worker threads for model fitting (default 1)");
  app.add_option("--config", config_path, "key = value settings file");
  app.add_flag("-v,--verbose", verbose, "More progress output");

  OptionTable opts;
  std::function<int(Context&)> command;

  auto* fit = app.add_subcommand("fit-prior", "Fit prior hyperparameters to a corpus or stats table");
  opts.add(fit, "corpus", "corpus", "Corpus of prefix expressions, or a stats TSV");
  opts.add(fit, "-o,--output", "output", "Prior table to write (default stdout)");
  opts.add(fit, "--report", "report", "Per-sweep convergence report (TSV)");
  opts.add(fit, "--ops", "ops", "Comma-separated operations, or 'default'");
  opts.add(fit, "--n-vars", "n_vars", "Number of variables");
  opts.add(fit, "--n-params", "n_params", "Number of parameters");
  opts.add(fit, "--lambda", "lambda", "Update step size");
  opts.add(fit, "--batch", "batch", "Expressions sampled per sweep");
  opts.add(fit, "--tolerance", "tolerance", "Stop when the max relative parameter change stays below this");
  opts.add(fit, "--patience", "patience", "...for this many consecutive sweeps");
  opts.add(fit, "--max-sweeps", "max_sweeps", "Sweep limit");
  opts.add(fit, "--absent-penalty", "absent_penalty", "alpha for operations absent from the corpus");
  opts.add(fit, "--clip", "clip", "Clip of the relative error used in one update");
  opts.add(fit, "--warm-start", "warm_start", "Initial prior table");
  opts.add(fit, "--max-size", "max_tree_size", "Maximum tree size of sampled expressions");
  opts.flag(fit, "--lenient", "strict", "false", "Skip unparseable corpus lines with a warning");
  opts.flag(fit, "--stats-only", "stats_only", "true", "Write the corpus statistics table instead of fitting");
  fit->callback([&] { command = cmd_fit_prior; });

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  gen->require_subcommand(1);
  auto* gexpr = gen->add_subcommand("expression", "y = F(x, theta) + N(0, sigma), inputs uniform in ranges");
  opts.add(gexpr, "--expr", "expr", "Expression in prefix notation, e.g. \"(* p1 (sin x1))\"");
  opts.add(gexpr, "--theta", "theta", "Parameter values p1,p2,...");
  opts.add(gexpr, "--ranges", "ranges", "Input ranges lo:hi,lo:hi,... (one per variable)");
  opts.add(gexpr, "-n,--n", "n", "Number of points");
  opts.add(gexpr, "--sigma", "sigma", "Noise standard deviation");
  opts.add(gexpr, "--ops", "ops", "Comma-separated operations, or 'default'");
  opts.add(gexpr, "-o,--output", "output", "CSV to write (default stdout)");
  gexpr->callback([&] { command = cmd_generate_expression; });
  auto* gros = gen->add_subcommand("rossler", "States (x, y, z) of the Rössler attractor and one noisy derivative");
  opts.add(gros, "--a", "a", "Parameter a");
  opts.add(gros, "--b", "b", "Parameter b");
  opts.add(gros, "--c", "c", "Parameter c");
  opts.add(gros, "--dt", "dt", "RK4 step");
  opts.add(gros, "--transient", "transient", "Discarded initial time");
  opts.add(gros, "--span", "span", "Sampled time span");
  opts.add(gros, "--initial", "initial", "Initial state x,y,z");
  opts.add(gros, "-n,--n", "n", "Number of points");
  opts.add(gros, "--sigma", "sigma", "Noise standard deviation on the derivative");
  opts.add(gros, "--target", "target", "Derivative to emit: x, y or z");
  opts.add(gros, "-o,--output", "output", "CSV to write (default stdout)");
  gros->callback([&] { command = cmd_generate_rossler; });

  auto* smp = app.add_subcommand("sample", "Sample models for a dataset; writes a JSONL trace");
  opts.add(smp, "data", "data", "CSV dataset");
  opts.add(smp, "--target", "target", "Target column (default: last column)");
  opts.add(smp, "-o,--output", "output", "Trace to write (default stdout)");
  opts.add(smp, "--prior", "prior", "'uniform', a prior table, or a corpus / stats file to fit");
  opts.add(smp, "--ops", "ops", "Comma-separated operations, or 'default'");
  opts.add(smp, "--n-vars", "n_vars", "Variables (prior-only sampling without data)");
  opts.add(smp, "--n-params", "n_params", "Number of parameters (default 3)");
  opts.add(smp, "--steps", "n_steps", "Sweeps per restart");
  opts.add(smp, "--temperatures", "ladder_count", "Number of temperatures");
  opts.add(smp, "--ladder-base", "ladder_base", "Geometric ladder ratio");
  opts.add(smp, "--burn-in", "burn_in", "Sweeps before recording (default 40%)");
  opts.add(smp, "--thinning", "thinning", "Record every n-th sweep");
  opts.add(smp, "--restarts", "restarts", "Independent restarts");
  opts.add(smp, "--max-size", "max_tree_size", "Maximum tree size");
  opts.add(smp, "--progress-every", "progress_every", "Sweeps between progress lines");
  opts.flag(smp, "--allow-duplicates", "forbid_duplicates", "false", "Do not reject equivalent trees");
  opts.flag(smp, "--all-temperatures", "record_all_temperatures", "true", "Record every replica, not just T = 1");
  smp->callback([&] { command = cmd_sample; });

  auto* prd = app.add_subcommand("predict", "Predictions from a trace");
  opts.add(prd, "trace", "trace", "JSONL trace written by sample");
  opts.add(prd, "--mode", "mode", "mdl, median or median-model");
  opts.add(prd, "--input", "input", "CSV of query points (columns named as the data inputs)");
  opts.add(prd, "--grid", "grid", "Query grid name=lo:hi:count,...");
  opts.add(prd, "--quantiles", "quantiles", "Lower and upper quantile (default 0.05,0.95)");
  opts.add(prd, "-o,--output", "output", "CSV to write (default stdout)");
  prd->callback([&] { command = cmd_predict; });

  auto* eq = app.add_subcommand("validate-equilibrium",
                                "Compare sampled visit frequencies with the exact posterior on a small space");
  opts.add(eq, "--steps", "n_steps", "Sweeps (default 1000000)");
  opts.add(eq, "--burn-in", "burn_in", "Discarded sweeps");
  opts.add(eq, "--temperatures", "ladder_count", "Number of temperatures (default 1)");
  opts.add(eq, "--ladder-base", "ladder_base", "Geometric ladder ratio");
  opts.add(eq, "--max-size", "max_tree_size", "Maximum tree size (default 7)");
  opts.add(eq, "--points", "n", "Data points");
  opts.add(eq, "--sigma", "sigma", "Noise standard deviation");
  opts.add(eq, "--offset", "offset", "Constant in y = offset + x + sin(x)");
  opts.add(eq, "--threshold", "threshold", "Total-variation threshold");
  opts.add(eq, "--table", "table", "Per-expression frequency table (TSV)");
  opts.flag(eq, "--no-data", "with_data", "false", "Sample the prior only");
  eq->callback([&] { command = cmd_validate_equilibrium; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx;
    ctx.verbose = verbose;
    if (!config_path.empty()) ctx.cfg = bms::KeyValueConfig::load(config_path);
    opts.apply(ctx.cfg);
    if (seed_opt->count() > 0) ctx.cfg.set("seed", seed);
    if (threads_opt->count() > 0) ctx.cfg.set("threads", threads);
    return command(ctx);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const bms::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
