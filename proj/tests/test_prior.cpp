#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "bms/bms.hpp"

using namespace bms;

namespace {

PriorParams plus_only(const OperationSet& os, double a, double b) {
  PriorParams p = PriorParams::uniform(os);
  p.alpha[*os.find("+")] = a;
  p.beta[*os.find("+")] = b;
  return p;
}

}  // namespace

TEST(PriorEnergy, Examples) {
  const auto os = OperationSet::defaults(1, 1);
  const PriorParams p = plus_only(os, 1.0, 0.5);
  OpCountVector c(os.size(), 0);
  EXPECT_DOUBLE_EQ(prior_energy(c, p), 0.0);
  c[*os.find("+")] = 1;
  EXPECT_DOUBLE_EQ(prior_energy(c, p), 1.5);
  c[*os.find("+")] = 2;
  EXPECT_DOUBLE_EQ(prior_energy(c, p), 4.0);
  EXPECT_DOUBLE_EQ(prior_energy(parse_expression("(+ (+ x1 p1) x1)", os), p), 4.0);
}

TEST(PriorEnergy, MatchesTheSumOverOperations) {
  const auto os = OperationSet::defaults(1, 1);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3);
  std::uniform_int_distribution<int> n(0, 6);
  PriorParams p = PriorParams::uniform(os);
  for (auto& a : p.alpha) a = u(rng);
  for (auto& b : p.beta) b = std::fabs(u(rng));
  for (int trial = 0; trial < 100; ++trial) {
    OpCountVector c(os.size());
    double expected = 0;
    for (std::size_t o = 0; o < c.size(); ++o) {
      c[o] = n(rng);
      expected += p.alpha[o] * c[o] + p.beta[o] * c[o] * c[o];
    }
    EXPECT_NEAR(prior_energy(c, p), expected, 1e-12);
  }
}

TEST(CorpusStatistics, Examples) {
  const auto os = OperationSet::defaults(1, 1);
  const std::size_t plus = *os.find("+");
  {
    std::istringstream in("(+ x1 p1)\n");
    const auto s = corpus_stats(in, os, true);
    EXPECT_EQ(s.n_expressions, 1u);
    EXPECT_DOUBLE_EQ(s.mean_count[plus], 1.0);
    EXPECT_DOUBLE_EQ(s.mean_sq_count[plus], 1.0);
  }
  {
    std::istringstream in("# comment\n(sin x1)\n\n(+ (+ x1 x7) p3)\n");
    const auto s = corpus_stats(in, os, true);
    EXPECT_EQ(s.n_expressions, 2u);
    EXPECT_DOUBLE_EQ(s.mean_count[plus], 1.0);
    EXPECT_DOUBLE_EQ(s.mean_sq_count[plus], 2.0);
  }
}

TEST(CorpusStatistics, StrictAndLenientParsing) {
  const auto os = OperationSet::defaults(1, 1);
  std::istringstream strict_in("(+ x1 p1)\n(+ x1\n");
  EXPECT_THROW(corpus_stats(strict_in, os, true), std::exception);
  std::istringstream lenient_in("(+ x1 p1)\n(+ x1\n");
  std::vector<LineError> errors;
  const auto s = corpus_stats(lenient_in, os, false, &errors);
  EXPECT_EQ(s.n_expressions, 1u);
  ASSERT_EQ(errors.size(), 1u);
  EXPECT_EQ(errors[0].line, 2u);
}

TEST(CorpusStatistics, BundledCorpusMatchesBundledTable) {
  const auto os = OperationSet::defaults(1, 1);
  const auto from_corpus = load_stats(BMS_DATA_DIR "/corpus.txt", os, true);
  const auto from_table = load_stats(BMS_DATA_DIR "/corpus_stats.tsv", os, true);
  EXPECT_EQ(from_corpus.n_expressions, from_table.n_expressions);
  for (std::size_t o = 0; o < os.size(); ++o) {
    EXPECT_NEAR(from_corpus.mean_count[o], from_table.mean_count[o], 1e-9) << os.op(o).name;
    EXPECT_NEAR(from_corpus.mean_sq_count[o], from_table.mean_sq_count[o], 1e-9) << os.op(o).name;
  }
}

TEST(PriorTables, RoundTrip) {
  const auto os = OperationSet::defaults(5, 8);
  PriorParams p = PriorParams::uniform(os);
  for (std::size_t o = 0; o < os.size(); ++o) {
    p.alpha[o] = 0.1 * static_cast<double>(o) - 0.7;
    p.beta[o] = 1.0 / (1.0 + static_cast<double>(o));
  }
  std::stringstream ss;
  write_prior_tsv(ss, p);
  const PriorParams q = read_prior_tsv(ss);
  EXPECT_EQ(q.ops, p.ops);
  EXPECT_EQ(q.alpha, p.alpha);
  EXPECT_EQ(q.beta, p.beta);
  EXPECT_EQ(q.n_vars, 5);
  EXPECT_EQ(q.n_params, 8);

  CorpusStats s;
  s.ops = p.ops;
  s.mean_count = p.alpha;
  s.mean_sq_count = p.beta;
  s.n_expressions = 4080;
  std::stringstream st;
  write_stats_tsv(st, s);
  const CorpusStats t = read_stats_tsv(st);
  EXPECT_EQ(t.ops, s.ops);
  EXPECT_EQ(t.mean_count, s.mean_count);
  EXPECT_EQ(t.mean_sq_count, s.mean_sq_count);
  EXPECT_EQ(t.n_expressions, 4080u);
}

TEST(PriorTables, RejectsMalformedInput) {
  std::istringstream no_header("+\t1\t0\n");
  EXPECT_THROW(read_prior_tsv(no_header), std::runtime_error);
  std::istringstream negative_beta("op\talpha\tbeta\n+\t1\t-0.5\n");
  EXPECT_THROW(read_prior_tsv(negative_beta), std::runtime_error);
}

TEST(PriorTables, BindingReordersAndRequiresEveryOperation) {
  const OperationSet a({"+", "sin"}, 1, 1), b({"sin", "+"}, 1, 1), c({"+", "cos"}, 1, 1);
  PriorParams p = PriorParams::uniform(a);
  p.alpha = {1.0, 2.0};
  const PriorParams q = p.bound_to(b);
  EXPECT_EQ(q.alpha, (std::vector<double>{2.0, 1.0}));
  EXPECT_THROW(p.bound_to(c), std::invalid_argument);
}

TEST(PriorUpdate, MatchingStatisticsAreAFixedPoint) {
  const auto os = OperationSet::defaults(1, 1);
  PriorParams p = PriorParams::uniform(os);
  std::mt19937_64 rng(1);
  for (std::size_t o = 0; o < os.size(); ++o) {
    p.alpha[o] = 0.3 * static_cast<double>(o);
    p.beta[o] = 0.1 * static_cast<double>(o);
  }
  CorpusStats target;
  target.ops = p.ops;
  target.mean_count.assign(os.size(), 0.4);
  target.mean_sq_count.assign(os.size(), 0.9);
  const PriorParams before = p;
  const auto info = prior_update(p, target, target, std::vector<bool>(os.size(), true), 0.05, 5.0, rng);
  EXPECT_EQ(p.alpha, before.alpha);
  EXPECT_EQ(p.beta, before.beta);
  EXPECT_EQ(info.max_relative_change, 0.0);
  EXPECT_EQ(info.max_relative_error, 0.0);
}

TEST(PriorUpdate, BetaIsClampedAtZeroAndErrorsAreClipped) {
  const OperationSet os({"+"}, 1, 1);
  PriorParams p = PriorParams::uniform(os);
  p.alpha = {1.0};
  p.beta = {1e-6};
  CorpusStats target, meas;
  target.ops = meas.ops = p.ops;
  target.mean_count = {1.0};
  target.mean_sq_count = {1.0};
  meas.mean_count = {0.0};     // too few sums: alpha decreases
  meas.mean_sq_count = {0.0};  // beta would go negative
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) prior_update(p, meas, target, {true}, 0.05, 5.0, rng);
  EXPECT_EQ(p.beta[0], 0.0);
  EXPECT_LT(p.alpha[0], 1.0);

  // a relative error of 1000 moves alpha by at most lambda * clip
  meas.mean_count = {1000.0};
  const double a0 = p.alpha[0];
  prior_update(p, meas, target, {true}, 0.05, 5.0, rng);
  EXPECT_LE(p.alpha[0] - a0, 0.05 * 5.0 + 1e-15);
  EXPECT_GE(p.alpha[0], a0);
}

TEST(PriorSampling, HugePenaltiesGiveSingleLeaves) {
  const auto os = OperationSet::defaults(2, 2);
  PriorParams p = PriorParams::uniform(os);
  for (auto& a : p.alpha) a = 60.0;
  PriorSampleConfig sc;
  sc.seed = 9;
  const auto trees = sample_from_prior(p, os, 2000, sc);
  std::size_t leaves = 0;
  for (const auto& t : trees) leaves += t.size() == 1;
  EXPECT_GE(leaves, 1990u);
}

TEST(PriorSampling, UniformPriorVisitsTheRestrictedSpaceEvenly) {
  const auto os = equilibrium_opset();
  const RestrictedSpace space(os, 7);
  PriorSampleConfig sc;
  sc.max_tree_size = 7;
  sc.thinning = 5;
  sc.seed = 3;
  std::vector<double> freq(space.size(), 0.0);
  const std::size_t n = 200000;
  for_each_prior_sample(PriorParams::uniform(os), os, n, sc,
                        [&](const ExpressionTree& t, const OpCountVector&) { freq[space.index_of(t)] += 1.0 / n; });
  const std::vector<double> flat(space.size(), 1.0 / static_cast<double>(space.size()));
  EXPECT_LT(total_variation(freq, flat), 0.05);
}

TEST(PriorFit, RecoversStatisticsOfAKnownPrior) {
  // corpus drawn from a known prior; refitting from alpha = beta = 0 must
  // regenerate every <n_o> within 10 %
  const OperationSet os({"+", "*", "sin", "exp"}, 2, 2);
  PriorParams truth = PriorParams::uniform(os);
  truth.alpha = {0.5, 1.0, 2.0, 2.5};
  truth.beta = {0.3, 0.2, 0.5, 1.0};
  PriorSampleConfig sc;
  sc.seed = 100;
  const CorpusStats target = CorpusStats::from_counts(os, sample_prior_counts(truth, os, 40000, sc));

  PriorFitConfig cfg;
  cfg.lambda = 0.05;
  cfg.batch = 4000;
  cfg.max_sweeps = 600;
  cfg.tolerance = 1e-4;
  cfg.seed = 5;
  const auto fit = fit_hyperparameters(target, os, cfg);

  sc.seed = 200;
  const CorpusStats regen = CorpusStats::from_counts(os, sample_prior_counts(fit.params, os, 40000, sc));
  for (std::size_t o = 0; o < os.size(); ++o)
    EXPECT_NEAR(regen.mean_count[o], target.mean_count[o], 0.10 * target.mean_count[o])
        << os.op(o).name << " alpha " << fit.params.alpha[o] << " beta " << fit.params.beta[o];
}

TEST(PriorFit, AbsentOperationsArePenalizedAndFrozen) {
  const OperationSet os({"+", "sin"}, 1, 1);
  CorpusStats target;
  target.ops = {"+", "sin"};
  target.mean_count = {0.5, 0.0};
  target.mean_sq_count = {0.8, 0.0};
  PriorFitConfig cfg;
  cfg.batch = 500;
  cfg.max_sweeps = 3;
  const auto fit = fit_hyperparameters(target, os, cfg);
  EXPECT_EQ(fit.params.alpha[1], cfg.absent_penalty);
  EXPECT_EQ(fit.params.beta[1], 0.0);
  EXPECT_FALSE(fit.report.converged);
  EXPECT_EQ(fit.report.sweeps, 3u);
}
