#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "bms/bms.hpp"

using namespace bms;

namespace {

constexpr const char* kCosineProductText = "(/ (* (* x1 (+ p1 x2)) (cos x1)) (* p2 (log p2)))";

int count_of(const OpCountVector& c, const OperationSet& os, const char* name) { return c.at(*os.find(name)); }

ExpressionTree random_tree(const OperationSet& os, std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> pick(0, 2);
  const int kind = depth <= 0 ? 0 : pick(rng);
  if (kind == 0) {
    const int leaf = std::uniform_int_distribution<int>(0, os.n_leaves() - 1)(rng);
    return ExpressionTree::leaf(Symbol::leaf(leaf, os.n_vars()));
  }
  const auto& cls = kind == 1 ? os.unary() : os.binary();
  const int op = cls[std::uniform_int_distribution<std::size_t>(0, cls.size() - 1)(rng)];
  std::vector<ExpressionTree> kids;
  for (int i = 0; i < kind; ++i) kids.push_back(random_tree(os, rng, depth - 1));
  return ExpressionTree::apply(Symbol::operation(op, kind), kids);
}

}  // namespace

TEST(Parse, SumOfVariableAndParameter) {
  const auto os = OperationSet::defaults(1, 1);
  const auto t = parse_expression("(+ x1 p1)", os);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[0], Symbol::operation(*os.find("+"), 2));
  EXPECT_EQ(t[1], Symbol::variable(0));
  EXPECT_EQ(t[2], Symbol::parameter(0));
}

TEST(Parse, ProductWithCosine) {
  const auto os = OperationSet::defaults(1, 1);
  const auto t = parse_expression("(* (* p1 x1) (cos x1))", os);
  EXPECT_EQ(t.size(), 6u);  // *, *, p1, x1, cos, x1
  const auto c = count_operations(t, os);
  EXPECT_EQ(count_of(c, os, "*"), 2);
  EXPECT_EQ(count_of(c, os, "cos"), 1);
  EXPECT_EQ(t.operation_count(), 3u);
}

TEST(Parse, UnbalancedFormIsAnError) {
  const auto os = OperationSet::defaults(1, 1);
  EXPECT_THROW(parse_expression("(+ x1", os), ParseError);
  EXPECT_THROW(parse_expression("(+ x1 p1) x1", os), ParseError);
  EXPECT_THROW(parse_expression("(+ x1)", os), ParseError);
  EXPECT_THROW(parse_expression("(frob x1)", os), ParseError);
  EXPECT_THROW(parse_expression("x2", os), ParseError);
  EXPECT_THROW(parse_expression("p2", os), ParseError);
}

TEST(Parse, SizeLimit) {
  const auto os = OperationSet::defaults(1, 1);
  EXPECT_THROW(parse_expression("(+ x1 p1)", os, 2), ParseError);
  EXPECT_NO_THROW(parse_expression("(+ x1 p1)", os, 3));
}

TEST(Render, Examples) {
  const auto os = OperationSet::defaults(2, 2);
  const ExpressionTree x1 = ExpressionTree::leaf(Symbol::variable(0));
  const ExpressionTree p1 = ExpressionTree::leaf(Symbol::parameter(0));
  const ExpressionTree sum_kids[] = {x1, p1};
  EXPECT_EQ(render(ExpressionTree::apply(Symbol::operation(*os.find("+"), 2), sum_kids), os), "(+ x1 p1)");
  const ExpressionTree sin_kids[] = {x1};
  EXPECT_EQ(render(ExpressionTree::apply(Symbol::operation(*os.find("sin"), 1), sin_kids), os), "(sin x1)");
  EXPECT_EQ(render(parse_expression(kCosineProductText, os), os), kCosineProductText);
}

TEST(Render, RoundTripOnRandomTrees) {
  const auto os = OperationSet::defaults(3, 2);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto t = random_tree(os, rng, 5);
    const std::string text = render(t, os);
    EXPECT_EQ(parse_expression(text, os), t) << text;
    EXPECT_EQ(render(parse_expression(text, os), os), text);
  }
}

TEST(Render, NormalizesWhitespace) {
  const auto os = OperationSet::defaults(1, 1);
  EXPECT_EQ(render(parse_expression("  ( +\tx1\n  p1 ) ", os), os), "(+ x1 p1)");
}

TEST(Evaluate, Examples) {
  const auto os = OperationSet::defaults(2, 2);
  const std::vector<double> x2 = {2.0};
  const std::vector<double> th = {3.0};
  const auto os1 = OperationSet::defaults(1, 1);
  EXPECT_DOUBLE_EQ(evaluate(parse_expression("(+ x1 p1)", os1), os1, x2, th), 5.0);

  const std::vector<double> origin = {0.0, 0.0};
  const std::vector<double> theta = {-1.19, 0.29};
  EXPECT_DOUBLE_EQ(evaluate(parse_expression(kCosineProductText, os), os, origin, theta), 0.0);

  const auto os0 = OperationSet::defaults(1, 0);
  const std::vector<double> minus_one = {-1.0};
  EXPECT_TRUE(std::isnan(evaluate(parse_expression("(log x1)", os0), os0, minus_one, {})));
}

TEST(Evaluate, NonFiniteResultsAreTheSentinel) {
  const auto os = OperationSet::defaults(1, 0);
  const std::vector<double> zero = {0.0}, big = {1000.0}, neg = {-4.0};
  EXPECT_TRUE(std::isnan(evaluate(parse_expression("(/ x1 x1)", os), os, zero, {})));
  EXPECT_TRUE(std::isnan(evaluate(parse_expression("(exp x1)", os), os, big, {})));
  EXPECT_TRUE(std::isnan(evaluate(parse_expression("(sqrt x1)", os), os, neg, {})));
  EXPECT_TRUE(std::isnan(evaluate(parse_expression("(pow x1 (neg (exp x1)))", os), os, zero, {})));
}

TEST(Evaluate, TotalityFuzz) {
  const auto os = OperationSet::defaults(2, 2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  const double specials[] = {0.0, -0.0, 1e308, -1e308, 1e-310, std::nan(""), INFINITY, -INFINITY};
  for (int i = 0; i < 3000; ++i) {
    const auto t = random_tree(os, rng, 6);
    std::vector<double> x = {u(rng), u(rng)}, th = {u(rng), u(rng)};
    if (i % 3 == 0) x[0] = specials[static_cast<std::size_t>(i / 3) % std::size(specials)];
    const double v = evaluate(t, os, x, th);
    EXPECT_TRUE(std::isfinite(v) || std::isnan(v)) << render(t, os);
  }
}

TEST(Evaluate, CompiledMatchesScalarEvaluation) {
  const auto os = OperationSet::defaults(2, 2);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<std::vector<double>> cols(2, std::vector<double>(40));
  for (auto& c : cols)
    for (double& v : c) v = u(rng);
  for (int i = 0; i < 300; ++i) {
    const auto t = random_tree(os, rng, 5);
    const std::vector<double> th = {u(rng), u(rng)};
    CompiledExpression ce(t, os, cols, 40);
    const auto& out = ce.evaluate(th);
    for (std::size_t r = 0; r < 40; ++r) {
      const std::vector<double> x = {cols[0][r], cols[1][r]};
      const double s = evaluate(t, os, x, th);
      if (std::isnan(s))
        EXPECT_TRUE(std::isnan(out[r])) << render(t, os);
      else
        EXPECT_DOUBLE_EQ(out[r], s) << render(t, os);
    }
  }
}

TEST(OperationCounts, NewtonsLaw) {
  // G m1 m2 / r^2 with the square as its own operation
  const OperationSet os({"*", "/", "pow2"}, 3, 1);
  const auto t = parse_expression("(/ (* (* p1 x1) x2) (pow2 x3))", os);
  const auto c = count_operations(t, os);
  EXPECT_EQ(count_of(c, os, "*"), 2);
  EXPECT_EQ(count_of(c, os, "/"), 1);
  EXPECT_EQ(count_of(c, os, "pow2"), 1);
}

TEST(OperationCounts, LeafAndNestedTree) {
  const auto os = OperationSet::defaults(2, 2);
  const auto leaf = count_operations(parse_expression("x1", os), os);
  for (int v : leaf) EXPECT_EQ(v, 0);
  const auto c = count_operations(parse_expression(kCosineProductText, os), os);
  EXPECT_EQ(count_of(c, os, "*"), 3);
  EXPECT_EQ(count_of(c, os, "/"), 1);
  EXPECT_EQ(count_of(c, os, "+"), 1);
  EXPECT_EQ(count_of(c, os, "cos"), 1);
  EXPECT_EQ(count_of(c, os, "log"), 1);
  int total = 0;
  for (int v : c) total += v;
  EXPECT_EQ(total, 7);
}

TEST(Canonical, CommutativeOperandsAndIdempotence) {
  const auto os = OperationSet::defaults(2, 2);
  EXPECT_EQ(canonical_key(parse_expression("(+ x1 p1)", os), os), canonical_key(parse_expression("(+ p1 x1)", os), os));
  EXPECT_EQ(canonical_key(parse_expression("(* x2 (+ x1 p1))", os), os),
            canonical_key(parse_expression("(* (+ p1 x1) x2)", os), os));
  EXPECT_NE(canonical_key(parse_expression("(- x1 p1)", os), os), canonical_key(parse_expression("(- p1 x1)", os), os));
  EXPECT_NE(canonical_key(parse_expression("(+ x1 p1)", os), os), canonical_key(parse_expression("(+ x1 p2)", os), os));

  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto t = random_tree(os, rng, 5);
    const auto key = canonical_key(t, os);
    EXPECT_EQ(render_term(canonicalize(parse_term(key))), key) << render(t, os);
  }
}

TEST(Canonical, EquivalentRewritesShareAKey) {
  const auto os = OperationSet::defaults(2, 2);
  EXPECT_EQ(canonical_key(parse_expression("(+ (+ x1 x2) p1)", os), os),
            canonical_key(parse_expression("(+ x1 (+ p1 x2))", os), os));
  EXPECT_EQ(canonical_key(parse_expression("(- (neg x2) x1)", os), os),
            canonical_key(parse_expression("(- (neg x1) x2)", os), os));
  EXPECT_EQ(canonical_key(parse_expression("(- x1 x2)", os), os),
            canonical_key(parse_expression("(+ (neg x2) x1)", os), os));
  EXPECT_EQ(canonical_key(parse_expression("(* (* x1 x2) x1)", os), os),
            canonical_key(parse_expression("(* x1 (* x1 x2))", os), os));
}

TEST(ElementaryTrees, FamilySizes) {
  const OperationSet plus_sin({"+", "sin"}, 1, 1);
  EXPECT_EQ(count_elementary_trees(plus_sin, 0), 2u);
  EXPECT_EQ(count_elementary_trees(plus_sin, 1), 2u);
  EXPECT_EQ(count_elementary_trees(plus_sin, 2), 4u);

  const OperationSet binary_only({"+", "*"}, 1, 1);
  EXPECT_EQ(count_elementary_trees(binary_only, 1), 0u);
  EXPECT_EQ(count_elementary_trees(OperationSet({"+"}, 5, 8), 2), 169u);

  const auto os = OperationSet::defaults(2, 3);
  for (int order = 0; order < 3; ++order) {
    const std::size_t n = count_elementary_trees(os, order);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < n; ++i) {
      const auto t = elementary_tree(os, order, i);
      EXPECT_EQ(t.size(), static_cast<std::size_t>(order + 1));
      EXPECT_EQ(elementary_tree(os, order, i), t);
      seen.insert(render(t, os));
    }
    EXPECT_EQ(seen.size(), n);
  }
}

TEST(ElementaryTrees, SiteCounts) {
  const OperationSet os({"+", "sin"}, 1, 1);
  const auto a = parse_expression("(sin (+ x1 p1))", os);
  EXPECT_EQ(list_elementary_subtrees(a, 2), std::vector<std::size_t>{1});

  const auto leaf = parse_expression("x1", os);
  EXPECT_EQ(list_elementary_subtrees(leaf, 0).size(), 1u);
  EXPECT_TRUE(list_elementary_subtrees(leaf, 1).empty());
  EXPECT_TRUE(list_elementary_subtrees(leaf, 2).empty());

  // every leaf counts as a 0-ET site, including the one inside sin(x1)
  const auto b = parse_expression("(+ (sin x1) x1)", os);
  EXPECT_EQ(list_elementary_subtrees(b, 1).size(), 1u);
  EXPECT_EQ(list_elementary_subtrees(b, 0).size(), 2u);
  const auto omega = elementary_site_counts(b);
  EXPECT_EQ(omega[0], 2u);
  EXPECT_EQ(omega[1], 1u);
  EXPECT_EQ(omega[2], 0u);
}

TEST(Tree, SubtreeEditing) {
  const auto os = OperationSet::defaults(2, 2);
  const auto t = parse_expression("(* (+ x1 p1) (cos x2))", os);
  EXPECT_EQ(t.subtree_end(1), 4u);
  EXPECT_EQ(render(t.subtree(4), os), "(cos x2)");
  EXPECT_EQ(render(t.replace_subtree(1, parse_expression("x2", os)), os), "(* x2 (cos x2))");
  EXPECT_EQ(render(t.replace_node(0, Symbol::operation(*os.find("/"), 2)), os), "(/ (+ x1 p1) (cos x2))");
  EXPECT_EQ(t.parameters_used(), std::vector<int>{0});
}
