#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bms/dataset.hpp"
#include "bms/evaluate.hpp"
#include "bms/opset.hpp"
#include "bms/tree.hpp"

namespace bms {

/// Data from a known expression: inputs uniform in per-variable ranges,
/// targets F(x, theta) + N(0, sigma).
struct ExpressionDataSpec {
  std::vector<double> theta;
  std::vector<std::pair<double, double>> ranges;  // one per variable
  std::size_t n = 400;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

inline Dataset generate_expression_data(const ExpressionTree& tree, const OperationSet& opset,
                                        const ExpressionDataSpec& spec) {
  const auto nv = static_cast<std::size_t>(opset.n_vars());
  if (spec.n < 1) throw std::invalid_argument("need at least one data point");
  if (!(spec.sigma >= 0)) throw std::invalid_argument("noise sigma must be nonnegative");
  if (spec.ranges.size() != nv) throw std::invalid_argument("need one input range per variable");
  if (spec.theta.size() < static_cast<std::size_t>(opset.n_params()))
    throw std::invalid_argument("need one value per parameter symbol");
  for (const auto& [lo, hi] : spec.ranges)
    if (!(lo <= hi)) throw std::invalid_argument("input range lower bound exceeds upper bound");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  for (std::size_t k = 0; k < nv; ++k) d.names.push_back("x" + std::to_string(k + 1));
  d.target_name = "y";
  d.columns.assign(nv, std::vector<double>(spec.n));
  d.y.resize(spec.n);
  std::vector<double> x(nv);
  for (std::size_t i = 0; i < spec.n; ++i) {
    for (std::size_t k = 0; k < nv; ++k) {
      x[k] = std::uniform_real_distribution<double>(spec.ranges[k].first, spec.ranges[k].second)(rng);
      d.columns[k][i] = x[k];
    }
    const double f = evaluate(tree, opset, x, spec.theta);
    if (!std::isfinite(f)) throw std::runtime_error("expression is not finite at generated point " + std::to_string(i));
    const double e = noise(rng);
    d.y[i] = spec.sigma > 0 ? f + spec.sigma * e : f;
  }
  return d;
}

/// The Rössler system x' = -y - z, y' = x + a y, z' = b + z (x - c).
struct RosslerSpec {
  double a = 0.2, b = 0.2, c = 5.7;
  double dt = 0.01;
  double transient = 100.0;
  double span = 500.0;
  std::array<double, 3> initial{1.0, 1.0, 1.0};
  std::size_t n = 200;
  double sigma = 1.0;
  char target = 'x';  // which derivative: 'x', 'y' or 'z'
  std::uint64_t seed = 0;
};

inline std::array<double, 3> rossler_rhs(const std::array<double, 3>& s, const RosslerSpec& p) {
  return {-s[1] - s[2], s[0] + p.a * s[1], p.b + s[2] * (s[0] - p.c)};
}

inline std::array<double, 3> rk4_step(const std::array<double, 3>& s, const RosslerSpec& p) {
  auto add = [](const std::array<double, 3>& u, const std::array<double, 3>& v, double h) {
    return std::array<double, 3>{u[0] + h * v[0], u[1] + h * v[1], u[2] + h * v[2]};
  };
  const double h = p.dt;
  const auto k1 = rossler_rhs(s, p);
  const auto k2 = rossler_rhs(add(s, k1, h / 2), p);
  const auto k3 = rossler_rhs(add(s, k2, h / 2), p);
  const auto k4 = rossler_rhs(add(s, k3, h), p);
  std::array<double, 3> out;
  for (int i = 0; i < 3; ++i) out[i] = s[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  return out;
}

/// Fixed-step RK4 trajectory, transient discarded, subsampled evenly to n
/// states. Columns x, y, z; target is the chosen exact derivative plus noise.
inline Dataset generate_rossler_data(const RosslerSpec& p) {
  if (!(p.dt > 0)) throw std::invalid_argument("integration step must be positive");
  if (p.n < 1) throw std::invalid_argument("need at least one data point");
  if (!(p.sigma >= 0)) throw std::invalid_argument("noise sigma must be nonnegative");
  if (!(p.span > 0) || p.transient < 0) throw std::invalid_argument("span must be positive, transient nonnegative");
  const int target = p.target == 'x' ? 0 : p.target == 'y' ? 1 : p.target == 'z' ? 2 : -1;
  if (target < 0) throw std::invalid_argument("Rössler target must be x, y or z");

  const auto skip = static_cast<std::size_t>(std::llround(p.transient / p.dt));
  const auto steps = static_cast<std::size_t>(std::llround(p.span / p.dt));
  if (steps < p.n) throw std::invalid_argument("span / dt is smaller than the number of points");
  const std::size_t stride = steps / p.n;

  std::array<double, 3> s = p.initial;
  auto advance = [&](std::size_t i) {
    s = rk4_step(s, p);
    if (!std::isfinite(s[0]) || !std::isfinite(s[1]) || !std::isfinite(s[2]))
      throw std::runtime_error("Rössler trajectory diverged at step " + std::to_string(i));
  };
  for (std::size_t i = 0; i < skip; ++i) advance(i);

  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  d.names = {"x", "y", "z"};
  d.target_name = std::string("d") + p.target;
  d.columns.assign(3, {});
  for (std::size_t k = 0; k < p.n; ++k) {
    for (std::size_t i = 0; i < stride; ++i) advance(skip + k * stride + i);
    const auto ds = rossler_rhs(s, p);
    for (int c = 0; c < 3; ++c) d.columns[static_cast<std::size_t>(c)].push_back(s[static_cast<std::size_t>(c)]);
    const double e = noise(rng);
    d.y.push_back(p.sigma > 0 ? ds[static_cast<std::size_t>(target)] + p.sigma * e : ds[static_cast<std::size_t>(target)]);
  }
  return d;
}

}  // namespace bms
