#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace bms {

struct NelderMeadOptions {
  std::size_t max_evals = 400;
  double initial_step = 1.0;
  double ftol = 1e-10;   // relative spread of simplex values
};

struct OptimizeResult {
  std::vector<double> x;
  double fx = std::numeric_limits<double>::infinity();
  std::size_t evals = 0;
};

/// Downhill simplex minimisation. Non-finite objective values are treated
/// as +inf, so the simplex simply retreats from invalid regions.
inline OptimizeResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> x0, const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  OptimizeResult best;
  std::size_t evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    const double fv = std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    if (fv < best.fx || best.x.empty()) {
      best.fx = fv;
      best.x = x;
    }
    return fv;
  };
  if (n == 0) {
    eval(x0);
    best.evals = evals;
    return best;
  }

  std::vector<std::vector<double>> simplex(n + 1, x0);
  std::vector<double> fs(n + 1);
  fs[0] = eval(x0);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = opt.initial_step * std::max(1.0, 0.1 * std::fabs(x0[i]));
    simplex[i + 1][i] += step;
    fs[i + 1] = eval(simplex[i + 1]);
  }

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  while (evals < opt.max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fs[a] < fs[b]; });
    const std::size_t lo = order.front(), hi = order.back(), second = order[n - 1];
    if (!std::isfinite(fs[lo])) break;  // nowhere valid near this start

    if (std::isfinite(fs[hi]) &&
        std::fabs(fs[hi] - fs[lo]) <= opt.ftol * (std::fabs(fs[lo]) + std::fabs(fs[hi])) + 1e-300)
      break;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != hi)
        for (std::size_t k = 0; k < n; ++k) centroid[k] += simplex[i][k] / static_cast<double>(n);

    for (std::size_t k = 0; k < n; ++k) trial[k] = centroid[k] + (centroid[k] - simplex[hi][k]);
    const double fr = eval(trial);
    if (fr < fs[lo]) {
      for (std::size_t k = 0; k < n; ++k) trial2[k] = centroid[k] + 2.0 * (centroid[k] - simplex[hi][k]);
      const double fe = eval(trial2);
      if (fe < fr) {
        simplex[hi] = trial2;
        fs[hi] = fe;
      } else {
        simplex[hi] = trial;
        fs[hi] = fr;
      }
      continue;
    }
    if (fr < fs[second]) {
      simplex[hi] = trial;
      fs[hi] = fr;
      continue;
    }
    const bool outside = fr < fs[hi];
    for (std::size_t k = 0; k < n; ++k)
      trial2[k] = outside ? centroid[k] + 0.5 * (trial[k] - centroid[k])
                          : centroid[k] + 0.5 * (simplex[hi][k] - centroid[k]);
    const double fc = eval(trial2);
    if (fc < std::min(fr, fs[hi])) {
      simplex[hi] = trial2;
      fs[hi] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == lo) continue;
      for (std::size_t k = 0; k < n; ++k) simplex[i][k] = simplex[lo][k] + 0.5 * (simplex[i][k] - simplex[lo][k]);
      fs[i] = eval(simplex[i]);
    }
  }
  best.evals = evals;
  return best;
}

}  // namespace bms
