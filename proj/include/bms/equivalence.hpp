#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "bms/dataset.hpp"
#include "bms/evaluate.hpp"
#include "bms/model_fit.hpp"
#include "bms/opset.hpp"
#include "bms/tree.hpp"

namespace bms {

// Two parametrised expressions denote the same model family when each can
// reproduce the other exactly by choosing its own parameters. This catches
// reparametrisations the canonical rewrite pass cannot see, such as
// x1 (p1 + x2) cos(x1) / (p2 log p2) versus x1 (c1 + c2 x2) cos(x1).

struct EquivalenceConfig {
  double relative_tolerance = 1e-4;  // RMS residual relative to RMS signal
  FitConfig fit{.n_starts = 12, .start_range = 10.0, .evals_per_param = 3000, .min_evals = 500};
  std::size_t min_points = 10;
};

/// Relative RMS error of the best fit of `family` to `target` on the probe
/// columns, or +inf when no fit is finite.
inline double representation_error(const ExpressionTree& family, const OperationSet& opset,
                                   const std::vector<std::vector<double>>& columns, const std::vector<double>& target,
                                   const FitConfig& fit) {
  Dataset d;
  d.columns = columns;
  d.y = target;
  for (std::size_t k = 0; k < columns.size(); ++k) d.names.push_back("x" + std::to_string(k + 1));
  d.target_name = "y";
  const FittedModel m = fit_parameters(family, opset, d, fit, std::nullopt, fnv1a("equivalence", fit.seed));
  if (!std::isfinite(m.sse)) return kInfinity;
  double ss = 0;
  for (double v : target) ss += v * v;
  const double rms = std::sqrt(ss / static_cast<double>(target.size()));
  const double err = std::sqrt(m.sse / static_cast<double>(target.size()));
  return rms > 0 ? err / rms : err;
}

/// True when model a (with parameters theta_a) and model b (theta_b) can each
/// be fitted to the other's predictions on the probe points to within the
/// relative tolerance. Probe points where either prediction is non-finite are
/// skipped; fewer than `min_points` usable points means not equivalent.
inline bool equivalent_up_to_parameters(const ExpressionTree& a, std::span<const double> theta_a,
                                        const ExpressionTree& b, std::span<const double> theta_b,
                                        const OperationSet& opset, const std::vector<std::vector<double>>& probe_columns,
                                        const EquivalenceConfig& cfg = {}) {
  if (probe_columns.empty()) return false;
  const std::size_t n = probe_columns.front().size();
  std::vector<std::vector<double>> cols(probe_columns.size());
  std::vector<double> ya, yb, x(probe_columns.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = probe_columns[k][i];
    const double va = evaluate(a, opset, x, theta_a), vb = evaluate(b, opset, x, theta_b);
    if (!std::isfinite(va) || !std::isfinite(vb)) continue;
    for (std::size_t k = 0; k < x.size(); ++k) cols[k].push_back(x[k]);
    ya.push_back(va);
    yb.push_back(vb);
  }
  if (ya.size() < cfg.min_points) return false;
  return representation_error(b, opset, cols, ya, cfg.fit) <= cfg.relative_tolerance &&
         representation_error(a, opset, cols, yb, cfg.fit) <= cfg.relative_tolerance;
}

}  // namespace bms
