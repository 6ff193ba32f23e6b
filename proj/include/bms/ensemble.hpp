#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bms/canonical.hpp"
#include "bms/evaluate.hpp"
#include "bms/model_fit.hpp"
#include "bms/opset.hpp"
#include "bms/trace.hpp"

namespace bms {

/// Models drawn from the T = 1 posterior sample. Repeats are kept: visit
/// frequency is the posterior weight.
struct PredictiveEnsemble {
  OperationSet opset;
  std::vector<FittedModel> models;
  std::vector<std::string> keys;  // canonical keys, parallel to models
};

/// Builds the ensemble from recorded T = 1 rows with a finite description length.
inline PredictiveEnsemble ensemble_from_trace(const ModelTrace& trace) {
  PredictiveEnsemble e{trace_opset(trace.meta), {}, {}};
  for (const auto& r : trace.rows) {
    if (r.temperature_index != 0 || !std::isfinite(r.description_length)) continue;
    e.models.push_back(model_from_row(r, e.opset));
    e.keys.push_back(r.key);
  }
  if (e.models.empty()) throw std::runtime_error("trace has no finite T = 1 states");
  return e;
}

namespace detail {
/// Strict weak order for selections: lower score, then smaller tree, then key.
inline bool better(double score_a, std::size_t size_a, const std::string& key_a, double score_b, std::size_t size_b,
                   const std::string& key_b) {
  if (score_a != score_b) return score_a < score_b;
  if (size_a != size_b) return size_a < size_b;
  return key_a < key_b;
}
}  // namespace detail

/// Index of the minimum-description-length row; ties go to the smaller tree,
/// then the lexicographically smaller canonical key.
inline std::size_t mdl_index(const std::vector<TraceRow>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty trace");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (detail::better(rows[i].description_length, rows[i].size, rows[i].key, rows[best].description_length,
                       rows[best].size, rows[best].key))
      best = i;
  return best;
}

/// The MDL model among the trace's T = 1 rows.
inline FittedModel mdl_model(const ModelTrace& trace) {
  std::vector<TraceRow> t0;
  for (const auto& r : trace.rows)
    if (r.temperature_index == 0) t0.push_back(r);
  if (t0.empty()) throw std::invalid_argument("trace has no T = 1 rows");
  return model_from_row(t0[mdl_index(t0)], trace_opset(trace.meta));
}

inline std::size_t mdl_index(const PredictiveEnsemble& e) {
  if (e.models.empty()) throw std::invalid_argument("empty ensemble");
  std::size_t best = 0;
  for (std::size_t i = 1; i < e.models.size(); ++i)
    if (detail::better(e.models[i].description_length, e.models[i].tree.size(), e.keys[i],
                       e.models[best].description_length, e.models[best].tree.size(), e.keys[best]))
      best = i;
  return best;
}

/// Member predictions at x. Non-finite predictions are dropped and counted.
struct MemberPredictions {
  std::vector<double> values;
  std::size_t dropped = 0;
};

inline MemberPredictions posterior_predictive(const PredictiveEnsemble& e, std::span<const double> x) {
  if (x.size() < static_cast<std::size_t>(e.opset.n_vars())) throw std::invalid_argument("query point has too few variables");
  MemberPredictions p;
  p.values.reserve(e.models.size());
  for (const auto& m : e.models) {
    const double v = evaluate(m.tree, e.opset, x, m.theta);
    if (std::isfinite(v))
      p.values.push_back(v);
    else
      ++p.dropped;
  }
  return p;
}

/// Sample median; the mean of the two central order statistics for even counts.
inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  const std::size_t n = v.size(), mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return lo + (hi - lo) / 2.0;
}

/// Linear-interpolation quantile (type 7) for q in [0, 1].
inline std::optional<double> quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nullopt;
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Ensemble median at x, or nothing when no member is finite there.
inline std::optional<double> median_prediction(const PredictiveEnsemble& e, std::span<const double> x) {
  return median(posterior_predictive(e, x).values);
}

struct PredictionSummary {
  std::optional<double> median;
  std::optional<double> low;
  std::optional<double> high;
  std::size_t n_finite = 0;
};

inline PredictionSummary summarize_prediction(const PredictiveEnsemble& e, std::span<const double> x, double q_low = 0.05,
                                              double q_high = 0.95) {
  auto p = posterior_predictive(e, x);
  PredictionSummary s;
  s.n_finite = p.values.size();
  s.median = median(p.values);
  s.low = quantile(p.values, q_low);
  s.high = quantile(p.values, q_high);
  return s;
}

struct MedianModelResult {
  std::size_t index = 0;
  double distance = kInfinity;
};

/// The member whose predictions are closest, in mean absolute difference over
/// grid points where both it and the median are finite, to the ensemble
/// median. `grid` holds one point per row (row-major, n_vars wide). Members
/// finite at no usable grid point are never selected.
inline MedianModelResult median_predictive_model(const PredictiveEnsemble& e, const std::vector<std::vector<double>>& grid) {
  if (e.models.empty()) throw std::invalid_argument("empty ensemble");
  if (grid.empty()) throw std::invalid_argument("empty evaluation grid");
  // predictions[m][g]
  std::vector<std::vector<double>> pred(e.models.size(), std::vector<double>(grid.size()));
  std::vector<std::optional<double>> med(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    std::vector<double> finite;
    for (std::size_t m = 0; m < e.models.size(); ++m) {
      pred[m][g] = evaluate(e.models[m].tree, e.opset, grid[g], e.models[m].theta);
      if (std::isfinite(pred[m][g])) finite.push_back(pred[m][g]);
    }
    med[g] = median(std::move(finite));
  }
  std::optional<MedianModelResult> best;
  for (std::size_t m = 0; m < e.models.size(); ++m) {
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t g = 0; g < grid.size(); ++g)
      if (med[g] && std::isfinite(pred[m][g])) {
        sum += std::fabs(pred[m][g] - *med[g]);
        ++n;
      }
    if (n == 0) continue;
    const double d = sum / static_cast<double>(n);
    if (!best || detail::better(d, e.models[m].tree.size(), e.keys[m], best->distance,
                                e.models[best->index].tree.size(), e.keys[best->index]))
      best = MedianModelResult{m, d};
  }
  if (!best) throw std::runtime_error("no ensemble member is finite on the evaluation grid");
  return *best;
}

}  // namespace bms
