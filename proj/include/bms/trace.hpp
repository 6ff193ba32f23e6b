#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bms/model_fit.hpp"
#include "bms/moves.hpp"
#include "bms/opset.hpp"
#include "bms/parse.hpp"
#include "bms/sampler.hpp"

namespace bms {

// Trace files are JSON lines: one metadata object, then one object per
// recorded state. Non-finite numbers are written as null (JSON has no inf)
// and read back as +inf.

namespace detail {

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline double number_or_inf(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

inline MoveKind move_from_name(const std::string& s) {
  for (MoveKind k : {MoveKind::None, MoveKind::NodeReplacement, MoveKind::RootAddition, MoveKind::RootRemoval,
                     MoveKind::ElementaryReplacement, MoveKind::Swap, MoveKind::Init})
    if (move_name(k) == s) return k;
  throw std::runtime_error("unknown move kind '" + s + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const TraceMetadata& m) {
  nlohmann::json prior = nlohmann::json::array();
  for (std::size_t o = 0; o < m.prior.ops.size(); ++o)
    prior.push_back({{"op", m.prior.ops[o]}, {"alpha", m.prior.alpha[o]}, {"beta", m.prior.beta[o]}});
  return {{"type", "metadata"},
          {"seed", m.seed},
          {"config", m.config_text},
          {"config_hash", m.config_hash},
          {"opset", m.opset},
          {"n_vars", m.n_vars},
          {"n_params", m.n_params},
          {"ladder", m.ladder},
          {"prior", prior},
          {"has_data", m.has_data},
          {"n_data_rows", m.n_rows},
          {"variables", m.variables},
          {"target", m.target}};
}

inline TraceMetadata metadata_from_json(const nlohmann::json& j) {
  if (j.value("type", "") != "metadata") throw std::runtime_error("trace must start with a metadata object");
  TraceMetadata m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_text = j.at("config").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::uint64_t>();
  m.opset = j.at("opset").get<std::string>();
  m.n_vars = j.at("n_vars").get<int>();
  m.n_params = j.at("n_params").get<int>();
  m.ladder = j.at("ladder").get<std::vector<double>>();
  m.prior.n_vars = m.n_vars;
  m.prior.n_params = m.n_params;
  for (const auto& e : j.at("prior")) {
    m.prior.ops.push_back(e.at("op").get<std::string>());
    m.prior.alpha.push_back(e.at("alpha").get<double>());
    m.prior.beta.push_back(e.at("beta").get<double>());
  }
  m.has_data = j.value("has_data", false);
  m.n_rows = j.value("n_data_rows", std::size_t{0});
  m.variables = j.value("variables", std::vector<std::string>{});
  m.target = j.value("target", std::string{});
  return m;
}

inline nlohmann::json to_json(const TraceRow& r) {
  return {{"type", "state"},
          {"restart", r.restart},
          {"step", r.step},
          {"temperature_index", r.temperature_index},
          {"temperature", r.temperature},
          {"key", r.key},
          {"expression", r.expression},
          {"theta", r.theta},
          {"sse", detail::number_or_null(r.sse)},
          {"bic", detail::number_or_null(r.bic)},
          {"prior_energy", r.prior_energy},
          {"description_length", detail::number_or_null(r.description_length)},
          {"n_active_params", r.n_active_params},
          {"size", r.size},
          {"move", std::string(move_name(r.move))},
          {"accepted", r.accepted}};
}

inline TraceRow row_from_json(const nlohmann::json& j) {
  TraceRow r;
  r.restart = j.at("restart").get<std::size_t>();
  r.step = j.at("step").get<std::size_t>();
  r.temperature_index = j.at("temperature_index").get<std::size_t>();
  r.temperature = j.at("temperature").get<double>();
  r.key = j.at("key").get<std::string>();
  r.expression = j.at("expression").get<std::string>();
  r.theta = j.at("theta").get<std::vector<double>>();
  r.sse = detail::number_or_inf(j.at("sse"));
  r.bic = detail::number_or_inf(j.at("bic"));
  r.prior_energy = j.at("prior_energy").get<double>();
  r.description_length = detail::number_or_inf(j.at("description_length"));
  r.n_active_params = j.at("n_active_params").get<std::size_t>();
  r.size = j.at("size").get<std::size_t>();
  r.move = detail::move_from_name(j.at("move").get<std::string>());
  r.accepted = j.at("accepted").get<bool>();
  return r;
}

/// Streams rows to a JSON-lines file as they are produced.
class TraceWriter {
 public:
  TraceWriter(std::ostream& out, const TraceMetadata& meta) : out_(out) { out_ << to_json(meta).dump() << '\n'; }
  void write(const TraceRow& row) { out_ << to_json(row).dump() << '\n'; }

 private:
  std::ostream& out_;
};

inline void write_trace(std::ostream& out, const ModelTrace& trace) {
  TraceWriter w(out, trace.meta);
  for (const auto& r : trace.rows) w.write(r);
}

inline ModelTrace read_trace(std::istream& in) {
  ModelTrace t;
  std::string line;
  std::size_t lineno = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!have_meta) {
        t.meta = metadata_from_json(j);
        have_meta = true;
      } else {
        t.rows.push_back(row_from_json(j));
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_meta) throw std::runtime_error("empty trace");
  return t;
}

inline ModelTrace read_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_trace(in);
}

/// The operation set a trace was sampled with.
inline OperationSet trace_opset(const TraceMetadata& m) { return OperationSet::from_spec(m.opset, m.n_vars, m.n_params); }

/// Rebuilds the fitted model a row describes (tree re-parsed from its text).
inline FittedModel model_from_row(const TraceRow& r, const OperationSet& opset) {
  FittedModel m;
  m.tree = parse_expression(r.expression, opset, std::max<std::size_t>(r.size, kDefaultMaxTreeSize));
  m.theta = r.theta;
  m.active = m.tree.parameters_used();
  m.sse = r.sse;
  m.n_active_params = r.n_active_params;
  m.bic = r.bic;
  m.prior_energy = r.prior_energy;
  m.description_length = r.description_length;
  return m;
}

}  // namespace bms
