#pragma once

#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bms/opset.hpp"
#include "bms/parse.hpp"
#include "bms/tree.hpp"

namespace bms {

/// Maximum-entropy prior over expressions. The prior energy of a tree is
/// E(f) = sum_o alpha_o n_o(f) + beta_o n_o(f)^2 and log p(f) = -E(f) + const.
struct PriorParams {
  std::vector<std::string> ops;  // same order as the bound OperationSet
  std::vector<double> alpha;
  std::vector<double> beta;
  int n_vars = 1;
  int n_params = 0;

  static PriorParams uniform(const OperationSet& opset) {
    PriorParams p;
    for (const auto& o : opset.ops()) p.ops.push_back(o.name);
    p.alpha.assign(opset.size(), 0.0);
    p.beta.assign(opset.size(), 0.0);
    p.n_vars = opset.n_vars();
    p.n_params = opset.n_params();
    return p;
  }

  bool matches(const OperationSet& opset) const {
    if (ops.size() != opset.size()) return false;
    for (std::size_t i = 0; i < ops.size(); ++i)
      if (ops[i] != opset.op(i).name) return false;
    return true;
  }

  /// Reorders this table to follow `opset`'s operation order.
  PriorParams bound_to(const OperationSet& opset) const {
    PriorParams p = uniform(opset);
    for (std::size_t i = 0; i < opset.size(); ++i) {
      std::size_t j = 0;
      while (j < ops.size() && ops[j] != opset.op(i).name) ++j;
      if (j == ops.size())
        throw std::invalid_argument("prior table has no entry for operation '" + opset.op(i).name + "'");
      p.alpha[i] = alpha[j];
      p.beta[i] = beta[j];
    }
    return p;
  }
};

inline double prior_energy(const OpCountVector& counts, const PriorParams& params) {
  double e = 0;
  for (std::size_t o = 0; o < counts.size(); ++o) {
    const double n = counts[o];
    e += params.alpha[o] * n + params.beta[o] * n * n;
  }
  return e;
}

inline double prior_energy(const ExpressionTree& t, const PriorParams& params) {
  return prior_energy(count_operations(t, params.ops.size()), params);
}

/// Per-operation sample moments <n_o> and <n_o^2> over a set of expressions.
struct CorpusStats {
  std::vector<std::string> ops;
  std::vector<double> mean_count;
  std::vector<double> mean_sq_count;
  std::size_t n_expressions = 0;

  static CorpusStats from_counts(const OperationSet& opset, const std::vector<OpCountVector>& counts) {
    CorpusStats s;
    for (const auto& o : opset.ops()) s.ops.push_back(o.name);
    s.mean_count.assign(opset.size(), 0.0);
    s.mean_sq_count.assign(opset.size(), 0.0);
    s.n_expressions = counts.size();
    for (const auto& c : counts)
      for (std::size_t o = 0; o < c.size(); ++o) {
        s.mean_count[o] += c[o];
        s.mean_sq_count[o] += static_cast<double>(c[o]) * c[o];
      }
    if (!counts.empty())
      for (std::size_t o = 0; o < opset.size(); ++o) {
        s.mean_count[o] /= static_cast<double>(counts.size());
        s.mean_sq_count[o] /= static_cast<double>(counts.size());
      }
    return s;
  }

  CorpusStats bound_to(const OperationSet& opset) const {
    CorpusStats s;
    s.n_expressions = n_expressions;
    for (const auto& o : opset.ops()) {
      s.ops.push_back(o.name);
      std::size_t j = 0;
      while (j < ops.size() && ops[j] != o.name) ++j;
      s.mean_count.push_back(j < ops.size() ? mean_count[j] : 0.0);
      s.mean_sq_count.push_back(j < ops.size() ? mean_sq_count[j] : 0.0);
    }
    return s;
  }
};

/// Statistics of a corpus in prefix notation. Only operation counts matter,
/// so any x<i>/p<i> leaf index is accepted.
inline CorpusStats corpus_stats(std::istream& corpus, const OperationSet& opset, bool strict,
                                std::vector<LineError>* errors = nullptr) {
  const OperationSet wide = opset.with_counts(1024, 1024);
  const auto lines = read_expressions(corpus, wide, strict, errors, 1 << 20);
  std::vector<OpCountVector> counts;
  counts.reserve(lines.size());
  for (const auto& l : lines) counts.push_back(count_operations(l.tree, opset));
  if (counts.empty()) throw std::runtime_error("corpus contains no parseable expressions");
  return CorpusStats::from_counts(opset, counts);
}

inline void write_stats_tsv(std::ostream& out, const CorpusStats& s) {
  out << std::setprecision(17);
  out << "#n_expressions\t" << s.n_expressions << '\n';
  out << "op\tmean_count\tmean_sq_count\n";
  for (std::size_t o = 0; o < s.ops.size(); ++o)
    out << s.ops[o] << '\t' << s.mean_count[o] << '\t' << s.mean_sq_count[o] << '\n';
}

namespace detail {
inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  return out;
}
}  // namespace detail

inline CorpusStats read_stats_tsv(std::istream& in) {
  CorpusStats s;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_tabs(line);
    if (f[0] == "#n_expressions" && f.size() >= 2) {
      s.n_expressions = std::stoul(f[1]);
      continue;
    }
    if (f[0].starts_with('#')) continue;
    if (!header) {
      if (f.size() < 3 || f[0] != "op" || f[1] != "mean_count" || f[2] != "mean_sq_count")
        throw std::runtime_error("stats table header must be: op, mean_count, mean_sq_count");
      header = true;
      continue;
    }
    if (f.size() < 3) throw std::runtime_error("short stats row: " + line);
    s.ops.push_back(f[0]);
    s.mean_count.push_back(std::stod(f[1]));
    s.mean_sq_count.push_back(std::stod(f[2]));
  }
  if (!header) throw std::runtime_error("missing stats table header");
  return s;
}

/// True if the stream starts (after comments) with the stats-table header.
inline bool looks_like_stats_tsv(std::istream& in) {
  const auto start = in.tellg();
  std::string line;
  bool result = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.starts_with('#')) continue;
    result = line.starts_with("op\tmean_count");
    break;
  }
  in.clear();
  in.seekg(start);
  return result;
}

/// Corpus file or stats table, whichever `path` holds.
inline CorpusStats load_stats(const std::string& path, const OperationSet& opset, bool strict,
                              std::vector<LineError>* errors = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  if (looks_like_stats_tsv(in)) return read_stats_tsv(in).bound_to(opset);
  return corpus_stats(in, opset, strict, errors);
}

inline void write_prior_tsv(std::ostream& out, const PriorParams& p) {
  out << std::setprecision(17);
  out << "#n_vars\t" << p.n_vars << "\tn_params\t" << p.n_params << '\n';
  out << "op\talpha\tbeta\n";
  for (std::size_t o = 0; o < p.ops.size(); ++o)
    out << p.ops[o] << '\t' << p.alpha[o] << '\t' << p.beta[o] << '\n';
}

inline PriorParams read_prior_tsv(std::istream& in) {
  PriorParams p;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_tabs(line);
    if (f[0] == "#n_vars") {
      if (f.size() < 4 || f[2] != "n_params") throw std::runtime_error("bad prior table signature row");
      p.n_vars = std::stoi(f[1]);
      p.n_params = std::stoi(f[3]);
      continue;
    }
    if (f[0].starts_with('#')) continue;
    if (!header) {
      if (f.size() < 3 || f[0] != "op" || f[1] != "alpha" || f[2] != "beta")
        throw std::runtime_error("prior table header must be: op, alpha, beta");
      header = true;
      continue;
    }
    if (f.size() < 3) throw std::runtime_error("short prior row: " + line);
    p.ops.push_back(f[0]);
    p.alpha.push_back(std::stod(f[1]));
    p.beta.push_back(std::stod(f[2]));
    if (p.beta.back() < 0) throw std::runtime_error("negative beta for '" + f[0] + "'");
  }
  if (!header) throw std::runtime_error("missing prior table header");
  return p;
}

inline PriorParams read_prior_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_prior_tsv(in);
}

}  // namespace bms
