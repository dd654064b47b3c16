#pragma once

// Exact discrete-probability engine for backdoor adjustment and its
// two-group (invariant/variant context) reformulation.

#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "steve/errors.hpp"

namespace steve::dca {

// Finite joint model over (C, X, Y): P(C), P(X|C), P(Y|X,C).
struct DiscreteSCM {
  std::vector<double> context_prob;               // [K]
  std::vector<std::vector<double>> x_given_c;     // [K][nx]
  std::vector<std::vector<std::vector<double>>> y_given_xc;  // [K][nx][ny]

  int K() const { return static_cast<int>(context_prob.size()); }
  int nx() const { return x_given_c.empty() ? 0 : static_cast<int>(x_given_c[0].size()); }
  int ny() const {
    if (y_given_xc.empty() || y_given_xc[0].empty()) return 0;
    return static_cast<int>(y_given_xc[0][0].size());
  }
};

// Hard split of the K context indices into invariant and variant groups.
struct ContextPartition {
  std::set<int> invariant_ids;
  std::set<int> variant_ids;
};

inline constexpr double kProbTol = 1e-12;

namespace detail {
inline void check_row(const std::vector<double>& row, const std::string& what) {
  double s = 0.0;
  for (double p : row) {
    if (p < 0.0 || p > 1.0)
      throw NormalizationError(what + ": probability out of [0,1]");
    s += p;
  }
  if (std::abs(s - 1.0) > kProbTol)
    throw NormalizationError(what + ": row sums to " + std::to_string(s));
}
}  // namespace detail

inline void validate_scm(const DiscreteSCM& scm) {
  if (scm.K() < 1) throw NormalizationError("context_prob: empty");
  detail::check_row(scm.context_prob, "context_prob");
  if (static_cast<int>(scm.x_given_c.size()) != scm.K())
    throw NormalizationError("x_given_c: wrong number of context rows");
  if (static_cast<int>(scm.y_given_xc.size()) != scm.K())
    throw NormalizationError("y_given_xc: wrong number of context slices");
  for (int k = 0; k < scm.K(); ++k) {
    detail::check_row(scm.x_given_c[k], "x_given_c[" + std::to_string(k) + "]");
    if (static_cast<int>(scm.y_given_xc[k].size()) != scm.nx())
      throw NormalizationError("y_given_xc[" + std::to_string(k) + "]: wrong nx");
    for (int x = 0; x < scm.nx(); ++x)
      detail::check_row(scm.y_given_xc[k][x],
                        "y_given_xc[" + std::to_string(k) + "][" + std::to_string(x) + "]");
  }
}

inline void validate_partition(const DiscreteSCM& scm, const ContextPartition& part) {
  std::set<int> all;
  for (int k : part.invariant_ids) {
    if (part.variant_ids.count(k))
      throw DomainError("partition: context " + std::to_string(k) + " in both groups");
    all.insert(k);
  }
  for (int k : part.variant_ids) all.insert(k);
  if (static_cast<int>(all.size()) != scm.K())
    throw DomainError("partition: groups do not cover all contexts");
  for (int k : all)
    if (k < 0 || k >= scm.K())
      throw DomainError("partition: context index " + std::to_string(k) + " out of range");
}

// P(Y|do(X=x)) = sum_k P(Y|X=x, C=k) P(C=k).
inline std::vector<double> backdoor_adjust(const DiscreteSCM& scm, int x) {
  if (x < 0 || x >= scm.nx())
    throw DomainError("backdoor_adjust: x=" + std::to_string(x) + " out of range");
  std::vector<double> out(scm.ny(), 0.0);
  for (int k = 0; k < scm.K(); ++k)
    for (int y = 0; y < scm.ny(); ++y)
      out[y] += scm.y_given_xc[k][x][y] * scm.context_prob[k];
  return out;
}

enum class Group { kInvariant, kVariant };

// Within-group mixture P(Y|X=x, C in group) with conditional weights
// P(C=k)/P(C in group).
inline std::vector<double> group_conditional(const DiscreteSCM& scm,
                                             const ContextPartition& part,
                                             Group group, int x) {
  if (x < 0 || x >= scm.nx())
    throw DomainError("group_conditional: x out of range");
  const std::set<int>& ids =
      group == Group::kInvariant ? part.invariant_ids : part.variant_ids;
  double mass = 0.0;
  for (int k : ids) mass += scm.context_prob[k];
  if (mass <= 0.0) throw EmptyGroupError("group_conditional: zero-mass group");
  std::vector<double> out(scm.ny(), 0.0);
  for (int k : ids)
    for (int y = 0; y < scm.ny(); ++y)
      out[y] += scm.y_given_xc[k][x][y] * (scm.context_prob[k] / mass);
  return out;
}

// Two-group adjustment: P(C in I) * P(Y|X, C in I) + P(C in V) * P(Y|X, C in V).
// A zero-mass group contributes nothing.
inline std::vector<double> dca_adjust(const DiscreteSCM& scm,
                                      const ContextPartition& part, int x) {
  validate_partition(scm, part);
  std::vector<double> out(scm.ny(), 0.0);
  for (Group g : {Group::kInvariant, Group::kVariant}) {
    const std::set<int>& ids =
        g == Group::kInvariant ? part.invariant_ids : part.variant_ids;
    double mass = 0.0;
    for (int k : ids) mass += scm.context_prob[k];
    if (mass <= 0.0) continue;
    std::vector<double> cond = group_conditional(scm, part, g, x);
    for (int y = 0; y < scm.ny(); ++y) out[y] += mass * cond[y];
  }
  return out;
}

inline DiscreteSCM random_scm(std::uint64_t seed, int K, int nx, int ny) {
  if (K < 1 || nx < 1 || ny < 1)
    throw DomainError("random_scm: K, nx, ny must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  auto draw_row = [&](int n) {
    std::vector<double> row(n);
    double s = 0.0;
    for (double& v : row) { v = unif(rng); s += v; }
    for (double& v : row) v /= s;
    // exact renormalization of the trailing entry
    double partial = 0.0;
    for (int i = 0; i + 1 < n; ++i) partial += row[i];
    row[n - 1] = 1.0 - partial;
    return row;
  };
  DiscreteSCM scm;
  scm.context_prob = draw_row(K);
  scm.x_given_c.resize(K);
  scm.y_given_xc.resize(K);
  for (int k = 0; k < K; ++k) {
    scm.x_given_c[k] = draw_row(nx);
    scm.y_given_xc[k].resize(nx);
    for (int x = 0; x < nx; ++x) scm.y_given_xc[k][x] = draw_row(ny);
  }
  return scm;
}

// Structured-text SCM file: K, nx, ny, context_prob, x_given_c rows,
// y_given_xc rows, invariant_ids.
inline DiscreteSCM load_scm(const std::string& path, ContextPartition* part_out) {
  std::ifstream in(path);
  if (!in) throw FormatError("load_scm: cannot open " + path);
  int K = -1, nx = -1, ny = -1;
  DiscreteSCM scm;
  ContextPartition part;
  std::string line;
  auto split_nums = [](const std::string& s) {
    std::vector<double> v;
    std::istringstream iss(s);
    double d;
    while (iss >> d) v.push_back(d);
    return v;
  };
  std::vector<std::vector<double>> x_rows, y_rows;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string val = line.substr(eq + 1);
    if (key == "K") K = std::stoi(val);
    else if (key == "nx") nx = std::stoi(val);
    else if (key == "ny") ny = std::stoi(val);
    else if (key == "context_prob") scm.context_prob = split_nums(val);
    else if (key == "x_given_c") x_rows.push_back(split_nums(val));
    else if (key == "y_given_xc") y_rows.push_back(split_nums(val));
    else if (key == "invariant_ids")
      for (double d : split_nums(val)) part.invariant_ids.insert(static_cast<int>(d));
    else throw FormatError("load_scm: unknown key '" + key + "'");
  }
  if (K < 1 || nx < 1 || ny < 1)
    throw FormatError("load_scm: missing K/nx/ny");
  if (static_cast<int>(x_rows.size()) != K || static_cast<int>(y_rows.size()) != K * nx)
    throw FormatError("load_scm: wrong number of distribution rows");
  scm.x_given_c = x_rows;
  scm.y_given_xc.resize(K);
  for (int k = 0; k < K; ++k) {
    scm.y_given_xc[k].assign(y_rows.begin() + k * nx, y_rows.begin() + (k + 1) * nx);
  }
  validate_scm(scm);
  if (part_out) {
    for (int k = 0; k < K; ++k)
      if (!part.invariant_ids.count(k)) part.variant_ids.insert(k);
    validate_partition(scm, part);
    *part_out = part;
  }
  return scm;
}

}  // namespace steve::dca
