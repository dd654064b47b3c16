#pragma once

// Region-graph construction and self-supervision label machinery:
// grid adjacency, k-means region clustering with silhouette model
// selection, temporal indexes, and traffic-load capacities/levels.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "steve/errors.hpp"
#include "steve/flow_tensor.hpp"

namespace steve::graph_ctx {

// 4-neighborhood grid graph over an H x W region grid.
inline Eigen::MatrixXf grid_adjacency(int h, int w) {
  if (h < 1 || w < 1) throw ConfigError("grid_adjacency: H, W must be >= 1");
  const int n = h * w;
  Eigen::MatrixXf a = Eigen::MatrixXf::Zero(n, n);
  auto id = [w](int r, int c) { return r * w + c; };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (r + 1 < h) a(id(r, c), id(r + 1, c)) = a(id(r + 1, c), id(r, c)) = 1.0f;
      if (c + 1 < w) a(id(r, c), id(r, c + 1)) = a(id(r, c + 1), id(r, c)) = 1.0f;
    }
  return a;
}

struct ClusterResult {
  std::vector<int> labels;     // [N], in [0, k)
  int k = 0;
  double silhouette = 0.0;
  Eigen::MatrixXd centroids;   // [k, 2]
};

namespace detail {

struct KmeansRun {
  std::vector<int> labels;
  Eigen::MatrixXd centroids;
  double inertia = std::numeric_limits<double>::infinity();
};

// Lloyd iterations with seeded farthest-point initialization.
inline KmeansRun kmeans_once(const Eigen::MatrixXd& feats, int k,
                             std::mt19937_64& rng, int max_iter) {
  const int n = static_cast<int>(feats.rows());
  KmeansRun run;
  run.centroids.resize(k, feats.cols());
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> chosen{pick(rng)};
  run.centroids.row(0) = feats.row(chosen[0]);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      double d2 = (feats.row(i) - run.centroids.row(c - 1)).squaredNorm();
      min_d2[i] = std::min(min_d2[i], d2);
      if (min_d2[i] > best_d2) { best_d2 = min_d2[i]; best = i; }
    }
    run.centroids.row(c) = feats.row(best);
  }
  run.labels.assign(n, 0);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = (feats.row(i) - run.centroids.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        double d = (feats.row(i) - run.centroids.row(c)).squaredNorm();
        if (d < bd) { bd = d; best = c; }
      }
      if (run.labels[i] != best) { run.labels[i] = best; changed = true; }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, feats.cols());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(run.labels[i]) += feats.row(i);
      ++counts[run.labels[i]];
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] > 0) run.centroids.row(c) = sums.row(c) / counts[c];
    if (!changed && it > 0) break;
  }
  run.inertia = 0.0;
  for (int i = 0; i < n; ++i)
    run.inertia += (feats.row(i) - run.centroids.row(run.labels[i])).squaredNorm();
  return run;
}

inline double mean_silhouette(const Eigen::MatrixXd& feats,
                              const std::vector<int>& labels, int k) {
  const int n = static_cast<int>(feats.rows());
  std::vector<int> counts(k, 0);
  for (int l : labels) ++counts[l];
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (counts[labels[i]] <= 1) continue;  // singleton contributes 0
    std::vector<double> dist_sum(k, 0.0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[labels[j]] += (feats.row(i) - feats.row(j)).norm();
    }
    double a = dist_sum[labels[i]] / (counts[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == labels[i] || counts[c] == 0) continue;
      b = std::min(b, dist_sum[c] / counts[c]);
    }
    double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / n;
}

}  // namespace detail

// Per-region (mean, median) features of channel-averaged training flows,
// standardized, clustered with k-means for each k in k_range; the k with
// the best mean silhouette wins. Restart ties break toward the earlier
// restart, k ties toward the smaller k.
inline ClusterResult cluster_regions(const data::FlowTensor& train_flows,
                                     const std::vector<int>& k_range,
                                     std::uint64_t seed = 0,
                                     int restarts = 10, int max_iter = 100) {
  const int n = train_flows.regions;
  const int t = train_flows.steps;
  if (t < 2) throw ConfigError("cluster_regions: need at least 2 training steps");
  Eigen::MatrixXd feats(n, 2);
  std::vector<double> series(t);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < t; ++s) {
      double acc = 0.0;
      for (int c = 0; c < train_flows.channels; ++c) acc += train_flows.at(s, i, c);
      series[s] = acc / train_flows.channels;
    }
    feats(i, 0) = std::accumulate(series.begin(), series.end(), 0.0) / t;
    std::vector<double> sorted = series;
    std::sort(sorted.begin(), sorted.end());
    feats(i, 1) = t % 2 == 1 ? sorted[t / 2] : 0.5 * (sorted[t / 2 - 1] + sorted[t / 2]);
  }
  // standardize each feature column
  bool degenerate = true;
  for (int c = 0; c < 2; ++c) {
    double mu = feats.col(c).mean();
    double sd = std::sqrt((feats.col(c).array() - mu).square().sum() / n);
    if (sd > 0.0) {
      feats.col(c) = (feats.col(c).array() - mu) / sd;
      degenerate = false;
    } else {
      feats.col(c).setZero();
    }
  }
  if (degenerate)
    throw DegenerateDataError("cluster_regions: all region features identical");

  ClusterResult best;
  best.silhouette = -std::numeric_limits<double>::infinity();
  for (int k : k_range) {
    if (k < 2 || k > n - 1)
      throw ConfigError("cluster_regions: k out of [2, N-1]");
    detail::KmeansRun best_run;
    for (int r = 0; r < restarts; ++r) {
      std::mt19937_64 rng(seed * 1000003ULL + static_cast<std::uint64_t>(k) * 101ULL + r);
      detail::KmeansRun run = detail::kmeans_once(feats, k, rng, max_iter);
      if (run.inertia < best_run.inertia) best_run = run;
    }
    double sil = detail::mean_silhouette(feats, best_run.labels, k);
    if (sil > best.silhouette) {
      best.labels = best_run.labels;
      best.k = k;
      best.silhouette = sil;
      best.centroids = best_run.centroids;
    }
  }
  return best;
}

// Hour-of-day slot, offset by 24 on holidays: a bijection onto [0, 47].
inline int temporal_index(int minutes_of_day, bool holiday) {
  int h = (minutes_of_day / 60) % 24;
  if (h < 0) h += 24;
  return holiday ? 24 + h : h;
}

// Per-node, per-channel historical maxima over the training steps.
// Never-active entries get capacity 1 (their levels stay 0).
struct CapacityTable {
  Eigen::MatrixXf cp;  // [N, d]
  std::vector<std::vector<bool>> active;  // false where no training flow seen
};

inline CapacityTable capacity(const data::FlowTensor& train_flows) {
  CapacityTable table;
  const int n = train_flows.regions, d = train_flows.channels;
  table.cp = Eigen::MatrixXf::Zero(n, d);
  table.active.assign(n, std::vector<bool>(d, false));
  for (int t = 0; t < train_flows.steps; ++t)
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d; ++c)
        table.cp(i, c) = std::max(table.cp(i, c), train_flows.at(t, i, c));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) {
      if (table.cp(i, c) > 0.0f) table.active[i][c] = true;
      else table.cp(i, c) = 1.0f;
    }
  return table;
}

// level = ceil(5 x / cp) clamped to [0, 5].
inline Eigen::MatrixXi load_level(const Eigen::MatrixXf& x, const CapacityTable& table) {
  if (x.rows() != table.cp.rows() || x.cols() != table.cp.cols())
    throw ShapeError("load_level: shape mismatch with capacity table");
  Eigen::MatrixXi levels(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int c = 0; c < x.cols(); ++c) {
      if (!table.active[i][c]) { levels(i, c) = 0; continue; }
      double l = std::ceil(5.0 * x(i, c) / table.cp(i, c));
      levels(i, c) = static_cast<int>(std::clamp(l, 0.0, 5.0));
    }
  return levels;
}

}  // namespace steve::graph_ctx
