#pragma once

// Mini-batch training loop with dynamic weight averaging and early
// stopping, OOD evaluation (MAE/MAPE), checkpoints, and the ablation
// suite.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "steve/dataio.hpp"
#include "steve/errors.hpp"
#include "steve/model.hpp"

namespace steve::train_eval {

using data::Dataset;
using data::Sample;
using model::SteveModel;
using nn::Mat;
using nn::Var;

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 32;
  int max_epochs = 50;
  int patience = 10;
  std::uint64_t seed = 0;
  double dwa_temperature = 2.0;
  int inner_q_steps = 1;
  double mape_floor = 1.0;
  double clip_norm = 5.0;  // global gradient-norm cap, <= 0 disables
  double head_lr_mult = 8.0;  // task-head learning-rate multiplier
  int warmup_epochs = 2;      // linear learning-rate warm-up span

  void validate() const {
    if (learning_rate <= 0 || batch_size < 1 || max_epochs < 1 || patience < 1 ||
        dwa_temperature <= 0 || inner_q_steps < 0 || head_lr_mult <= 0 ||
        warmup_epochs < 0)
      throw ConfigError("TrainConfig: invalid values");
  }
};

struct EpochRecord {
  double l_p = 0, l_s = 0, l_d = 0, l_o = 0;
  double val_mae = 0;
  std::vector<double> tasks;  // per-task epoch means, (V..., I...) order
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_mae = 0;
  double wall_time_sec = 0;
  std::string variant;
};

// weight_i = count * exp(r_i / T) / sum_j exp(r_j / T) with
// r_i = loss_i(t-1) / loss_i(t-2); uniform for the first two epochs or on
// zero denominators.
inline std::vector<double> dwa_weights(const std::vector<double>& prev,
                                       const std::vector<double>& prev2,
                                       double temperature) {
  const std::size_t n = prev.size();
  std::vector<double> w(n, 1.0);
  if (prev2.size() != n || n == 0) return w;
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (prev2[i] == 0.0) return w;  // uniform fallback
    r[i] = prev[i] / prev2[i];
  }
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::exp(r[i] / temperature);
    z += w[i];
  }
  for (std::size_t i = 0; i < n; ++i) w[i] = double(n) * w[i] / z;
  return w;
}

// ---- batch assembly ----

template <class S>
struct Batch {
  std::vector<Var<S>> inputs;  // T constants, each [B*N, d], scaled
  Mat<S> target;               // [B*N, d], raw flow units
  model::BatchLabels labels;
  int size = 0;
};

template <class S>
Batch<S> make_batch(const Dataset& ds, const std::vector<Sample>& samples,
                    const std::vector<std::size_t>& idx, double flow_scale) {
  Batch<S> batch;
  batch.size = static_cast<int>(idx.size());
  const int n = ds.regions(), d = ds.channels();
  const int window = static_cast<int>(samples[idx[0]].input_steps.size());
  const S inv_scale = S(1.0 / flow_scale);
  for (int t = 0; t < window; ++t) {
    Mat<S> step(batch.size * n, d);
    for (int b = 0; b < batch.size; ++b) {
      const Sample& s = samples[idx[b]];
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c)
          step(b * n + i, c) = S(ds.flows.at(s.input_steps[t], i, c)) * inv_scale;
    }
    batch.inputs.push_back(nn::constant<S>(std::move(step)));
  }
  batch.target.resize(batch.size * n, d);
  batch.labels.load.resize(batch.size * n, d);
  for (int b = 0; b < batch.size; ++b) {
    const Sample& s = samples[idx[b]];
    batch.labels.temporal.push_back(s.temporal_label);
    for (int i = 0; i < n; ++i) {
      batch.labels.node_ids.push_back(i);
      for (int c = 0; c < d; ++c) {
        batch.target(b * n + i, c) = S(ds.flows.at(s.target_step, i, c));
        batch.labels.load(b * n + i, c) = s.load_label(i, c);
      }
    }
  }
  return batch;
}

// ---- evaluation ----

struct Metrics {
  double mae = 0;
  double mape = 0;
};

// MAE over every entry; MAPE only over entries with y >= floor.
struct MetricAccumulator {
  double abs_sum = 0, pct_sum = 0;
  long abs_count = 0, pct_count = 0;

  void add(double y, double y_hat, double mape_floor) {
    abs_sum += std::abs(y - y_hat);
    ++abs_count;
    if (y >= mape_floor) {
      pct_sum += std::abs(y - y_hat) / y * 100.0;
      ++pct_count;
    }
  }
  Metrics finish() const {
    Metrics m;
    m.mae = abs_count ? abs_sum / abs_count : 0.0;
    m.mape = pct_count ? pct_sum / pct_count : 0.0;
    return m;
  }
};

template <class S>
Metrics evaluate(const SteveModel<S>& m, const Dataset& ds,
                 const std::vector<Sample>& samples, const data::Scenario& sc,
                 double mape_floor = 1.0, int eval_batch = 64) {
  if (sc.indices.empty()) throw EmptyScenarioError("evaluate: empty scenario");
  Mat<S> norm_adj = tsrl::normalized_adjacency<S>(ds.adjacency.cast<S>().eval());
  const int n = ds.regions(), d = ds.channels();
  MetricAccumulator acc;
  for (std::size_t start = 0; start < sc.indices.size(); start += eval_batch) {
    std::vector<std::size_t> idx(
        sc.indices.begin() + start,
        sc.indices.begin() + std::min(start + eval_batch, sc.indices.size()));
    Batch<S> batch = make_batch<S>(ds, samples, idx, m.cfg.flow_scale);
    auto pair = model::encode_pair(m, batch.inputs, norm_adj);
    auto pred = model::predict(m, pair);
    for (int b = 0; b < batch.size; ++b)
      for (int i = 0; i < n; ++i) {
        if (sc.node_mask && !(*sc.node_mask)[i]) continue;
        for (int c = 0; c < d; ++c)
          acc.add(batch.target(b * n + i, c), pred.y_hat->value(b * n + i, c),
                  mape_floor);
      }
  }
  return acc.finish();
}

// ---- checkpoints ----

namespace detail {
constexpr char kCkptMagic[4] = {'S', 'T', 'C', 'K'};
}

template <class S>
void save_checkpoint(const std::vector<nn::NamedParam<S>>& params,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out.write(detail::kCkptMagic, 4);
  std::uint32_t count = static_cast<std::uint32_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& p : params) {
    std::uint16_t len = static_cast<std::uint16_t>(p.name.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out.write(p.name.data(), len);
    std::uint32_t rows = static_cast<std::uint32_t>(p.var->value.rows());
    std::uint32_t cols = static_cast<std::uint32_t>(p.var->value.cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    Eigen::MatrixXf payload = p.var->value.template cast<float>();
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
  }
  if (!out) throw FormatError("save_checkpoint: write failed: " + path);
}

template <class S>
void load_checkpoint(std::vector<nn::NamedParam<S>>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, detail::kCkptMagic, 4) != 0)
    throw FormatError("load_checkpoint: magic mismatch");
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  std::map<std::string, Eigen::MatrixXf> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 2);
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    Eigen::MatrixXf m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw FormatError("load_checkpoint: truncated tensor '" + name + "'");
    tensors[name] = std::move(m);
  }
  for (auto& p : params) {
    auto it = tensors.find(p.name);
    if (it == tensors.end())
      throw FormatError("load_checkpoint: missing tensor '" + p.name + "'");
    if (it->second.rows() != p.var->value.rows() ||
        it->second.cols() != p.var->value.cols())
      throw FormatError("load_checkpoint: shape mismatch for '" + p.name + "'");
    p.var->value = it->second.template cast<S>();
  }
}

// ---- training ----

template <class S>
void log_alphas(const SteveModel<S>& m, const Dataset& ds,
                const std::vector<Sample>& samples, const std::string& path,
                int eval_batch = 64);

template <class S>
struct ParamSnapshot {
  std::vector<Mat<S>> values;

  static ParamSnapshot capture(const std::vector<nn::NamedParam<S>>& params) {
    ParamSnapshot s;
    for (const auto& p : params) s.values.push_back(p.var->value);
    return s;
  }
  void restore(std::vector<nn::NamedParam<S>>& params) const {
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i].var->value = values[i];
  }
};

template <class S>
RunRecord train(SteveModel<S>& m, const Dataset& ds, const data::ChronoSplit& split,
                const TrainConfig& cfg, const model::Variant& variant,
                const std::string& run_dir = "") {
  cfg.validate();
  if (split.train.empty()) throw ConfigError("train: empty training split");
  const auto t_start = std::chrono::steady_clock::now();
  Mat<S> norm_adj = tsrl::normalized_adjacency<S>(ds.adjacency.cast<S>().eval());
  const int n = ds.regions();

  std::vector<Var<S>> model_vars, head_vars, q_vars;
  auto named_model = m.model_params();
  auto named_q = m.q_params();
  for (auto& p : named_model) {
    if (p.name.rfind("heads.", 0) == 0) head_vars.push_back(p.var);
    else model_vars.push_back(p.var);
  }
  for (auto& p : named_q) q_vars.push_back(p.var);
  nn::Adam<S> opt(model_vars, S(cfg.learning_rate));
  // the shallow task heads train faster than the deep encoders: the
  // classification tasks only bite once their heads track the features
  nn::Adam<S> head_opt(head_vars, S(cfg.head_lr_mult * cfg.learning_rate));
  // two-time-scale update: the variational net must track the moving
  // encoders closely or the club term degenerates
  nn::Adam<S> q_opt(q_vars, S(3 * cfg.learning_rate));

  const int task_count = variant.task_count();
  std::vector<std::vector<double>> task_history;  // per-epoch mean task values
  RunRecord rec;
  rec.variant = variant.name;
  auto all_named = m.all_params();
  ParamSnapshot<S> best = ParamSnapshot<S>::capture(all_named);
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  data::Scenario all_val;
  for (std::size_t i = 0; i < split.val.size(); ++i) all_val.indices.push_back(i);

  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    // reversal strength warm-up (domain-adversarial schedule): lets the
    // encoders fit the data before the invariance game kicks in
    const double progress =
        cfg.max_epochs > 1 ? double(epoch) / double(cfg.max_epochs - 1) : 1.0;
    const double ramp = 2.0 / (1.0 + std::exp(-10.0 * progress)) - 1.0;
    const S eta = S(m.cfg.grl_eta * ramp);
    // linear warm-up then cosine decay to a tenth of the base rate: early
    // epochs measure the loss landscape near the init, late epochs settle
    // the three-player game instead of bouncing around it
    double lr_fac = 1.0;
    double warm_fac = 1.0;
    if (epoch < cfg.warmup_epochs) {
      lr_fac = double(epoch + 1) / double(cfg.warmup_epochs + 1);
      warm_fac = lr_fac;
    } else if (cfg.max_epochs - 1 > cfg.warmup_epochs) {
      const double s = double(epoch - cfg.warmup_epochs) /
                       double(cfg.max_epochs - 1 - cfg.warmup_epochs);
      lr_fac = 0.1 + 0.45 * (1.0 + std::cos(3.14159265358979 * s));
    }
    opt.set_lr(S(lr_fac * cfg.learning_rate));
    head_opt.set_lr(S(lr_fac * cfg.head_lr_mult * cfg.learning_rate));
    // q only warms up and never decays: it must keep tracking the encoders
    // for the club estimate to stay an upper bound
    q_opt.set_lr(S(warm_fac * 3 * cfg.learning_rate));
    std::vector<double> weights(task_count, 1.0);
    if (task_history.size() >= 2)
      weights = dwa_weights(task_history[task_history.size() - 1],
                            task_history[task_history.size() - 2],
                            cfg.dwa_temperature);
    std::mt19937_64 shuffle_rng(cfg.seed * 1315423911ULL + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord er;
    std::vector<double> task_sums(task_count, 0.0);
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<std::size_t> idx(
          order.begin() + start,
          order.begin() + std::min(start + cfg.batch_size, order.size()));
      Batch<S> batch = make_batch<S>(ds, split.train, idx, m.cfg.flow_scale);
      auto pair = model::encode_pair(m, batch.inputs, norm_adj);

      Var<S> l_d = nn::constant<S>(Mat<S>::Zero(1, 1));
      if (variant.use_cd) {
        Var<S> pooled_i = model::club_features(pair.z_i, n);
        Var<S> pooled_v = model::club_features(pair.z_v, n);
        model::fit_variational(m.q, q_opt, pooled_i, pooled_v, cfg.inner_q_steps);
        // ramped like the reversal strength: the dependence penalty only
        // bites once the branches carry signal worth disentangling
        l_d = nn::scale(model::club_loss(pooled_i, pooled_v, m.q), S(ramp));
      }
      auto adv = model::adversarial_loss(m.heads, pair.z_i, pair.z_v, batch.labels,
                                         n, variant, weights, eta);
      auto pred = model::predict(m, pair);
      Var<S> l_p = model::prediction_loss(pred.y_hat, batch.target);
      Var<S> l_o;
      try {
        l_o = model::total_loss(l_p, adv.total, l_d);
      } catch (const NonFiniteError& e) {
        throw DivergenceError(std::string("train: ") + e.what());
      }
      opt.zero_grad();
      head_opt.zero_grad();
      nn::backward(l_o);
      if (cfg.clip_norm > 0) {
        S sq = S(0);
        for (const auto& v : model_vars) sq += v->grad.squaredNorm();
        for (const auto& v : head_vars) sq += v->grad.squaredNorm();
        const S norm = std::sqrt(sq);
        if (norm > S(cfg.clip_norm)) {
          const S scale = S(cfg.clip_norm) / norm;
          for (auto& v : model_vars) v->grad *= scale;
          for (auto& v : head_vars) v->grad *= scale;
        }
      }
      opt.step();
      head_opt.step();

      er.l_p += double(l_p->value(0, 0));
      er.l_s += double(adv.total->value(0, 0));
      er.l_d += double(l_d->value(0, 0));
      er.l_o += double(l_o->value(0, 0));
      for (int i = 0; i < task_count; ++i) task_sums[i] += double(adv.task_values[i]);
      ++batches;
    }
    er.l_p /= batches;
    er.l_s /= batches;
    er.l_d /= batches;
    er.l_o /= batches;
    for (double& s : task_sums) s /= batches;
    er.tasks = task_sums;
    task_history.push_back(task_sums);

    er.val_mae = split.val.empty()
                     ? 0.0
                     : evaluate(m, ds, split.val, all_val, cfg.mape_floor).mae;
    rec.epochs.push_back(er);

    if (er.val_mae < best_val) {
      best_val = er.val_mae;
      rec.best_epoch = epoch;
      best = ParamSnapshot<S>::capture(all_named);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  best.restore(all_named);
  rec.best_val_mae = best_val;
  rec.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  if (!run_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(run_dir);
    {
      std::ofstream out(fs::path(run_dir) / "metrics.csv");
      out << "epoch,L_P,L_S,L_D,L_O,val_MAE\n";
      for (std::size_t e = 0; e < rec.epochs.size(); ++e) {
        const auto& r = rec.epochs[e];
        out << e << "," << r.l_p << "," << r.l_s << "," << r.l_d << "," << r.l_o
            << "," << r.val_mae << "\n";
      }
    }
    save_checkpoint(all_named, (fs::path(run_dir) / "checkpoint.best").string());
    log_alphas(m, ds, split.test.empty() ? split.val : split.test,
               (fs::path(run_dir) / "alpha_log.csv").string(), 64);
  }
  return rec;
}

// Per-sample learned priors over a sample set (reproduces the prior heatmap).
template <class S>
void log_alphas(const SteveModel<S>& m, const Dataset& ds,
                const std::vector<Sample>& samples, const std::string& path,
                int eval_batch) {
  if (samples.empty()) return;
  Mat<S> norm_adj = tsrl::normalized_adjacency<S>(ds.adjacency.cast<S>().eval());
  std::ofstream out(path);
  out << "sample_time,holiday,hour,alpha1,alpha2\n";
  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(eval_batch)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + eval_batch, samples.size()); ++i)
      idx.push_back(i);
    Batch<S> batch = make_batch<S>(ds, samples, idx, m.cfg.flow_scale);
    auto pair = model::encode_pair(m, batch.inputs, norm_adj);
    Var<S> alpha = model::priors(m.prior, pair.z_i, pair.z_v, m.cfg.nodes);
    for (int b = 0; b < batch.size; ++b) {
      const Sample& s = samples[idx[b]];
      out << s.target_step << "," << (s.holiday ? 1 : 0) << ","
          << ds.step_minutes_of_day(s.target_step) / 60 << ","
          << double(alpha->value(b, 0)) << "," << double(alpha->value(b, 1)) << "\n";
    }
  }
}

// Fits a fresh variational net on the given samples' pooled pairs and
// returns the vCLUB MI estimate; comparable across trained variants.
template <class S>
double estimate_mi(const SteveModel<S>& m, const Dataset& ds,
                   const std::vector<Sample>& samples, int fit_steps = 200,
                   std::uint64_t seed = 7, int batch_size = 64) {
  if (samples.empty()) throw EmptyScenarioError("estimate_mi: no samples");
  Mat<S> norm_adj = tsrl::normalized_adjacency<S>(ds.adjacency.cast<S>().eval());
  const int n = ds.regions();
  // pooled pairs for the whole sample set
  std::vector<Mat<S>> zi_chunks, zv_chunks;
  int rows = 0;
  for (std::size_t start = 0; start < samples.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + batch_size, samples.size()); ++i)
      idx.push_back(i);
    Batch<S> batch = make_batch<S>(ds, samples, idx, m.cfg.flow_scale);
    auto pair = model::encode_pair(m, batch.inputs, norm_adj);
    zi_chunks.push_back(model::club_features(pair.z_i, n)->value);
    zv_chunks.push_back(model::club_features(pair.z_v, n)->value);
    rows += static_cast<int>(idx.size());
  }
  const int dim = static_cast<int>(zi_chunks[0].cols());
  Mat<S> zi(rows, dim), zv(rows, dim);
  int at = 0;
  for (std::size_t c = 0; c < zi_chunks.size(); ++c) {
    zi.middleRows(at, zi_chunks[c].rows()) = zi_chunks[c];
    zv.middleRows(at, zv_chunks[c].rows()) = zv_chunks[c];
    at += static_cast<int>(zi_chunks[c].rows());
  }
  model::VariationalNet<S> q;
  std::mt19937_64 rng(seed);
  q.init(dim, rng);
  std::vector<nn::NamedParam<S>> named;
  q.collect(named, "q");
  std::vector<Var<S>> qv;
  for (auto& p : named) qv.push_back(p.var);
  nn::Adam<S> q_opt(qv, S(1e-3));
  std::mt19937_64 batch_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick(0, rows - 1);
  const int m_fit = std::min(rows, batch_size);
  for (int s = 0; s < fit_steps; ++s) {
    Mat<S> bi(m_fit, dim), bv(m_fit, dim);
    for (int r = 0; r < m_fit; ++r) {
      int j = pick(batch_rng);
      bi.row(r) = zi.row(j);
      bv.row(r) = zv.row(j);
    }
    model::fit_variational(q, q_opt, nn::constant<S>(std::move(bi)),
                           nn::constant<S>(std::move(bv)), 1);
  }
  // estimate over fixed-size batches covering the set
  double total = 0;
  int count = 0;
  for (int start = 0; start + 2 <= rows; start += batch_size) {
    int len = std::min(batch_size, rows - start);
    if (len < 2) break;
    Var<S> bi = nn::constant<S>(Mat<S>(zi.middleRows(start, len)));
    Var<S> bv = nn::constant<S>(Mat<S>(zv.middleRows(start, len)));
    total += double(model::club_loss(bi, bv, q)->value(0, 0));
    ++count;
  }
  return count ? total / count : 0.0;
}

// ---- ablation suite ----

struct AblationRow {
  std::string variant;
  std::string scenario;
  Metrics metrics;
};

template <class S>
std::vector<AblationRow> ablation_suite(const Dataset& ds,
                                        const data::ChronoSplit& split,
                                        const model::ModelConfig& mcfg,
                                        const TrainConfig& tcfg,
                                        const std::vector<std::string>& scenarios,
                                        const std::vector<int>* cluster_labels = nullptr) {
  static const char* kVariants[] = {"full",  "wo_cd", "wo_gr", "wo_idp",
                                    "wo_sl", "wo_ti", "wo_tl"};
  std::vector<AblationRow> rows;
  for (const char* name : kVariants) {
    SteveModel<S> m;
    m.init(mcfg, tcfg.seed);
    train(m, ds, split, tcfg, model::Variant::parse(name));
    for (const auto& sckind : scenarios) {
      data::Scenario sc = data::ood_filter(split.test, sckind, cluster_labels);
      if (sc.indices.empty()) continue;
      rows.push_back({name, sckind, evaluate(m, ds, split.test, sc, tcfg.mape_floor)});
    }
  }
  return rows;
}

}  // namespace steve::train_eval
