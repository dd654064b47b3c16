#pragma once

// Dual-branch encoder, vCLUB disentanglement, the three self-supervised
// task heads with gradient reversal, learnable context priors, and the
// mixed prediction head.

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "steve/autodiff.hpp"
#include "steve/errors.hpp"
#include "steve/tsrl.hpp"

namespace steve::model {

using nn::Mat;
using nn::NamedParam;
using nn::Var;

inline constexpr double kLogVarMin = -8.0;
inline constexpr double kLogVarMax = 8.0;
inline constexpr int kTemporalClasses = 48;

template <class S>
struct Mlp2 {
  Var<S> w1, b1, w2, b2;  // tanh hidden

  void init(int in, int hidden, int out, std::mt19937_64& rng) {
    w1 = nn::parameter<S>(nn::uniform_init<S>(in, hidden, in, rng));
    b1 = nn::parameter<S>(Mat<S>::Zero(1, hidden));
    w2 = nn::parameter<S>(nn::uniform_init<S>(hidden, out, hidden, rng));
    b2 = nn::parameter<S>(Mat<S>::Zero(1, out));
  }
  Var<S> forward(const Var<S>& x) const {
    Var<S> h = nn::tanh_act(nn::add_bias(nn::matmul(x, w1), b1));
    return nn::add_bias(nn::matmul(h, w2), b2);
  }
  // Same map with the current parameter values frozen as constants.
  Var<S> forward_frozen(const Var<S>& x) const {
    Var<S> h = nn::tanh_act(nn::add_bias(nn::matmul(x, nn::detach(w1)), nn::detach(b1)));
    return nn::add_bias(nn::matmul(h, nn::detach(w2)), nn::detach(b2));
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& p) const {
    out.push_back({p + ".w1", w1});
    out.push_back({p + ".b1", b1});
    out.push_back({p + ".w2", w2});
    out.push_back({p + ".b2", b2});
  }
};

// Node pooler (1-D convolution over T' plus mean) and the three task heads,
// shared between the variant branch and the reversed invariant branch.
template <class S>
struct SslHeads {
  tsrl::TclLayer<S> pooler;  // linear conv, D -> D
  Mlp2<S> g1;                // spatial location, D -> N
  Mlp2<S> g2;                // temporal index, D -> 48
  Mlp2<S> g3;                // traffic load, D -> d

  void init(int dim, int nodes, int channels, int pool_kernel, std::mt19937_64& rng) {
    pooler.init(pool_kernel, dim, dim, false, rng);
    g1.init(dim, dim, nodes, rng);
    g2.init(dim, dim, kTemporalClasses, rng);
    g3.init(dim, dim, channels, rng);
    // start the squashed load prediction near zero, like a zero-init linear
    // head on a nonnegative quantity
    g3.b2->value.setConstant(S(-3));
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& p) const {
    pooler.collect(out, p + ".pooler");
    g1.collect(out, p + ".g1");
    g2.collect(out, p + ".g2");
    g3.collect(out, p + ".g3");
  }
};

// Per-node temporal aggregation: convolution over the T' axis, mean over
// the remaining steps.
template <class S>
Var<S> pool_nodes(const SslHeads<S>& heads, const std::vector<Var<S>>& repr) {
  if (repr.empty()) throw ShapeError("pool_nodes: empty representation");
  std::vector<Var<S>> seq = repr;
  if (static_cast<int>(seq.size()) >= heads.pooler.kernel)
    seq = heads.pooler.forward(seq);
  // else: window shorter than the kernel, fall through to the plain mean
  Var<S> acc = seq[0];
  for (std::size_t t = 1; t < seq.size(); ++t) acc = nn::add(acc, seq[t]);
  return nn::scale(acc, S(1) / S(seq.size()));
}

// Per-sample features for the dependence penalty: plain time mean, node
// mean, then a tanh squash. The squash is invertible (so the dependence
// being estimated is unchanged) but keeps q's inputs bounded, which stops
// the encoder from shrinking the penalty by inflating feature magnitudes
// faster than q can track.
template <class S>
Var<S> club_features(const std::vector<Var<S>>& repr, int nodes) {
  if (repr.empty()) throw ShapeError("club_features: empty representation");
  Var<S> acc = repr[0];
  for (std::size_t t = 1; t < repr.size(); ++t) acc = nn::add(acc, repr[t]);
  return nn::tanh_act(
      nn::segment_mean(nn::scale(acc, S(1) / S(repr.size())), nodes));
}

// Variational q(Z_I | Z_V) = N(mu(Z_V), diag exp(logvar(Z_V))).
template <class S>
struct VariationalNet {
  Mlp2<S> mean_net, logvar_net;

  void init(int dim, std::mt19937_64& rng) {
    mean_net.init(dim, dim, dim, rng);
    logvar_net.init(dim, dim, dim, rng);
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& p) const {
    mean_net.collect(out, p + ".mu");
    logvar_net.collect(out, p + ".logvar");
  }
};

// vCLUB upper-bound estimate over sample-level pooled pairs; q's parameters
// are frozen so gradients reach only the encoder branches.
template <class S>
Var<S> club_loss(const Var<S>& z_i_pooled, const Var<S>& z_v_pooled,
                 const VariationalNet<S>& q) {
  Var<S> mu = q.mean_net.forward_frozen(z_v_pooled);
  Var<S> lv = nn::clamp(q.logvar_net.forward_frozen(z_v_pooled), S(kLogVarMin),
                        S(kLogVarMax));
  Var<S> logq = nn::pairwise_gauss_logq(z_i_pooled, mu, lv);
  return nn::sub(nn::trace_mean(logq), nn::mean_all(logq));
}

// Mean log-likelihood of the aligned pairs under q (the q-fitting objective).
template <class S>
Var<S> variational_loglik(const Var<S>& z_i_pooled, const Var<S>& z_v_pooled,
                          const VariationalNet<S>& q) {
  Var<S> mu = q.mean_net.forward(z_v_pooled);
  Var<S> lv = nn::clamp(q.logvar_net.forward(z_v_pooled), S(kLogVarMin), S(kLogVarMax));
  return nn::trace_mean(nn::pairwise_gauss_logq(z_i_pooled, mu, lv));
}

// Gradient-ascent steps on q with gradient-isolated representations.
template <class S>
void fit_variational(const VariationalNet<S>& q, nn::Adam<S>& q_opt,
                     const Var<S>& z_i_pooled, const Var<S>& z_v_pooled, int steps) {
  for (int s = 0; s < steps; ++s) {
    q_opt.zero_grad();
    Var<S> nll = nn::scale(
        variational_loglik(nn::detach(z_i_pooled), nn::detach(z_v_pooled), q), S(-1));
    nn::backward(nll);
    q_opt.step();
  }
}

template <class S>
struct SslLosses {
  Var<S> sl, ti, tl;
};

struct BatchLabels {
  std::vector<int> node_ids;        // [B*N], repeating 0..N-1 per sample
  std::vector<int> temporal;        // [B], in [0, 48)
  Eigen::MatrixXd load;             // [B*N, d]
};

// Task losses over pooled node representations [B*N, D].
template <class S>
SslLosses<S> ssl_losses(const SslHeads<S>& heads, const Var<S>& pooled,
                        const BatchLabels& labels, int nodes) {
  for (int t : labels.temporal)
    if (t < 0 || t >= kTemporalClasses) throw LabelError("ssl_losses: temporal label");
  SslLosses<S> out;
  out.sl = nn::softmax_cross_entropy(heads.g1.forward(pooled), labels.node_ids);
  Var<S> ti_logits = nn::segment_mean(heads.g2.forward(pooled), nodes);
  out.ti = nn::softmax_cross_entropy(ti_logits, labels.temporal);
  // load prediction squashed to the valid level range: keeps the reversed
  // (adversarial) regression bounded instead of divergent
  Var<S> load_pred =
      nn::scale(nn::sigmoid(heads.g3.forward(pooled)), S(5));
  out.tl = nn::squared_error_rowmean(load_pred, labels.load.cast<S>().eval());
  return out;
}

// Which loss terms a training run keeps (the six ablation variants).
struct Variant {
  std::string name = "full";
  bool use_cd = true;    // L_D
  bool use_grl = true;   // gradient reversal on the invariant branch
  bool use_sl = true, use_ti = true, use_tl = true;

  static Variant parse(const std::string& name) {
    Variant v;
    v.name = name;
    if (name == "full") return v;
    if (name == "wo_cd") { v.use_cd = false; return v; }
    if (name == "wo_gr") { v.use_grl = false; return v; }
    if (name == "wo_idp") { v.use_cd = false; v.use_grl = false; return v; }
    if (name == "wo_sl") { v.use_sl = false; return v; }
    if (name == "wo_ti") { v.use_ti = false; return v; }
    if (name == "wo_tl") { v.use_tl = false; return v; }
    throw ConfigError("Variant: unknown name '" + name + "'");
  }
  int task_count() const {
    return 2 * (int(use_sl) + int(use_ti) + int(use_tl));
  }
};

// Six task terms of the adversarial loss, ordered
// (sl_V, ti_V, tl_V, sl_I, ti_I, tl_I); dropped tasks contribute nothing.
template <class S>
struct AdversarialResult {
  Var<S> total;
  std::vector<S> task_values;  // raw per-task values for DWA bookkeeping
};

template <class S>
AdversarialResult<S> adversarial_loss(const SslHeads<S>& heads,
                                      const std::vector<Var<S>>& z_i,
                                      const std::vector<Var<S>>& z_v,
                                      const BatchLabels& labels, int nodes,
                                      const Variant& variant,
                                      const std::vector<double>& task_weights,
                                      double eta = 1.0) {
  std::vector<Var<S>> z_i_branch = z_i;
  if (variant.use_grl)
    for (auto& step : z_i_branch) step = nn::grl(step, S(eta));
  Var<S> pooled_v = pool_nodes(heads, z_v);
  Var<S> pooled_i = pool_nodes(heads, z_i_branch);
  SslLosses<S> lv = ssl_losses(heads, pooled_v, labels, nodes);
  SslLosses<S> li = ssl_losses(heads, pooled_i, labels, nodes);
  std::vector<Var<S>> terms;
  AdversarialResult<S> res;
  if (variant.use_sl) { terms.push_back(lv.sl); terms.push_back(li.sl); }
  if (variant.use_ti) { terms.push_back(lv.ti); terms.push_back(li.ti); }
  if (variant.use_tl) { terms.push_back(lv.tl); terms.push_back(li.tl); }
  // reorder to (V..., I...) to match the weight convention
  std::vector<Var<S>> ordered;
  for (std::size_t i = 0; i < terms.size(); i += 2) ordered.push_back(terms[i]);
  for (std::size_t i = 1; i < terms.size(); i += 2) ordered.push_back(terms[i]);
  if (task_weights.size() != ordered.size())
    throw ConfigError("adversarial_loss: weight count mismatch");
  Var<S> total = nn::constant<S>(Mat<S>::Zero(1, 1));
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    res.task_values.push_back(ordered[i]->value(0, 0));
    total = nn::add(total, nn::scale(ordered[i], S(task_weights[i])));
  }
  res.total = total;
  return res;
}

// Learnable priors alpha = softmax(u(concat of globally pooled Z_I, Z_V)).
template <class S>
struct PriorNet {
  Var<S> u, bias;  // [2D, 2], [1, 2]

  void init(int dim, std::mt19937_64& rng) {
    u = nn::parameter<S>(nn::uniform_init<S>(2 * dim, 2, 2 * dim, rng));
    bias = nn::parameter<S>(Mat<S>::Zero(1, 2));
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& p) const {
    out.push_back({p + ".u", u});
    out.push_back({p + ".b", bias});
  }
};

template <class S>
Var<S> global_pool(const std::vector<Var<S>>& repr, int nodes) {
  Var<S> acc = nn::segment_mean(repr[0], nodes);
  for (std::size_t t = 1; t < repr.size(); ++t)
    acc = nn::add(acc, nn::segment_mean(repr[t], nodes));
  return nn::scale(acc, S(1) / S(repr.size()));
}

// [B, 2] rows on the simplex.
template <class S>
Var<S> priors(const PriorNet<S>& net, const std::vector<Var<S>>& z_i,
              const std::vector<Var<S>>& z_v, int nodes) {
  Var<S> cat = nn::concat_cols(global_pool(z_i, nodes), global_pool(z_v, nodes));
  return nn::row_softmax(nn::add_bias(nn::matmul(cat, net.u), net.bias));
}

// Prediction head: 1-D convolution collapsing T', then a two-layer MLP.
template <class S>
struct PredHead {
  std::vector<Var<S>> collapse;  // T' entries, each [D, D]
  Var<S> collapse_bias;
  Mlp2<S> mlp;

  void init(int t_prime, int dim, int out, std::mt19937_64& rng) {
    collapse.clear();
    for (int t = 0; t < t_prime; ++t)
      collapse.push_back(nn::parameter<S>(
          nn::uniform_init<S>(dim, dim, t_prime * dim, rng)));
    collapse_bias = nn::parameter<S>(Mat<S>::Zero(1, dim));
    mlp.init(dim, dim, out, rng);
  }
  Var<S> forward(const std::vector<Var<S>>& repr) const {
    if (repr.size() != collapse.size()) throw ShapeError("PredHead: T' mismatch");
    Var<S> acc = nn::matmul(repr[0], collapse[0]);
    for (std::size_t t = 1; t < repr.size(); ++t)
      acc = nn::add(acc, nn::matmul(repr[t], collapse[t]));
    return mlp.forward(nn::tanh_act(nn::add_bias(acc, collapse_bias)));
  }
  void collect(std::vector<NamedParam<S>>& out, const std::string& p) const {
    for (std::size_t t = 0; t < collapse.size(); ++t)
      out.push_back({p + ".c" + std::to_string(t), collapse[t]});
    out.push_back({p + ".cb", collapse_bias});
    mlp.collect(out, p + ".mlp");
  }
};

struct ModelConfig {
  tsrl::TsrlConfig tsrl;
  int nodes = 64;
  int window = 11;        // T
  int pool_kernel = 3;
  double grl_eta = 1.0;
  double flow_scale = 1.0;  // input normalization / output de-normalization
};

template <class S>
struct SteveModel {
  ModelConfig cfg;
  tsrl::TsrlEncoder<S> enc_invariant, enc_variant;
  SslHeads<S> heads;
  VariationalNet<S> q;
  PriorNet<S> prior;
  PredHead<S> head_invariant, head_variant;

  void init(const ModelConfig& c, std::uint64_t seed) {
    cfg = c;
    cfg.tsrl.validate(c.window);
    const int t_prime = c.tsrl.output_length(c.window);
    std::mt19937_64 rng(seed);
    enc_invariant.init(c.tsrl, rng);
    enc_variant.init(c.tsrl, rng);
    heads.init(c.tsrl.hidden_dim, c.nodes, c.tsrl.input_channels, c.pool_kernel, rng);
    q.init(c.tsrl.hidden_dim, rng);
    prior.init(c.tsrl.hidden_dim, rng);
    head_invariant.init(t_prime, c.tsrl.hidden_dim, c.tsrl.input_channels, rng);
    head_variant.init(t_prime, c.tsrl.hidden_dim, c.tsrl.input_channels, rng);
  }

  // everything trained by the main loop (q excluded: it has its own fit)
  std::vector<NamedParam<S>> model_params() const {
    std::vector<NamedParam<S>> out;
    enc_invariant.collect(out, "enc_i");
    enc_variant.collect(out, "enc_v");
    heads.collect(out, "heads");
    prior.collect(out, "prior");
    head_invariant.collect(out, "h1");
    head_variant.collect(out, "h2");
    return out;
  }
  std::vector<NamedParam<S>> q_params() const {
    std::vector<NamedParam<S>> out;
    q.collect(out, "q");
    return out;
  }
  std::vector<NamedParam<S>> all_params() const {
    auto out = model_params();
    auto qp = q_params();
    out.insert(out.end(), qp.begin(), qp.end());
    return out;
  }
};

template <class S>
struct ReprPair {
  std::vector<Var<S>> z_i, z_v;  // each [T', B*N, D]
};

template <class S>
ReprPair<S> encode_pair(const SteveModel<S>& model, const std::vector<Var<S>>& input,
                        const Mat<S>& norm_adj) {
  ReprPair<S> pair;
  pair.z_i = model.enc_invariant.forward(input, norm_adj);
  pair.z_v = model.enc_variant.forward(input, norm_adj);
  return pair;
}

// alpha-weighted mix of the two branch heads, de-normalized to flow units.
template <class S>
struct PredictResult {
  Var<S> y_hat;   // [B*N, F]
  Var<S> alpha;   // [B, 2]
};

template <class S>
PredictResult<S> predict(const SteveModel<S>& model, const ReprPair<S>& pair) {
  PredictResult<S> res;
  res.alpha = priors(model.prior, pair.z_i, pair.z_v, model.cfg.nodes);
  Var<S> h1 = model.head_invariant.forward(pair.z_i);
  Var<S> h2 = model.head_variant.forward(pair.z_v);
  Var<S> mix = nn::add(
      nn::scale_rows_block(h1, nn::cols(res.alpha, 0, 1), model.cfg.nodes),
      nn::scale_rows_block(h2, nn::cols(res.alpha, 1, 1), model.cfg.nodes));
  res.y_hat = nn::scale(mix, S(model.cfg.flow_scale));
  return res;
}

// Mean absolute error over all N*F entries, batch-averaged.
template <class S>
Var<S> prediction_loss(const Var<S>& y_hat, const Mat<S>& target) {
  return nn::l1_mean(y_hat, target);
}

template <class S>
Var<S> total_loss(const Var<S>& l_p, const Var<S>& l_s, const Var<S>& l_d) {
  Var<S> sum = nn::add(nn::add(l_p, l_s), l_d);
  if (!std::isfinite(double(sum->value(0, 0))))
    throw NonFiniteError("total_loss: non-finite objective");
  return sum;
}

}  // namespace steve::model
