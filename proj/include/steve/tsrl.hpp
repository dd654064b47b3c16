#pragma once

// Traffic sequence encoder: temporal causal convolutions and graph message
// passing composed into TCL -> GCL -> TCL "sandwich" blocks. A [T, N, c]
// window batched over B samples is a length-T vector of [B*N, c] variables.

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "steve/autodiff.hpp"
#include "steve/errors.hpp"

namespace steve::tsrl {

using nn::Mat;
using nn::NamedParam;
using nn::Var;

struct TsrlConfig {
  int temporal_kernel = 3;   // K_t
  int spatial_kernel = 3;    // K_s propagation hops
  int sandwich_layers = 2;   // L
  int hidden_dim = 32;       // D
  int input_channels = 1;    // d

  int output_length(int window) const {
    return window - 2 * sandwich_layers * (temporal_kernel - 1);
  }
  void validate(int window) const {
    if (temporal_kernel < 1 || spatial_kernel < 1 || sandwich_layers < 1 ||
        hidden_dim < 1 || input_channels < 1)
      throw ConfigError("TsrlConfig: all sizes must be >= 1");
    if (output_length(window) < 1)
      throw ShapeError("TsrlConfig: window too short, T' = " +
                       std::to_string(output_length(window)));
  }
};

// Symmetric degree normalization with self-loops.
template <class S>
Mat<S> normalized_adjacency(const Mat<S>& adjacency) {
  const int n = static_cast<int>(adjacency.rows());
  if (adjacency.cols() != n) throw ShapeError("normalized_adjacency: square matrix");
  Mat<S> a = adjacency + Mat<S>::Identity(n, n);
  Eigen::Matrix<S, Eigen::Dynamic, 1> deg = a.rowwise().sum();
  Eigen::Matrix<S, Eigen::Dynamic, 1> inv_sqrt =
      deg.unaryExpr([](S d) { return d > S(0) ? S(1) / std::sqrt(d) : S(0); });
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

// 1-D causal convolution along time with a gated linear unit. With
// `gated` off the layer is the plain linear convolution (test hook and
// building block for poolers).
template <class S>
struct TclLayer {
  int kernel = 3;
  int in_channels = 1, out_channels = 1;
  bool gated = true;
  std::vector<Var<S>> weights;  // kernel entries, each [c_in, G*c_out]
  Var<S> bias;                  // [1, G*c_out]

  void init(int k, int c_in, int c_out, bool use_glu, std::mt19937_64& rng) {
    kernel = k;
    in_channels = c_in;
    out_channels = c_out;
    gated = use_glu;
    const int g = gated ? 2 : 1;
    weights.clear();
    // gain 2 offsets the GLU gate's ~0.5x attenuation at init
    const double gain = gated ? 2.0 : 1.0;
    for (int i = 0; i < k; ++i)
      weights.push_back(nn::parameter<S>(
          nn::uniform_init<S>(c_in, g * c_out, k * c_in, rng, gain)));
    bias = nn::parameter<S>(Mat<S>::Zero(1, g * c_out));
  }

  std::vector<Var<S>> forward(const std::vector<Var<S>>& seq) const {
    const int t_in = static_cast<int>(seq.size());
    if (t_in < kernel) throw ShapeError("TclLayer: T_in < K_t");
    std::vector<Var<S>> out;
    out.reserve(t_in - kernel + 1);
    for (int t = 0; t + kernel <= t_in; ++t) {
      Var<S> acc = nn::matmul(seq[t], weights[0]);
      for (int k = 1; k < kernel; ++k)
        acc = nn::add(acc, nn::matmul(seq[t + k], weights[k]));
      acc = nn::add_bias(acc, bias);
      out.push_back(gated ? nn::glu(acc) : acc);
    }
    return out;
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < weights.size(); ++i)
      out.push_back({prefix + ".w" + std::to_string(i), weights[i]});
    out.push_back({prefix + ".b", bias});
  }
};

// K_s stacked propagation hops over the normalized adjacency, one weight
// per hop, tanh output (identity when `linear`).
template <class S>
struct GclLayer {
  int hops = 3;
  int dim = 32;
  bool linear = false;
  std::vector<Var<S>> hop_weights;  // each [D, D]
  Var<S> bias;                      // [1, D]

  void init(int k_s, int d, std::mt19937_64& rng, bool linear_out = false) {
    hops = k_s;
    dim = d;
    linear = linear_out;
    hop_weights.clear();
    // bound sqrt(3/d) keeps per-hop variance ~1 so stacked hops don't
    // attenuate the signal
    for (int i = 0; i < k_s; ++i)
      hop_weights.push_back(
          nn::parameter<S>(nn::uniform_init<S>(d, d, d, rng, std::sqrt(3.0))));
    bias = nn::parameter<S>(Mat<S>::Zero(1, d));
  }

  Var<S> forward(const Var<S>& h, const Mat<S>& norm_adj) const {
    Var<S> x = h;
    for (int j = 0; j < hops; ++j)
      x = nn::matmul(nn::graph_propagate(x, norm_adj), hop_weights[j]);
    x = nn::add_bias(x, bias);
    return linear ? x : nn::tanh_act(x);
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < hop_weights.size(); ++i)
      out.push_back({prefix + ".w" + std::to_string(i), hop_weights[i]});
    out.push_back({prefix + ".b", bias});
  }
};

template <class S>
struct SandwichBlock {
  int crop = 4;  // 2 * (K_t - 1), steps dropped by the two TCLs
  TclLayer<S> tcl_in, tcl_out;
  GclLayer<S> gcl;
  Var<S> res_proj;  // [c_in, D] skip projection

  void init(const TsrlConfig& cfg, int c_in, std::mt19937_64& rng) {
    crop = 2 * (cfg.temporal_kernel - 1);
    tcl_in.init(cfg.temporal_kernel, c_in, cfg.hidden_dim, true, rng);
    gcl.init(cfg.spatial_kernel, cfg.hidden_dim, rng);
    tcl_out.init(cfg.temporal_kernel, cfg.hidden_dim, cfg.hidden_dim, true, rng);
    res_proj = nn::parameter<S>(
        nn::uniform_init<S>(c_in, cfg.hidden_dim, c_in, rng, std::sqrt(3.0)));
  }

  std::vector<Var<S>> forward(const std::vector<Var<S>>& seq,
                              const Mat<S>& norm_adj) const {
    std::vector<Var<S>> h = tcl_in.forward(seq);
    for (auto& step : h) step = gcl.forward(step, norm_adj);
    h = tcl_out.forward(h);
    // skip connection from the most recent input in each receptive field
    for (std::size_t t = 0; t < h.size(); ++t)
      h[t] = nn::add(h[t], nn::matmul(seq[t + crop], res_proj));
    return h;
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) const {
    tcl_in.collect(out, prefix + ".tcl_in");
    gcl.collect(out, prefix + ".gcl");
    tcl_out.collect(out, prefix + ".tcl_out");
    out.push_back({prefix + ".res", res_proj});
  }
};

template <class S>
struct TsrlEncoder {
  TsrlConfig cfg;
  std::vector<SandwichBlock<S>> blocks;

  void init(const TsrlConfig& c, std::mt19937_64& rng) {
    cfg = c;
    blocks.assign(c.sandwich_layers, {});
    for (int l = 0; l < c.sandwich_layers; ++l)
      blocks[l].init(c, l == 0 ? c.input_channels : c.hidden_dim, rng);
  }

  // [T, B*N, d] -> [T', B*N, D] with T' = T - 2L(K_t - 1).
  std::vector<Var<S>> forward(const std::vector<Var<S>>& seq,
                              const Mat<S>& norm_adj) const {
    cfg.validate(static_cast<int>(seq.size()));
    std::vector<Var<S>> h = seq;
    for (const auto& block : blocks) h = block.forward(h, norm_adj);
    return h;
  }

  void collect(std::vector<NamedParam<S>>& out, const std::string& prefix) const {
    for (std::size_t l = 0; l < blocks.size(); ++l)
      blocks[l].collect(out, prefix + ".block" + std::to_string(l));
  }
};

}  // namespace steve::tsrl
