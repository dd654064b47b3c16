#pragma once

// Shared dataset-to-training plumbing: capacities and flow scale from the
// training portion only, window extraction, chronological split, and the
// model configuration derived from a resolved config.

#include <algorithm>
#include <utility>
#include <vector>

#include "steve/config.hpp"
#include "steve/dataio.hpp"
#include "steve/graph_ctx.hpp"
#include "steve/model.hpp"

namespace steve::pipeline {

struct Prepared {
  data::Dataset ds;
  graph_ctx::CapacityTable cap;
  std::vector<data::Sample> samples;
  data::ChronoSplit split;
  double flow_scale = 1.0;
  int train_steps = 0;  // raw steps treated as training history
};

inline Prepared prepare(data::Dataset ds, const data::WindowSpec& ws,
                        double train_fraction = 0.7) {
  Prepared p;
  p.ds = std::move(ds);
  p.train_steps = std::max(1, static_cast<int>(p.ds.flows.steps * train_fraction));
  data::FlowTensor train_flows = p.ds.flows.head(p.train_steps);
  p.cap = graph_ctx::capacity(train_flows);
  p.flow_scale = 1.0;
  for (int i = 0; i < p.cap.cp.rows(); ++i)
    for (int c = 0; c < p.cap.cp.cols(); ++c)
      if (p.cap.active[i][c])
        p.flow_scale = std::max(p.flow_scale, double(p.cap.cp(i, c)));
  p.samples = data::make_windows(p.ds, ws, p.cap);
  p.split = data::chrono_split(p.samples);
  return p;
}

inline model::ModelConfig model_config(const cfg::FullConfig& c, const Prepared& p) {
  model::ModelConfig mc;
  mc.tsrl = c.tsrl;
  mc.tsrl.input_channels = p.ds.channels();
  mc.nodes = p.ds.regions();
  mc.window = c.window.total_window();
  mc.pool_kernel = c.pool_kernel;
  mc.grl_eta = c.grl_eta;
  mc.flow_scale = p.flow_scale;
  return mc;
}

}  // namespace steve::pipeline
