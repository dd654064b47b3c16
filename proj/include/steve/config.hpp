#pragma once

// Flat dotted-key configuration files (`key = value`, '#' comments) plus
// --set style overrides, resolved into the typed config structs. Unknown
// keys are rejected.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "steve/dataio.hpp"
#include "steve/errors.hpp"
#include "steve/model.hpp"
#include "steve/train_eval.hpp"

namespace steve::cfg {

using Options = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

}  // namespace detail

inline Options parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  Options opts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(s.substr(0, eq));
    std::string value = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + ": empty key");
    opts[key] = value;
  }
  return opts;
}

inline void apply_override(Options& opts, const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override must be key=value, got '" + assignment + "'");
  opts[detail::trim(assignment.substr(0, eq))] = detail::trim(assignment.substr(eq + 1));
}

struct FullConfig {
  data::SynthConfig synth;
  data::WindowSpec window;
  tsrl::TsrlConfig tsrl;
  train_eval::TrainConfig train;
  double grl_eta = 1.0;
  int pool_kernel = 3;
  std::string precision = "float64";  // float32 | float64
  int k_min = 2, k_max = 6;
  std::vector<std::string> scenarios = {"workday", "holiday"};
};

inline FullConfig make_config(const Options& opts) {
  FullConfig c;
  using detail::to_double;
  using detail::to_int;
  for (const auto& [key, v] : opts) {
    if (key == "synth.grid_h") c.synth.grid_h = to_int(key, v);
    else if (key == "synth.grid_w") c.synth.grid_w = to_int(key, v);
    else if (key == "synth.channels") c.synth.channels = to_int(key, v);
    else if (key == "synth.steps") c.synth.steps = to_int(key, v);
    else if (key == "synth.interval_minutes") c.synth.interval_minutes = to_int(key, v);
    else if (key == "synth.start_timestamp") c.synth.start_timestamp = v;
    else if (key == "synth.function_types") c.synth.function_types = to_int(key, v);
    else if (key == "synth.function_effect") c.synth.function_effect = to_double(key, v);
    else if (key == "synth.site_spread") c.synth.site_spread = to_double(key, v);
    else if (key == "synth.regimes") c.synth.regimes = to_int(key, v);
    else if (key == "synth.shift") c.synth.shift = to_double(key, v);
    else if (key == "synth.regime_block_steps")
      c.synth.regime_block_steps = to_int(key, v);
    else if (key == "synth.train_fraction") c.synth.train_fraction = to_double(key, v);
    else if (key == "synth.holiday_damping") c.synth.holiday_damping = to_double(key, v);
    else if (key == "synth.diffusion") c.synth.diffusion = to_double(key, v);
    else if (key == "synth.noise_scale") c.synth.noise_scale = to_double(key, v);
    else if (key == "synth.seed") c.synth.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "window.recent_steps") c.window.recent_steps = to_int(key, v);
    else if (key == "window.periodic_days") c.window.periodic_days = to_int(key, v);
    else if (key == "window.periodic_steps_per_day")
      c.window.periodic_steps_per_day = to_int(key, v);
    else if (key == "model.hidden_dim") c.tsrl.hidden_dim = to_int(key, v);
    else if (key == "model.temporal_kernel") c.tsrl.temporal_kernel = to_int(key, v);
    else if (key == "model.spatial_kernel") c.tsrl.spatial_kernel = to_int(key, v);
    else if (key == "model.sandwich_layers") c.tsrl.sandwich_layers = to_int(key, v);
    else if (key == "model.grl_eta") c.grl_eta = to_double(key, v);
    else if (key == "model.pool_kernel") c.pool_kernel = to_int(key, v);
    else if (key == "train.learning_rate") c.train.learning_rate = to_double(key, v);
    else if (key == "train.batch_size") c.train.batch_size = to_int(key, v);
    else if (key == "train.max_epochs") c.train.max_epochs = to_int(key, v);
    else if (key == "train.patience") c.train.patience = to_int(key, v);
    else if (key == "train.seed") c.train.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "train.dwa_temperature") c.train.dwa_temperature = to_double(key, v);
    else if (key == "train.inner_q_steps") c.train.inner_q_steps = to_int(key, v);
    else if (key == "train.mape_floor") c.train.mape_floor = to_double(key, v);
    else if (key == "train.clip_norm") c.train.clip_norm = to_double(key, v);
    else if (key == "train.head_lr_mult") c.train.head_lr_mult = to_double(key, v);
    else if (key == "train.warmup_epochs") c.train.warmup_epochs = to_int(key, v);
    else if (key == "train.precision") {
      if (v != "float32" && v != "float64")
        throw ConfigError("config: train.precision must be float32 or float64");
      c.precision = v;
    } else if (key == "cluster.k_min") c.k_min = to_int(key, v);
    else if (key == "cluster.k_max") c.k_max = to_int(key, v);
    else if (key == "eval.scenarios") {
      c.scenarios.clear();
      std::istringstream ss(v);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        tok = detail::trim(tok);
        if (!tok.empty()) c.scenarios.push_back(tok);
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (c.k_min < 2 || c.k_max < c.k_min)
    throw ConfigError("config: cluster.k_min/k_max invalid");
  return c;
}

inline std::string snapshot(const Options& opts) {
  std::ostringstream out;
  for (const auto& [key, v] : opts) out << key << " = " << v << "\n";
  return out.str();
}

}  // namespace steve::cfg
