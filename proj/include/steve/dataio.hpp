#pragma once

// Dataset representation, on-disk codec, synthetic confounded-data
// generation, sliding-window samples, chronological splits, and OOD
// scenario filters.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "steve/errors.hpp"
#include "steve/flow_tensor.hpp"
#include "steve/graph_ctx.hpp"

namespace steve::data {

// ---- calendar helpers ----

// Days since 1970-01-01 for a civil date (Gregorian, proleptic).
inline long days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

struct CivilTime {
  int year = 1970;
  unsigned month = 1, day = 1;
  int minutes_of_day = 0;
};

inline CivilTime parse_timestamp(const std::string& s) {
  CivilTime t;
  int hh = 0, mm = 0;
  if (std::sscanf(s.c_str(), "%d-%u-%u %d:%d", &t.year, &t.month, &t.day, &hh, &mm) != 5)
    throw FormatError("parse_timestamp: expected 'YYYY-MM-DD HH:MM', got '" + s + "'");
  t.minutes_of_day = hh * 60 + mm;
  return t;
}

// ---- dataset ----

struct Dataset {
  FlowTensor flows;
  int interval_minutes = 30;
  std::string start_timestamp = "2024-01-01 00:00";
  int grid_h = 1, grid_w = 1;
  std::vector<std::string> holiday_dates;            // "YYYY-MM-DD"
  std::map<std::string, std::vector<int>> context_columns;
  Eigen::MatrixXf adjacency;
  std::vector<std::uint8_t> holiday_mask;            // derived, [steps]

  int steps() const { return flows.steps; }
  int regions() const { return flows.regions; }
  int channels() const { return flows.channels; }

  // Absolute day index and minutes-of-day of a time step.
  long step_day(int t) const {
    CivilTime c = parse_timestamp(start_timestamp);
    long total_min = static_cast<long>(c.minutes_of_day) +
                     static_cast<long>(t) * interval_minutes;
    return days_from_civil(c.year, c.month, c.day) + total_min / 1440;
  }
  int step_minutes_of_day(int t) const {
    CivilTime c = parse_timestamp(start_timestamp);
    long total_min = static_cast<long>(c.minutes_of_day) +
                     static_cast<long>(t) * interval_minutes;
    return static_cast<int>(total_min % 1440);
  }

  // Weekends plus the explicit holiday-date list.
  void finalize() {
    if (grid_h * grid_w != regions())
      throw ConfigError("Dataset: grid shape does not match region count");
    adjacency = graph_ctx::grid_adjacency(grid_h, grid_w);
    std::set<long> holiday_days;
    for (const auto& h : holiday_dates) {
      CivilTime c = parse_timestamp(h + " 00:00");
      holiday_days.insert(days_from_civil(c.year, c.month, c.day));
    }
    holiday_mask.assign(steps(), 0);
    for (int t = 0; t < steps(); ++t) {
      long day = step_day(t);
      int weekday = static_cast<int>(((day % 7) + 7 + 4) % 7);  // 0=Sun..6=Sat
      holiday_mask[t] = (weekday == 0 || weekday == 6 || holiday_days.count(day)) ? 1 : 0;
    }
  }
};

// ---- codec ----

namespace detail {
constexpr char kMagic[4] = {'S', 'T', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in)
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(static_cast<long>(in.tellg())));
  return v;
}
}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(fs::path(dir) / "flows.stds", std::ios::binary);
    out.write(detail::kMagic, 4);
    detail::write_pod<std::uint16_t>(out, detail::kVersion);
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.steps()));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.regions()));
    detail::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(ds.channels()));
    out.write(reinterpret_cast<const char*>(ds.flows.values.data()),
              static_cast<std::streamsize>(ds.flows.values.size() * sizeof(float)));
    if (!out) throw FormatError("save_dataset: write failed");
  }
  {
    std::ofstream out(fs::path(dir) / "meta.cfg");
    out << "grid_h = " << ds.grid_h << "\n";
    out << "grid_w = " << ds.grid_w << "\n";
    out << "interval_minutes = " << ds.interval_minutes << "\n";
    out << "start_timestamp = " << ds.start_timestamp << "\n";
    out << "holidays =";
    for (const auto& h : ds.holiday_dates) out << " " << h;
    out << "\n";
    out << "context_columns =";
    for (const auto& [name, col] : ds.context_columns) out << " " << name;
    out << "\n";
  }
  if (!ds.context_columns.empty()) {
    std::ofstream out(fs::path(dir) / "context.csv");
    bool first = true;
    for (const auto& [name, col] : ds.context_columns) {
      out << (first ? "" : ",") << name;
      first = false;
    }
    out << "\n";
    for (int t = 0; t < ds.steps(); ++t) {
      first = true;
      for (const auto& [name, col] : ds.context_columns) {
        out << (first ? "" : ",") << col[t];
        first = false;
      }
      out << "\n";
    }
  }
}

inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  std::vector<std::string> context_names;
  {
    std::ifstream in(fs::path(dir) / "meta.cfg");
    if (!in) throw FormatError("load_dataset: missing meta.cfg in " + dir);
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(0, eq);
      key.erase(key.find_last_not_of(" \t") + 1);
      std::string val = line.substr(eq + 1);
      val.erase(0, val.find_first_not_of(" \t"));
      if (key == "grid_h") ds.grid_h = std::stoi(val);
      else if (key == "grid_w") ds.grid_w = std::stoi(val);
      else if (key == "interval_minutes") ds.interval_minutes = std::stoi(val);
      else if (key == "start_timestamp") ds.start_timestamp = val;
      else if (key == "holidays") {
        std::istringstream iss(val);
        std::string tok;
        while (iss >> tok) ds.holiday_dates.push_back(tok);
      } else if (key == "context_columns") {
        std::istringstream iss(val);
        std::string tok;
        while (iss >> tok) context_names.push_back(tok);
      } else {
        throw FormatError("load_dataset: unknown meta key '" + key + "'");
      }
    }
  }
  const std::string flow_path = (fs::path(dir) / "flows.stds").string();
  {
    std::ifstream in(flow_path, std::ios::binary);
    if (!in) throw FormatError("load_dataset: missing " + flow_path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kMagic, 4) != 0)
      throw FormatError(flow_path + ": magic mismatch at byte offset 0");
    auto version = detail::read_pod<std::uint16_t>(in, flow_path);
    if (version != detail::kVersion)
      throw VersionError(flow_path + ": unknown version " + std::to_string(version));
    auto tau = detail::read_pod<std::uint32_t>(in, flow_path);
    auto n = detail::read_pod<std::uint32_t>(in, flow_path);
    auto d = detail::read_pod<std::uint32_t>(in, flow_path);
    ds.flows = FlowTensor(static_cast<int>(tau), static_cast<int>(n), static_cast<int>(d));
    in.read(reinterpret_cast<char*>(ds.flows.values.data()),
            static_cast<std::streamsize>(ds.flows.values.size() * sizeof(float)));
    if (in.gcount() !=
        static_cast<std::streamsize>(ds.flows.values.size() * sizeof(float)))
      throw FormatError(flow_path + ": truncated at byte offset " +
                        std::to_string(18 + static_cast<long>(in.gcount())));
  }
  if (!context_names.empty()) {
    std::ifstream in(fs::path(dir) / "context.csv");
    if (!in) throw FormatError("load_dataset: context.csv named in meta but missing");
    std::string line;
    std::getline(in, line);  // header
    for (const auto& name : context_names)
      ds.context_columns[name].reserve(ds.steps());
    int row = 0;
    while (std::getline(in, line) && row < ds.steps()) {
      std::istringstream iss(line);
      std::string cell;
      // header order matches the meta list; map iteration is name-sorted, so
      // resolve by header
      std::vector<int> cells;
      while (std::getline(iss, cell, ',')) cells.push_back(std::stoi(cell));
      if (cells.size() != context_names.size())
        throw FormatError("context.csv: wrong column count at row " + std::to_string(row));
      for (std::size_t c = 0; c < context_names.size(); ++c)
        ds.context_columns[context_names[c]].push_back(cells[c]);
      ++row;
    }
    if (row != ds.steps()) throw FormatError("context.csv: row count mismatch");
  }
  ds.finalize();
  return ds;
}

// ---- synthetic generation ----

struct SynthConfig {
  int grid_h = 8, grid_w = 8;
  int channels = 1;
  int steps = 1344;  // 28 days at 30-minute intervals
  int interval_minutes = 30;
  std::string start_timestamp = "2024-01-01 00:00";
  int function_types = 3;       // invariant per-node context
  double function_effect = 0.6; // spread of per-type magnitudes
  double site_spread = 1.2;     // fixed per-node amplitude spread (sensor identity)
  int regimes = 4;              // variant context
  std::vector<double> regime_multipliers;  // defaults derived if empty
  std::vector<std::string> regime_names;   // weather-like labels
  double shift = 0.5;           // TV distance between train/test regime marginals
  int regime_block_steps = 12;  // regime persistence (weather changes in blocks)
  double train_fraction = 0.8;  // boundary between train-time and test-time regimes
  double holiday_damping = 0.7; // weekend/holiday flow reduction (1 = off)
  double diffusion = 0.3;
  double noise_scale = 1.0;
  double regime_noise = 0.0;  // per-regime volatility growth (weather storminess)
  std::uint64_t seed = 0;

  void validate() const {
    if (grid_h < 1 || grid_w < 1 || channels < 1 || steps < 1 || regimes < 1 ||
        function_types < 1 || interval_minutes < 1)
      throw ConfigError("SynthConfig: all counts must be >= 1");
    if (shift < 0.0 || shift > 1.0) throw ConfigError("SynthConfig: shift in [0,1]");
    if (regime_block_steps < 1)
      throw ConfigError("SynthConfig: regime_block_steps must be >= 1");
    if (site_spread < 0.0 || site_spread > 2.0)
      throw ConfigError("SynthConfig: site_spread in [0,2]");
    if (regimes == 1 && shift > 0.0)
      throw ConfigError("SynthConfig: a single regime cannot carry a shift");
  }
};

struct SynthResult {
  Dataset dataset;
  std::vector<int> truth_regimes;   // evaluation-only ground truth
  std::vector<int> truth_functions; // per-node invariant type
};

// Instantiates the C -> X, C -> Y, X -> Y causal structure: a per-node
// diurnal curve scaled by the node's invariant function type, multiplied by
// the active variant regime, diffused one step over the adjacency with the
// same regime, plus nonnegative-clipped noise. Train-time and test-time
// regime marginals differ by exactly `shift` in total variation.
inline SynthResult generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int n = cfg.grid_h * cfg.grid_w;
  const int slots = 1440 / cfg.interval_minutes;
  SynthResult res;
  Dataset& ds = res.dataset;
  ds.flows = FlowTensor(cfg.steps, n, cfg.channels);
  ds.grid_h = cfg.grid_h;
  ds.grid_w = cfg.grid_w;
  ds.interval_minutes = cfg.interval_minutes;
  ds.start_timestamp = cfg.start_timestamp;
  ds.finalize();

  // invariant context: per-node function type
  std::uniform_int_distribution<int> type_pick(0, cfg.function_types - 1);
  res.truth_functions.resize(n);
  for (int i = 0; i < n; ++i) res.truth_functions[i] = type_pick(rng);

  // fixed per-node amplitude: sensors of the same type still differ, as real
  // sites do; this is invariant context, not regime-dependent
  std::uniform_real_distribution<double> amp_pick(1.0 - 0.5 * cfg.site_spread,
                                                  1.0 + 0.5 * cfg.site_spread);
  Eigen::VectorXd site_amp(n);
  for (int i = 0; i < n; ++i) site_amp(i) = amp_pick(rng);

  // variant context: regime sequence; train marginal p is uniform over the
  // first R-1 regimes, test marginal q = (1-shift) p + shift * delta_{R-1}
  res.truth_regimes.resize(cfg.steps, 0);
  if (cfg.regimes > 1) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> base_pick(0, cfg.regimes - 2);
    const int boundary = static_cast<int>(cfg.train_fraction * cfg.steps);
    int regime = 0;
    for (int t = 0; t < cfg.steps; ++t) {
      // weather persists for a block of steps; per-step marginals are
      // unchanged, so the train/test TV distance is still `shift`
      if (t % cfg.regime_block_steps == 0) {
        if (t >= boundary && u(rng) < cfg.shift) regime = cfg.regimes - 1;
        else regime = base_pick(rng);
      }
      res.truth_regimes[t] = regime;
    }
  }
  std::vector<double> mult = cfg.regime_multipliers;
  if (mult.empty()) {
    mult.resize(cfg.regimes);
    for (int r = 0; r < cfg.regimes; ++r)
      mult[r] = cfg.regimes == 1 ? 1.0 : 0.6 + 1.0 * r / (cfg.regimes - 1);
  }
  if (static_cast<int>(mult.size()) != cfg.regimes)
    throw ConfigError("SynthConfig: regime_multipliers size mismatch");

  // per-regime edge strength: spillover grows with the regime index, except
  // the last (held-out) regime, which pairs the highest demand level with
  // the weakest propagation -- a factor combination absent from training
  std::vector<double> edge(cfg.regimes, 1.0);
  if (cfg.regimes >= 3)
    for (int r = 0; r < cfg.regimes; ++r)
      edge[r] = r == cfg.regimes - 1 ? 0.5 : 0.5 + 1.0 * r / (cfg.regimes - 2);

  // per-type diurnal curves: mixture of a morning and an evening bump
  auto curve = [&](int type, int minutes) {
    double h = minutes / 60.0;
    double w = cfg.function_types == 1 ? 0.5
                                       : static_cast<double>(type) / (cfg.function_types - 1);
    double am = std::exp(-std::pow((h - 8.5) / 2.0, 2));
    double pm = std::exp(-std::pow((h - 18.0) / 2.5, 2));
    double scale = 1.0 + cfg.function_effect * (w - 0.5);
    return scale * (10.0 + 16.0 * ((1.0 - w) * am + w * pm));
  };

  Eigen::MatrixXd norm_adj = ds.adjacency.cast<double>();
  Eigen::VectorXd deg = norm_adj.rowwise().sum().cwiseMax(1.0);
  norm_adj = deg.cwiseInverse().asDiagonal() * norm_adj;

  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::VectorXd raw(n), obs_prev = Eigen::VectorXd::Zero(n);

  // burn the spillover recursion in over one noiseless day so that step 0
  // already sits on the recursion's periodic attractor (no rng draws here:
  // the noise stream for the emitted steps must not shift)
  const int spd = 1440 / cfg.interval_minutes;
  const int m0 = ds.step_minutes_of_day(0);
  for (int b = -spd; b < 0; ++b) {
    const int slot = ((m0 + b * cfg.interval_minutes) % 1440 + 1440) % 1440;
    for (int i = 0; i < n; ++i)
      raw(i) = site_amp(i) * curve(res.truth_functions[i], slot) *
               mult[res.truth_regimes[0]];
    Eigen::VectorXd diffused =
        cfg.diffusion * edge[res.truth_regimes[0]] * (norm_adj * obs_prev);
    obs_prev = (raw + diffused).cwiseMax(0.0);
  }

  for (int t = 0; t < cfg.steps; ++t) {
    const int r = res.truth_regimes[t];
    const double hfac = ds.holiday_mask[t] ? cfg.holiday_damping : 1.0;
    const int slot = ds.step_minutes_of_day(t);
    for (int i = 0; i < n; ++i)
      raw(i) = site_amp(i) * curve(res.truth_functions[i], slot) * mult[r] * hfac;
    // spatial spillover from the previous OBSERVED step, with the edge
    // strength set by the same regime that scales demand (the confound)
    Eigen::VectorXd diffused = cfg.diffusion * edge[r] * (norm_adj * obs_prev);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < cfg.channels; ++c) {
        double v = raw(i) * (1.0 + 0.1 * c) + diffused(i) +
                   cfg.noise_scale * (1.0 + cfg.regime_noise * r) * noise(rng);
        ds.flows.at(t, i, c) = static_cast<float>(std::max(0.0, v));
        if (c == 0) obs_prev(i) = ds.flows.at(t, i, 0);
      }
  }

  // observed weather-like column, usable for scenario filtering only
  ds.context_columns["weather"] = res.truth_regimes;
  (void)cfg.regime_names;
  return res;
}

inline void save_truth_contexts(const SynthResult& res, const std::string& dir) {
  std::ofstream out(std::filesystem::path(dir) / "truth_contexts.csv");
  out << "step,regime\n";
  for (std::size_t t = 0; t < res.truth_regimes.size(); ++t)
    out << t << "," << res.truth_regimes[t] << "\n";
}

// ---- windows, splits, scenarios ----

struct WindowSpec {
  int recent_steps = 8;
  int periodic_days = 3;
  int periodic_steps_per_day = 1;

  int total_window() const { return periodic_days * periodic_steps_per_day + recent_steps; }
};

struct Sample {
  std::vector<int> input_steps;  // chronological, all < target_step
  int target_step = 0;
  int temporal_label = 0;        // [0, 47]
  Eigen::MatrixXi load_label;    // [N, d], values in [0, 5]
  bool holiday = false;
  std::map<std::string, int> context;  // context column values at target
};

inline int earliest_target(const Dataset& ds, const WindowSpec& spec) {
  const int steps_per_day = 1440 / ds.interval_minutes;
  const int offset_lo = (spec.periodic_steps_per_day - 1) / 2;
  return std::max(spec.recent_steps,
                  spec.periodic_days * steps_per_day + offset_lo);
}

// One sample per admissible target step. Inputs are the periodic steps
// (centered on the target's time-of-day for each of the previous
// `periodic_days` days) followed by the recent steps, in order.
inline std::vector<Sample> make_windows(const Dataset& ds, const WindowSpec& spec,
                                        const graph_ctx::CapacityTable& cap) {
  if (spec.recent_steps < 1 || spec.periodic_days < 0 || spec.periodic_steps_per_day < 1)
    throw ConfigError("WindowSpec: invalid counts");
  const int steps_per_day = 1440 / ds.interval_minutes;
  const int first = earliest_target(ds, spec);
  if (first >= ds.steps())
    throw InsufficientHistoryError("make_windows: dataset too short for the window spec");
  const int offset_lo = (spec.periodic_steps_per_day - 1) / 2;
  std::vector<Sample> samples;
  samples.reserve(ds.steps() - first);
  for (int t = first; t < ds.steps(); ++t) {
    Sample s;
    s.target_step = t;
    for (int day = spec.periodic_days; day >= 1; --day) {
      int center = t - day * steps_per_day;
      for (int o = -offset_lo; o < spec.periodic_steps_per_day - offset_lo; ++o)
        s.input_steps.push_back(center + o);
    }
    for (int r = spec.recent_steps; r >= 1; --r) s.input_steps.push_back(t - r);
    s.holiday = ds.holiday_mask[t] != 0;
    s.temporal_label = graph_ctx::temporal_index(ds.step_minutes_of_day(t), s.holiday);
    Eigen::MatrixXf x(ds.regions(), ds.channels());
    for (int i = 0; i < ds.regions(); ++i)
      for (int c = 0; c < ds.channels(); ++c) x(i, c) = ds.flows.at(t, i, c);
    s.load_label = graph_ctx::load_level(x, cap);
    for (const auto& [name, col] : ds.context_columns) s.context[name] = col[t];
    samples.push_back(std::move(s));
  }
  return samples;
}

struct SplitSizes {
  int train = 0, val = 0, test = 0;
};

// Largest-remainder apportionment; contiguous chronological segments.
inline SplitSizes split_sizes(int n, int r_train = 7, int r_val = 1, int r_test = 2) {
  const int total = r_train + r_val + r_test;
  double exact[3] = {double(n) * r_train / total, double(n) * r_val / total,
                     double(n) * r_test / total};
  int sizes[3];
  double frac[3];
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = static_cast<int>(std::floor(exact[i]));
    frac[i] = exact[i] - sizes[i];
    assigned += sizes[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (frac[i] > frac[best]) best = i;
    ++sizes[best];
    frac[best] = -1.0;
    ++assigned;
  }
  return {sizes[0], sizes[1], sizes[2]};
}

struct ChronoSplit {
  std::vector<Sample> train, val, test;
};

inline ChronoSplit chrono_split(const std::vector<Sample>& samples, int r_train = 7,
                                int r_val = 1, int r_test = 2) {
  if (samples.empty()) throw ConfigError("chrono_split: empty sample sequence");
  SplitSizes s = split_sizes(static_cast<int>(samples.size()), r_train, r_val, r_test);
  ChronoSplit out;
  out.train.assign(samples.begin(), samples.begin() + s.train);
  out.val.assign(samples.begin() + s.train, samples.begin() + s.train + s.val);
  out.test.assign(samples.begin() + s.train + s.val, samples.end());
  return out;
}

struct Scenario {
  std::string kind;
  std::vector<std::size_t> indices;             // selected sample positions
  std::optional<std::vector<std::uint8_t>> node_mask;  // cluster scenarios only
};

// kind: workday | holiday | cluster:<id> | context:<name>=<value>
inline Scenario ood_filter(const std::vector<Sample>& samples, const std::string& kind,
                           const std::vector<int>* cluster_labels = nullptr) {
  Scenario sc;
  sc.kind = kind;
  if (kind == "workday" || kind == "holiday") {
    const bool want = kind == "holiday";
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].holiday == want) sc.indices.push_back(i);
    return sc;
  }
  if (kind.rfind("cluster:", 0) == 0) {
    if (!cluster_labels)
      throw UnknownScenarioError("ood_filter: cluster scenario without cluster labels");
    int id = std::stoi(kind.substr(8));
    std::vector<std::uint8_t> mask(cluster_labels->size(), 0);
    int members = 0;
    for (std::size_t i = 0; i < cluster_labels->size(); ++i)
      if ((*cluster_labels)[i] == id) { mask[i] = 1; ++members; }
    if (members == 0)
      throw UnknownScenarioError("ood_filter: no regions in cluster " + std::to_string(id));
    for (std::size_t i = 0; i < samples.size(); ++i) sc.indices.push_back(i);
    sc.node_mask = std::move(mask);
    return sc;
  }
  if (kind.rfind("context:", 0) == 0) {
    auto eq = kind.find('=');
    if (eq == std::string::npos)
      throw UnknownScenarioError("ood_filter: context scenario needs name=value");
    std::string name = kind.substr(8, eq - 8);
    int value = std::stoi(kind.substr(eq + 1));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      auto it = samples[i].context.find(name);
      if (it == samples[i].context.end())
        throw UnknownScenarioError("ood_filter: unknown context column '" + name + "'");
      if (it->second == value) sc.indices.push_back(i);
    }
    return sc;
  }
  throw UnknownScenarioError("ood_filter: unknown scenario kind '" + kind + "'");
}

}  // namespace steve::data
