// Command-line entry point: synthetic data generation, training,
// evaluation, ablations, backdoor-equivalence verification, and plot
// emission.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "steve/config.hpp"
#include "steve/dca.hpp"
#include "steve/pipeline.hpp"
#include "steve/svg.hpp"
#include "steve/train_eval.hpp"

namespace fs = std::filesystem;
using namespace steve;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  long long seed = -1;
  std::string precision;
};

void add_common(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--config", args.config_path, "Config file (flat dotted keys)");
  sub->add_option("--out", args.out_dir, "Output directory");
  sub->add_option("--set", args.sets, "Override, key=value (repeatable)");
  sub->add_option("--seed", args.seed, "Seed override");
  sub->add_option("--precision", args.precision, "float32 | float64")
      ->check(CLI::IsMember({"float32", "float64"}));
}

std::string resolve_out(const CommonArgs& args) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (const char* env = std::getenv("STEVE_OUT_DIR")) return env;
  return "steve_out";
}

std::pair<cfg::FullConfig, cfg::Options> resolve_config(const CommonArgs& args) {
  cfg::Options opts;
  if (!args.config_path.empty()) opts = cfg::parse_config_file(args.config_path);
  for (const auto& s : args.sets) cfg::apply_override(opts, s);
  if (args.seed >= 0) {
    opts["synth.seed"] = std::to_string(args.seed);
    opts["train.seed"] = std::to_string(args.seed);
  }
  if (!args.precision.empty()) opts["train.precision"] = args.precision;
  return {cfg::make_config(opts), opts};
}

void write_snapshot(const cfg::Options& opts, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "config.snapshot");
  out << cfg::snapshot(opts);
}

data::Dataset load_or_generate(const cfg::FullConfig& c, const std::string& out) {
  fs::path data_dir = fs::path(out) / "data";
  if (fs::exists(data_dir / "flows.stds")) return data::load_dataset(data_dir.string());
  return data::generate_synthetic(c.synth).dataset;
}

std::vector<int> scenario_clusters(const cfg::FullConfig& c,
                                   const pipeline::Prepared& p) {
  bool needs = false;
  for (const auto& s : c.scenarios)
    if (s.rfind("cluster:", 0) == 0) needs = true;
  if (!needs) return {};
  std::vector<int> ks;
  for (int k = c.k_min; k <= c.k_max; ++k) ks.push_back(k);
  return graph_ctx::cluster_regions(p.ds.flows.head(p.train_steps), ks,
                                    c.synth.seed)
      .labels;
}

template <class S>
void write_results(const cfg::FullConfig& c, const pipeline::Prepared& p,
                   const model::SteveModel<S>& m, const std::string& path) {
  std::vector<int> labels = scenario_clusters(c, p);
  std::ofstream out(path);
  out << "scenario,MAE,MAPE\n";
  for (const auto& kind : c.scenarios) {
    data::Scenario sc =
        data::ood_filter(p.split.test, kind, labels.empty() ? nullptr : &labels);
    if (sc.indices.empty()) continue;
    auto metr = train_eval::evaluate(m, p.ds, p.split.test, sc, c.train.mape_floor);
    out << kind << "," << metr.mae << "," << metr.mape << "\n";
  }
}

template <class S>
int run_train(const cfg::FullConfig& c, const cfg::Options& opts,
              const std::string& out) {
  pipeline::Prepared p = pipeline::prepare(load_or_generate(c, out), c.window);
  model::ModelConfig mc = pipeline::model_config(c, p);
  model::SteveModel<S> m;
  m.init(mc, c.train.seed);
  std::string run_dir = (fs::path(out) / "run").string();
  train_eval::train(m, p.ds, p.split, c.train, model::Variant::parse("full"), run_dir);
  write_snapshot(opts, run_dir);
  return 0;
}

template <class S>
int run_eval(const cfg::FullConfig& c, const std::string& out) {
  pipeline::Prepared p = pipeline::prepare(load_or_generate(c, out), c.window);
  model::ModelConfig mc = pipeline::model_config(c, p);
  model::SteveModel<S> m;
  m.init(mc, c.train.seed);
  auto named = m.all_params();
  std::string ckpt = (fs::path(out) / "run" / "checkpoint.best").string();
  if (!fs::exists(ckpt)) throw ConfigError("eval: checkpoint not found: " + ckpt);
  train_eval::load_checkpoint(named, ckpt);
  write_results(c, p, m, (fs::path(out) / "results.csv").string());
  return 0;
}

template <class S>
int run_ablate(const cfg::FullConfig& c, const cfg::Options& opts,
               const std::string& out, int parallel) {
  pipeline::Prepared p = pipeline::prepare(load_or_generate(c, out), c.window);
  model::ModelConfig mc = pipeline::model_config(c, p);
  std::vector<int> labels = scenario_clusters(c, p);
  static const char* kVariants[] = {"full",  "wo_cd", "wo_gr", "wo_idp",
                                    "wo_sl", "wo_ti", "wo_tl"};
  auto one = [&](const char* name) {
    model::SteveModel<S> m;
    m.init(mc, c.train.seed);
    std::string run_dir = (fs::path(out) / "run" / name).string();
    train_eval::train(m, p.ds, p.split, c.train, model::Variant::parse(name), run_dir);
    std::vector<train_eval::AblationRow> rows;
    for (const auto& kind : c.scenarios) {
      data::Scenario sc =
          data::ood_filter(p.split.test, kind, labels.empty() ? nullptr : &labels);
      if (sc.indices.empty()) continue;
      rows.push_back({name, kind,
                      train_eval::evaluate(m, p.ds, p.split.test, sc,
                                           c.train.mape_floor)});
    }
    return rows;
  };
  std::vector<train_eval::AblationRow> table;
  if (parallel > 1) {
    std::vector<std::future<std::vector<train_eval::AblationRow>>> futs;
    for (const char* name : kVariants)
      futs.push_back(std::async(std::launch::async, one, name));
    for (auto& f : futs) {
      auto rows = f.get();
      table.insert(table.end(), rows.begin(), rows.end());
    }
  } else {
    for (const char* name : kVariants) {
      auto rows = one(name);
      table.insert(table.end(), rows.begin(), rows.end());
    }
  }
  fs::create_directories(out);
  std::ofstream csv(fs::path(out) / "ablation.csv");
  csv << "variant,scenario,MAE,MAPE,reference\n";
  for (const auto& r : table)
    csv << r.variant << "," << r.scenario << "," << r.metrics.mae << ","
        << r.metrics.mape << "," << (r.variant == "full" ? 1 : 0) << "\n";
  write_snapshot(opts, out);
  return 0;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("plot: cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int run_plot(const std::string& out) {
  fs::path run = fs::path(out) / "run";
  fs::path plots = fs::path(out) / "plots";
  fs::create_directories(plots);
  // loss curves
  auto metrics = read_csv((run / "metrics.csv").string());
  std::vector<svg::Series> curves(5);
  const char* names[5] = {"L_P", "L_S", "L_D", "L_O", "val_MAE"};
  for (int s = 0; s < 5; ++s) curves[s].label = names[s];
  for (std::size_t r = 1; r < metrics.size(); ++r)
    for (int s = 0; s < 5; ++s) curves[s].values.push_back(std::stod(metrics[r][s + 1]));
  svg::write_line_chart((plots / "loss_curves.svg").string(), "Training losses", curves);
  // per-scenario bars
  fs::path results = fs::path(out) / "results.csv";
  if (fs::exists(results)) {
    auto rows = read_csv(results.string());
    std::vector<svg::Bar> bars;
    for (std::size_t r = 1; r < rows.size(); ++r)
      bars.push_back({rows[r][0], std::stod(rows[r][1])});
    svg::write_bar_chart((plots / "scenario_mae.svg").string(), "Test MAE by scenario",
                         bars);
  }
  // prior heatmap: mean alpha1 in workday/holiday x hour cells
  auto alphas = read_csv((run / "alpha_log.csv").string());
  std::vector<std::vector<double>> sum(2, std::vector<double>(24, 0.0));
  std::vector<std::vector<int>> count(2, std::vector<int>(24, 0));
  for (std::size_t r = 1; r < alphas.size(); ++r) {
    int holiday = std::stoi(alphas[r][1]);
    int hour = std::stoi(alphas[r][2]) % 24;
    sum[holiday][hour] += std::stod(alphas[r][3]);
    ++count[holiday][hour];
  }
  std::vector<std::vector<double>> cells(2, std::vector<double>(24, 0.5));
  for (int r = 0; r < 2; ++r)
    for (int h = 0; h < 24; ++h)
      if (count[r][h]) cells[r][h] = sum[r][h] / count[r][h];
  std::vector<std::string> hours;
  for (int h = 0; h < 24; ++h) hours.push_back(std::to_string(h));
  svg::write_heatmap((plots / "prior_heatmap.svg").string(),
                     "Mean invariant-branch prior by hour", {"workday", "holiday"},
                     hours, cells);
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Spatio-temporal OOD traffic forecasting toolkit"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, ablate_args, plot_args;
  int parallel = 1;
  long long dca_n = 100, dca_seed = 0;
  std::string scm_file;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen, gen_args);
  CLI::App* train = app.add_subcommand("train", "Train the full model");
  add_common(train, train_args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate the best checkpoint");
  add_common(eval_cmd, eval_args);
  CLI::App* ablate = app.add_subcommand("ablate", "Run all ablation variants");
  add_common(ablate, ablate_args);
  ablate->add_option("--parallel", parallel, "Concurrent variant workers");
  CLI::App* verify = app.add_subcommand("verify-dca", "Verify backdoor equivalence");
  verify->add_option("--n", dca_n, "Number of random structural models");
  verify->add_option("--seed", dca_seed, "Base seed");
  verify->add_option("--scm", scm_file, "Structural model definition file");
  CLI::App* plot = app.add_subcommand("plot", "Emit SVG diagnostics from a run");
  add_common(plot, plot_args);

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    auto [c, opts] = resolve_config(gen_args);
    std::string out = resolve_out(gen_args);
    data::SynthResult res = data::generate_synthetic(c.synth);
    std::string data_dir = (fs::path(out) / "data").string();
    data::save_dataset(res.dataset, data_dir);
    data::save_truth_contexts(res, data_dir);
    write_snapshot(opts, out);
    std::cout << "wrote " << data_dir << "\n";
    return 0;
  }
  if (train->parsed()) {
    auto [c, opts] = resolve_config(train_args);
    std::string out = resolve_out(train_args);
    return c.precision == "float32" ? run_train<float>(c, opts, out)
                                    : run_train<double>(c, opts, out);
  }
  if (eval_cmd->parsed()) {
    auto [c, opts] = resolve_config(eval_args);
    std::string out = resolve_out(eval_args);
    return c.precision == "float32" ? run_eval<float>(c, out) : run_eval<double>(c, out);
  }
  if (ablate->parsed()) {
    auto [c, opts] = resolve_config(ablate_args);
    std::string out = resolve_out(ablate_args);
    return c.precision == "float32" ? run_ablate<float>(c, opts, out, parallel)
                                    : run_ablate<double>(c, opts, out, parallel);
  }
  if (verify->parsed()) {
    double max_dev = 0.0;
    if (!scm_file.empty()) {
      dca::ContextPartition part;
      dca::DiscreteSCM scm = dca::load_scm(scm_file, &part);
      for (int x = 0; x < scm.nx(); ++x) {
        auto full = dca::backdoor_adjust(scm, x);
        auto two = dca::dca_adjust(scm, part, x);
        for (int y = 0; y < scm.ny(); ++y)
          max_dev = std::max(max_dev, std::abs(full[y] - two[y]));
      }
    } else {
      std::mt19937_64 meta(static_cast<std::uint64_t>(dca_seed));
      for (long long i = 0; i < dca_n; ++i) {
        std::uniform_int_distribution<int> pick_k(2, 8), pick_n(1, 5);
        int k = pick_k(meta), nx = pick_n(meta), ny = pick_n(meta);
        dca::DiscreteSCM scm =
            dca::random_scm(static_cast<std::uint64_t>(dca_seed) * 7919ULL + i, k, nx, ny);
        std::uniform_int_distribution<int> pick_split(1, k - 1);
        int split_at = pick_split(meta);
        dca::ContextPartition part;
        for (int c = 0; c < k; ++c)
          (c < split_at ? part.invariant_ids : part.variant_ids).insert(c);
        for (int x = 0; x < nx; ++x) {
          auto full = dca::backdoor_adjust(scm, x);
          auto two = dca::dca_adjust(scm, part, x);
          for (int y = 0; y < ny; ++y)
            max_dev = std::max(max_dev, std::abs(full[y] - two[y]));
        }
      }
    }
    std::cout << "max_dev=" << max_dev << "\n";
    return max_dev <= 1e-12 ? 0 : 1;
  }
  if (plot->parsed()) return run_plot(resolve_out(plot_args));
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "ERROR:config:" << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "ERROR:format:" << e.what() << "\n";
    return 1;
  } catch (const VersionError& e) {
    std::cerr << "ERROR:version:" << e.what() << "\n";
    return 1;
  } catch (const UnknownScenarioError& e) {
    std::cerr << "ERROR:scenario:" << e.what() << "\n";
    return 1;
  } catch (const SteveError& e) {
    std::cerr << "ERROR:runtime:" << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ERROR:runtime:" << e.what() << "\n";
    return 2;
  }
}
