#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "steve/pipeline.hpp"
#include "steve/train_eval.hpp"

using namespace steve;
namespace fs = std::filesystem;

namespace {

// Small end-to-end fixture shared by the training tests.
struct Fixture {
  pipeline::Prepared prepared;
  model::ModelConfig mc;

  explicit Fixture(std::uint64_t seed = 3) {
    data::SynthConfig sc;
    sc.grid_h = sc.grid_w = 2;
    sc.steps = 48 * 5;
    sc.seed = seed;
    data::WindowSpec ws;
    ws.periodic_days = 2;
    prepared = pipeline::prepare(data::generate_synthetic(sc).dataset, ws);
    cfg::FullConfig fc;
    fc.tsrl.hidden_dim = 6;
    fc.tsrl.temporal_kernel = 2;
    fc.tsrl.sandwich_layers = 1;
    fc.window = ws;
    mc = pipeline::model_config(fc, prepared);
  }
};

train_eval::TrainConfig quick_config(std::uint64_t seed = 5) {
  train_eval::TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 16;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST(Dwa, UniformOnColdStart) {
  auto w = train_eval::dwa_weights({1.0, 2.0, 3.0}, {}, 2.0);
  EXPECT_EQ(w, (std::vector<double>{1.0, 1.0, 1.0}));
}

TEST(Dwa, EqualImprovementRatesGiveUniformWeights) {
  auto w = train_eval::dwa_weights({0.5, 1.0, 2.0}, {1.0, 2.0, 4.0}, 2.0);
  for (double v : w) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Dwa, HandEvaluatedSoftmaxOracle) {
  // ratios (1, 2, 1), temperature 2 -> proportional to (e^0.5, e^1, e^0.5)
  auto w = train_eval::dwa_weights({1.0, 2.0, 1.0}, {1.0, 1.0, 1.0}, 2.0);
  double z = 2 * std::exp(0.5) + std::exp(1.0);
  EXPECT_NEAR(w[0], 3 * std::exp(0.5) / z, 1e-12);
  EXPECT_NEAR(w[1], 3 * std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(w[2], w[0], 1e-12);
}

TEST(Dwa, SumsToTaskCountAndStaysPositive) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> prev(6), prev2(6);
    for (int i = 0; i < 6; ++i) {
      prev[i] = u(rng);
      prev2[i] = u(rng);
    }
    auto w = train_eval::dwa_weights(prev, prev2, 2.0);
    double sum = 0;
    for (double v : w) {
      EXPECT_GT(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 6.0, 1e-9);
  }
}

TEST(Dwa, ZeroDenominatorFallsBackToUniform) {
  auto w = train_eval::dwa_weights({1.0, 2.0}, {0.0, 3.0}, 2.0);
  EXPECT_EQ(w, (std::vector<double>{1.0, 1.0}));
}

TEST(Metrics, PerfectPredictionsAreZero) {
  train_eval::MetricAccumulator acc;
  acc.add(10.0, 10.0, 1.0);
  acc.add(3.5, 3.5, 1.0);
  auto m = acc.finish();
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.mape, 0.0);
}

TEST(Metrics, SingleEntryHandOracle) {
  train_eval::MetricAccumulator acc;
  acc.add(10.0, 8.0, 1.0);
  auto m = acc.finish();
  EXPECT_NEAR(m.mae, 2.0, 1e-15);
  EXPECT_NEAR(m.mape, 20.0, 1e-15);
}

TEST(Metrics, FloorExcludesSmallTargetsFromMape) {
  train_eval::MetricAccumulator acc;
  acc.add(0.5, 2.0, 1.0);   // below floor: counted in MAE only
  acc.add(10.0, 8.0, 1.0);
  auto m = acc.finish();
  EXPECT_NEAR(m.mae, (1.5 + 2.0) / 2.0, 1e-15);
  EXPECT_NEAR(m.mape, 20.0, 1e-15);
}

TEST(TrainEval, EvaluateMatchesBruteForceOracle) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 9);
  const auto& samples = fx.prepared.split.test;
  data::Scenario sc;
  for (std::size_t i = 0; i < samples.size(); ++i) sc.indices.push_back(i);
  sc.node_mask = std::vector<std::uint8_t>{1, 0, 1, 0};
  const double floor = 1.0;
  auto metr = train_eval::evaluate(m, fx.prepared.ds, samples, sc, floor);

  // brute-force loop with identical masking, one sample at a time
  nn::Mat<double> norm =
      tsrl::normalized_adjacency<double>(fx.prepared.ds.adjacency.cast<double>().eval());
  train_eval::MetricAccumulator acc;
  for (std::size_t i : sc.indices) {
    auto batch = train_eval::make_batch<double>(fx.prepared.ds, samples, {i},
                                                m.cfg.flow_scale);
    auto pred = model::predict(m, model::encode_pair(m, batch.inputs, norm));
    for (int node = 0; node < 4; ++node) {
      if (!(*sc.node_mask)[node]) continue;
      acc.add(batch.target(node, 0), pred.y_hat->value(node, 0), floor);
    }
  }
  auto oracle = acc.finish();
  EXPECT_NEAR(metr.mae, oracle.mae, 1e-9);
  EXPECT_NEAR(metr.mape, oracle.mape, 1e-9);
}

TEST(TrainEval, EvaluateRejectsEmptyScenario) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 9);
  data::Scenario sc;
  EXPECT_THROW(train_eval::evaluate(m, fx.prepared.ds, fx.prepared.split.test, sc),
               EmptyScenarioError);
}

TEST(TrainEval, MakeBatchNormalizesInputsNotTargets) {
  Fixture fx;
  auto batch = train_eval::make_batch<double>(fx.prepared.ds, fx.prepared.samples,
                                              {0}, fx.prepared.flow_scale);
  const data::Sample& s = fx.prepared.samples[0];
  EXPECT_NEAR(batch.inputs[0]->value(2, 0),
              fx.prepared.ds.flows.at(s.input_steps[0], 2, 0) / fx.prepared.flow_scale,
              1e-12);
  EXPECT_NEAR(batch.target(2, 0), fx.prepared.ds.flows.at(s.target_step, 2, 0), 1e-12);
  EXPECT_EQ(batch.labels.node_ids, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(batch.labels.temporal, (std::vector<int>{s.temporal_label}));
}

TEST(TrainEval, TrainProducesPerEpochRecords) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 9);
  auto rec = train_eval::train(m, fx.prepared.ds, fx.prepared.split, quick_config(),
                               model::Variant::parse("full"));
  ASSERT_EQ(rec.epochs.size(), 2u);
  for (const auto& e : rec.epochs) {
    EXPECT_TRUE(std::isfinite(e.l_o));
    EXPECT_NEAR(e.l_o, e.l_p + e.l_s + e.l_d, 1e-9);
  }
  EXPECT_GE(rec.best_epoch, 0);
  EXPECT_GT(rec.wall_time_sec, 0.0);
}

TEST(TrainEval, SameSeedGivesIdenticalTrajectories) {
  Fixture fx;
  auto run = [&] {
    model::SteveModel<double> m;
    m.init(fx.mc, 9);
    return train_eval::train(m, fx.prepared.ds, fx.prepared.split, quick_config(),
                             model::Variant::parse("full"));
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    EXPECT_NEAR(a.epochs[e].l_o, b.epochs[e].l_o, 1e-6);
    EXPECT_NEAR(a.epochs[e].val_mae, b.epochs[e].val_mae, 1e-6);
  }
}

TEST(TrainEval, EarlyStoppedCheckpointIsTheBestSeen) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 9);
  auto tc = quick_config();
  tc.max_epochs = 6;
  tc.patience = 2;
  auto rec = train_eval::train(m, fx.prepared.ds, fx.prepared.split, tc,
                               model::Variant::parse("full"));
  double min_val = rec.epochs[0].val_mae;
  for (const auto& e : rec.epochs) min_val = std::min(min_val, e.val_mae);
  EXPECT_EQ(rec.best_val_mae, min_val);
  // restored parameters reproduce the recorded best validation MAE
  data::Scenario all;
  for (std::size_t i = 0; i < fx.prepared.split.val.size(); ++i) all.indices.push_back(i);
  auto metr = train_eval::evaluate(m, fx.prepared.ds, fx.prepared.split.val, all,
                                   tc.mape_floor);
  EXPECT_NEAR(metr.mae, rec.best_val_mae, 1e-9);
}

TEST(TrainEval, DivergentRunThrows) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 9);
  auto tc = quick_config();
  tc.learning_rate = 1e154;
  tc.max_epochs = 4;
  EXPECT_THROW(train_eval::train(m, fx.prepared.ds, fx.prepared.split, tc,
                                 model::Variant::parse("full")),
               DivergenceError);
}

TEST(TrainEval, RunDirectoryArtifacts) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 9);
  std::string dir = testing::TempDir() + "/steve_run";
  fs::remove_all(dir);
  train_eval::train(m, fx.prepared.ds, fx.prepared.split, quick_config(),
                    model::Variant::parse("full"), dir);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "metrics.csv"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "checkpoint.best"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "alpha_log.csv"));
  fs::remove_all(dir);
}

TEST(TrainEval, CheckpointRoundTrip) {
  Fixture fx;
  model::SteveModel<double> a, b;
  a.init(fx.mc, 1);
  b.init(fx.mc, 2);
  std::string path = testing::TempDir() + "/ckpt.bin";
  auto pa = a.all_params();
  auto pb = b.all_params();
  train_eval::save_checkpoint(pa, path);
  train_eval::load_checkpoint(pb, path);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    Eigen::MatrixXf lhs = pa[i].var->value.cast<float>();
    Eigen::MatrixXf rhs = pb[i].var->value.cast<float>();
    EXPECT_TRUE((lhs.array() == rhs.array()).all()) << pa[i].name;
  }
  std::remove(path.c_str());
}

TEST(TrainEval, CheckpointErrors) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 1);
  auto params = m.all_params();
  EXPECT_THROW(train_eval::load_checkpoint(params, "/nonexistent/ckpt"), FormatError);
  std::string path = testing::TempDir() + "/ckpt_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  EXPECT_THROW(train_eval::load_checkpoint(params, path), FormatError);
  std::remove(path.c_str());
}

TEST(TrainEval, MiEstimateIsFinite) {
  Fixture fx;
  model::SteveModel<double> m;
  m.init(fx.mc, 9);
  double mi = train_eval::estimate_mi(m, fx.prepared.ds, fx.prepared.split.val, 20);
  EXPECT_TRUE(std::isfinite(mi));
  EXPECT_THROW(train_eval::estimate_mi(m, fx.prepared.ds, {}, 5), EmptyScenarioError);
}

TEST(TrainEval, Float32PathRuns) {
  Fixture fx;
  model::SteveModel<float> m;
  m.init(fx.mc, 9);
  auto tc = quick_config();
  tc.max_epochs = 1;
  auto rec = train_eval::train(m, fx.prepared.ds, fx.prepared.split, tc,
                               model::Variant::parse("wo_idp"));
  EXPECT_EQ(rec.epochs.size(), 1u);
  EXPECT_TRUE(std::isfinite(rec.epochs[0].l_o));
}
