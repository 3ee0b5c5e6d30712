#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "xtime/error.hpp"
#include "xtime/eval.hpp"
#include "xtime/rng.hpp"

namespace xtime {
namespace {

const RarityThresholds kTh{1.0, 2.0, 3.0};

PipelineConfig tiny_config() {
  PipelineConfig c;
  c.history = 32;
  c.horizon = 8;
  c.epochs = 2;
  c.router_epochs = 2;
  c.router_hidden = 8;
  c.synth.n = 3000;
  c.synth.seed = 3;
  c.seed = 3;
  return c;
}

TEST(Evaluate, PerfectPredictions) {
  const std::vector<double> t{0.0, 1.5, 2.5, 4.0};
  const auto r = evaluate(t, t, kTh);
  EXPECT_EQ(r.overall.mse, 0.0);
  EXPECT_EQ(r.overall.mae, 0.0);
  EXPECT_EQ(r.overall.count, 4u);
  for (auto l : kAllLevels) {
    ASSERT_TRUE(r.level(l));
    EXPECT_EQ(r.level(l)->mse, 0.0);
  }
}

TEST(Evaluate, SingleExtremePoint) {
  const std::vector<double> truth{5.0}, pred{5.3};
  const auto r = evaluate(pred, truth, kTh);
  const auto& ex = r.level(RarityLevel::ExtremeRare);
  ASSERT_TRUE(ex);
  EXPECT_NEAR(ex->mse, 0.09, 1e-12);
  EXPECT_NEAR(ex->mae, 0.3, 1e-12);
  EXPECT_EQ(ex->count, 1u);
  EXPECT_FALSE(r.level(RarityLevel::Moderate));
  EXPECT_FALSE(r.level(RarityLevel::Normal));
}

TEST(Evaluate, MixedLevels) {
  const std::vector<double> truth{0.0, 5.0}, pred{1.0, 7.0};
  const auto r = evaluate(pred, truth, kTh);
  EXPECT_DOUBLE_EQ(r.overall.mse, 2.5);
  EXPECT_DOUBLE_EQ(r.level(RarityLevel::ExtremeRare)->mse, 4.0);
  EXPECT_DOUBLE_EQ(r.level(RarityLevel::Normal)->mse, 1.0);
}

TEST(Evaluate, ShapeMismatch) {
  EXPECT_THROW(evaluate(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, kTh), Error);
}

TEST(Evaluate, SseDecomposesAndCountsAddUp) {
  Rng rng(1);
  std::vector<double> truth(1000), pred(1000);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = 1.5 * rng.normal() + 1.0;
    pred[i] = truth[i] + rng.normal();
  }
  const auto r = evaluate(pred, truth, kTh);
  double sse = 0.0;
  std::size_t count = 0;
  for (const auto& l : r.levels) {
    if (!l) continue;
    sse += l->sse;
    count += l->count;
    EXPECT_GE(l->mse, 0.0);
    EXPECT_GE(l->mae, 0.0);
  }
  EXPECT_NEAR(sse, r.overall.sse, 1e-9 * r.overall.sse);
  EXPECT_EQ(count, r.overall.count);
}

TEST(Evaluate, LabelsDependOnTruthOnly) {
  Rng rng(2);
  std::vector<double> truth(500), pred(500);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = 2.0 * rng.normal() + 1.0;
  const auto base = evaluate(truth, truth, kTh);
  for (int trial = 0; trial < 10; ++trial) {
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = truth[i] + 10.0 * rng.normal();
    const auto r = evaluate(pred, truth, kTh);
    for (std::size_t l = 0; l < kRarityLevels; ++l) EXPECT_EQ(r.levels[l]->count, base.levels[l]->count);
  }
}

TEST(Evaluate, ErrorScaling) {
  Rng rng(3);
  std::vector<double> truth(300), pred(300), scaled(300);
  const double s = 2.7;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth[i] = 2.0 * rng.normal();
    pred[i] = truth[i] + rng.normal();
    scaled[i] = truth[i] + s * (pred[i] - truth[i]);
  }
  const auto a = evaluate(pred, truth, kTh);
  const auto b = evaluate(scaled, truth, kTh);
  EXPECT_NEAR(b.overall.mse, s * s * a.overall.mse, 1e-9 * b.overall.mse);
  EXPECT_NEAR(b.overall.mae, s * a.overall.mae, 1e-9 * b.overall.mae);
  for (std::size_t l = 0; l < kRarityLevels; ++l) {
    if (!a.levels[l]) continue;
    EXPECT_NEAR(b.levels[l]->mse, s * s * a.levels[l]->mse, 1e-9 * b.levels[l]->mse);
  }
}

TEST(MetricsCsv, AbsentLevelsAreEmpty) {
  const auto r = evaluate(std::vector<double>{0.5}, std::vector<double>{0.0}, kTh);
  std::ostringstream os;
  write_metrics_csv(os, r);
  EXPECT_EQ(os.str(), "level,mse,mae,count\noverall,0.25,0.5,1\nmoderate,,,0\nvery,,,0\nextreme,,,0\n");
}

TEST(Exports, RoutingCsv) {
  WindowPredictions p;
  p.horizon = 1;
  p.alphas = {{0.5, 0.25, 0.25, 0.0}, {0.0, 0.0, 0.0, 1.0}};
  p.chosen = {{0, 1}, {3}};
  std::vector<WindowSample> w(2);
  w[1].window_level = RarityLevel::ExtremeRare;
  std::ostringstream os;
  write_routing_csv(os, p, w);
  EXPECT_EQ(os.str(),
            "window,level,alpha_0,alpha_1,alpha_2,alpha_3,chosen\n"
            "0,normal,0.5,0.25,0.25,0,0;1\n"
            "1,extreme,0,0,0,1,3\n");
  EXPECT_THROW(write_routing_csv(os, p, std::vector<WindowSample>(1)), Error);
}

TEST(Exports, ForecastsCsv) {
  std::ostringstream os;
  write_forecasts_csv(os, std::vector<double>{1.0, 2.0, 3.5, 4.0}, 2, std::vector<std::size_t>{0, 10});
  EXPECT_EQ(os.str(), "window,start,step_1,step_2\n0,0,1,2\n1,10,3.5,4\n");
  EXPECT_THROW(write_forecasts_csv(os, std::vector<double>{1.0}, 2, std::vector<std::size_t>{0}), Error);
}

TEST(Exports, TrainingCurvesCsv) {
  TrainedSystem s;
  s.experts.resize(1);
  s.expert_curves = {{EpochStats{0, 1.0, 0.0, 1.0, std::nullopt}, EpochStats{1, 0.5, 0.25, 0.625, 0.75}}};
  s.router_curve = {RouterEpoch{0, 1.25, 0.5}};
  std::ostringstream os;
  write_training_curves_csv(os, s);
  EXPECT_EQ(os.str(),
            "component,epoch,total,rare,kd,validation,accuracy\n"
            "normal,0,1,1,0,,\n"
            "normal,1,0.625,0.5,0.25,0.75,\n"
            "router,0,1.25,,,,0.5\n");
}

TEST(Ablation, TogglesAndPresets) {
  PipelineConfig c;
  const auto none = apply_toggles(c, {false, false, false});
  EXPECT_EQ(none.bands, 1u);
  EXPECT_FALSE(none.rare_penalty);
  EXPECT_EQ(none.beta, 0.0);
  const auto full = apply_toggles(c, {true, true, true});
  EXPECT_EQ(full.bands, c.bands);
  EXPECT_TRUE(full.rare_penalty);
  EXPECT_EQ(full.beta, c.beta);

  std::vector<std::string> names;
  for (const auto& t : table_x_preset()) names.push_back(describe(t));
  EXPECT_EQ(names, (std::vector<std::string>{"none", "WT", "WT+KD", "WT+RP", "WT+RP+KD"}));
  std::set<std::string> all;
  for (const auto& t : all_toggle_combinations()) all.insert(describe(t));
  EXPECT_EQ(all.size(), 8u);
}

class SweepTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new PipelineConfig(tiny_config());
    data_ = new PreparedData(prepare_data(load_source(*config_), *config_));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete config_;
  }
  static PipelineConfig* config_;
  static PreparedData* data_;
};
PipelineConfig* SweepTest::config_ = nullptr;
PreparedData* SweepTest::data_ = nullptr;

TEST_F(SweepTest, BetaSweepShapeAndDeterminism) {
  const std::vector<double> betas{0.0, 1.0};
  const auto a = sweep_beta(*data_, betas, *config_);
  ASSERT_EQ(a.size(), betas.size() * 4);
  std::ostringstream sa, sb;
  write_sweep_csv(sa, a);
  write_sweep_csv(sb, sweep_beta(*data_, betas, *config_));
  EXPECT_EQ(sa.str(), sb.str());
  for (const auto& row : a) EXPECT_EQ(row.status, "ok");
}

TEST_F(SweepTest, SingleBetaEqualsPlainRun) {
  auto cfg = *config_;
  cfg.beta = 0.7;
  const auto rows = sweep_beta(*data_, std::vector<double>{0.7}, *config_);
  const auto system = train_system(*data_, cfg);
  const auto report = evaluate_predictions(predict_windows(system, data_->test_windows), *data_, cfg);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].level, "overall");
  EXPECT_EQ(rows[0].metrics->mse, report.overall.mse);
}

TEST_F(SweepTest, FailingCellIsRecorded) {
  auto cfg = *config_;
  cfg.levels = 4;
  const auto rows = sweep_beta(*data_, std::vector<double>{-1.0, 0.5}, cfg);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_NE(rows[0].status, "ok");
  EXPECT_FALSE(rows[0].metrics);
  EXPECT_EQ(rows[4].status, "ok");
}

TEST_F(SweepTest, KSweepReusesModels) {
  const auto system = train_system(*data_, *config_);
  const auto rows = sweep_k(system, *data_, *config_);
  ASSERT_EQ(rows.size(), 4u * 4u);
  // k = E is dense fusion.
  const auto dense = predict_windows(system, data_->test_windows, 4);
  const auto report = evaluate_predictions(dense, *data_, *config_);
  EXPECT_EQ(rows[12].value, 4.0);
  EXPECT_EQ(rows[12].metrics->mse, report.overall.mse);
  // Expert outputs are identical across calls (frozen models).
  const auto a = collect_window_outputs(system.experts, data_->test_windows);
  const auto b = collect_window_outputs(system.experts, data_->test_windows);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].values, b[i].values);
}

TEST_F(SweepTest, AblationRunsPreset) {
  const auto preset = table_x_preset();
  const auto rows = ablate(*data_, preset, *config_);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, "ok");
    ASSERT_TRUE(r.report);
  }
  std::ostringstream os;
  write_ablation_csv(os, rows);
  std::size_t lines = 0;
  for (char ch : os.str()) lines += ch == '\n';
  EXPECT_EQ(lines, 6u);
}

TEST_F(SweepTest, RawUnitsInvertNormalization) {
  auto cfg = *config_;
  const auto system = train_system(*data_, cfg);
  const auto preds = predict_windows(system, data_->test_windows);
  const auto norm = evaluate_predictions(preds, *data_, cfg);
  cfg.eval_units = EvalUnits::Raw;
  const auto raw = evaluate_predictions(preds, *data_, cfg);
  const double s = data_->normalizer.stddev();
  EXPECT_NEAR(raw.overall.mse, s * s * norm.overall.mse, 1e-9 * raw.overall.mse);
  for (std::size_t l = 0; l < kRarityLevels; ++l) {
    ASSERT_EQ(raw.levels[l].has_value(), norm.levels[l].has_value());
    if (raw.levels[l]) EXPECT_EQ(raw.levels[l]->count, norm.levels[l]->count);
  }
}

}  // namespace
}  // namespace xtime
