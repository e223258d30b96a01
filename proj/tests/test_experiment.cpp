// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "tpareto/experiment.hpp"

using namespace tpareto;

namespace {

ExperimentConfig quick_config() {
  ExperimentConfig c;
  c.data.n_samples = 240;
  c.data.feature_dim = 4;
  c.data.text_len = 2;
  c.data.audio_len = 2;
  c.data.image_count = 2;
  c.model = tpareto::testing::small_config();
  c.model.input_dim = 4;
  c.optimizer.lr = 1e-3;
  c.optimizer.batch_size = 32;
  c.epochs = 2;
  c.patience = 0;
  c.seeds = {0, 1};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// CSV with the method column blanked out.
std::string numbers_only(std::vector<MetricsRow> rows) {
  for (auto& r : rows) r.method = "-";
  return metrics_csv(rows);
}

}  // namespace

TEST(Metrics, Formatting) {
  EXPECT_EQ(format_metric(0.845), "0.8450");
  EXPECT_EQ(format_metric(1.0), "1.0000");
  const std::vector<MetricsRow> one{make_row(3, "plain", 2, {40, 10, 5, 45})};
  const std::string csv = metrics_csv(one);
  EXPECT_EQ(csv, std::string(kMetricsHeader) + "\n3,plain,II,0.8496,0.8535,0.8500,0.8500\n");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
}

TEST(Metrics, MacroAveragesFromConfusion) {
  const ConfusionMatrix cm{40, 10, 5, 45};
  const auto m = macro_metrics(cm);
  const double p_fake = 40.0 / 50, r_fake = 40.0 / 45, p_real = 45.0 / 50, r_real = 45.0 / 55;
  EXPECT_NEAR(m.precision, (p_fake + p_real) / 2, 1e-15);
  EXPECT_NEAR(m.recall, (r_fake + r_real) / 2, 1e-15);
  EXPECT_NEAR(m.f1, (2 * p_fake * r_fake / (p_fake + r_fake) + 2 * p_real * r_real / (p_real + r_real)) / 2, 1e-15);
  EXPECT_NEAR(m.acc, 0.85, 1e-15);
  const auto none = macro_metrics({0, 0, 50, 50});
  EXPECT_NEAR(none.precision, 0.25, 1e-15);
}

TEST(Metrics, EmitAndParse) {
  const std::vector<MetricsRow> rows{make_row(0, "tpareto", 1, {3, 1, 2, 4}), make_row(0, "tpareto", 3, {5, 0, 0, 5})};
  const auto dir = std::filesystem::temp_directory_path() / "tpareto_metrics_test";
  std::filesystem::create_directories(dir);
  emit_metrics(rows, (dir / "a.csv").string());
  emit_metrics(rows, (dir / "b.csv").string());
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  emit_metrics_jsonl(rows, (dir / "m.jsonl").string());
  const auto back = parse_metrics_jsonl(slurp(dir / "m.jsonl"));
  ASSERT_EQ(back.size(), 2u);
  for (const auto& r : back) {
    const auto m = macro_metrics(r.confusion);
    EXPECT_EQ(format_metric(m.f1), format_metric(r.f1));
    EXPECT_EQ(format_metric(m.precision), format_metric(r.precision));
    EXPECT_EQ(format_metric(m.recall), format_metric(r.recall));
  }
  EXPECT_THROW(emit_metrics({}, (dir / "c.csv").string()), std::invalid_argument);
  EXPECT_THROW(emit_metrics(rows, (dir / "missing" / "x.csv").string()), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Config, JsonRoundTripAndStrictness) {
  ExperimentConfig c = quick_config();
  c.pareto.k = INFINITY;
  c.method = Method::LevelOnly2;
  const nlohmann::json j = c;
  const auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
  EXPECT_TRUE(std::isinf(back.pareto.k));

  nlohmann::json bad = j;
  bad["optimizer"]["momentum"] = 0.9;
  EXPECT_THROW(bad.get<ExperimentConfig>(), std::invalid_argument);
  bad = j;
  bad["version"] = 99;
  EXPECT_THROW(bad.get<ExperimentConfig>(), std::invalid_argument);
  bad = j;
  bad["epochs"] = 0;
  EXPECT_THROW(bad.get<ExperimentConfig>(), std::invalid_argument);
  // model.input_dim follows the data width when omitted
  nlohmann::json partial = {{"data", {{"feature_dim", 6}}}, {"model", {{"d", 8}, {"d_f", 8}}}};
  EXPECT_EQ(partial.get<ExperimentConfig>().model.input_dim, 6u);
}

TEST(RunTrain, ReproducibleBytes) {
  const ExperimentConfig c = quick_config();
  const auto a = run_train(c), b = run_train(c);
  EXPECT_EQ(metrics_csv(a.rows), metrics_csv(b.rows));
  RunOptions two;
  two.threads = 2;
  EXPECT_EQ(metrics_csv(run_train(c, two).rows), metrics_csv(a.rows));
  EXPECT_EQ(a.rows.size(), 6u);  // 2 seeds x 3 levels
}

TEST(RunTrain, PlainNeverCallsSolver) {
  ExperimentConfig c = quick_config();
  c.method = Method::Plain;
  c.pareto.gamma = -1.0;
  const auto before = minnorm_call_count();
  const auto out = run_train(c);
  EXPECT_EQ(minnorm_call_count(), before);
  for (const auto& r : out.runs) EXPECT_EQ(r.solver_calls, 0u);

  c.method = Method::TPareto;
  const auto tp = run_train(c);
  EXPECT_GT(tp.runs[0].solver_calls, 0u);
}

TEST(RunTrain, ImpossibleGammaIsPlain) {
  ExperimentConfig c = quick_config();
  c.method = Method::Plain;
  const auto plain = run_train(c);
  c.method = Method::TPareto;
  c.pareto.gamma = 1.0 + 1e-9;
  const auto tp = run_train(c);
  EXPECT_EQ(numbers_only(plain.rows), numbers_only(tp.rows));
}

TEST(RunTrain, ChanceLevelWithoutSignal) {
  ExperimentConfig c = quick_config();
  c.data.n_samples = 2000;
  c.data.informativeness = {0, 0, 0, 0};
  c.seeds = {3};
  c.epochs = 1;
  const auto out = run_train(c);
  const double n = static_cast<double>(out.rows.back().confusion.total());
  EXPECT_NEAR(out.rows.back().acc, 0.5, 3 * std::sqrt(0.25 / n));
}

TEST(RunTrain, LevelOnlyBuildsNoHigherModules) {
  ExperimentConfig c = quick_config();
  c.method = Method::LevelOnly1;
  c.seeds = {0};
  const auto out = run_train(c);
  ASSERT_EQ(out.runs.size(), 1u);
  EXPECT_EQ(out.runs[0].groups, (std::vector<GroupId>{GroupId::Theta1, GroupId::ThetaCls}));
  EXPECT_EQ(out.rows.size(), 1u);
  c.method = Method::LevelOnly2;
  EXPECT_EQ(run_train(c).runs[0].groups, (std::vector<GroupId>{GroupId::Theta1, GroupId::Theta2, GroupId::ThetaCls}));
}

TEST(RunTrain, StepLogsWritten) {
  ExperimentConfig c = quick_config();
  c.seeds = {0};
  c.epochs = 1;
  const auto dir = std::filesystem::temp_directory_path() / "tpareto_steps_test";
  std::filesystem::create_directories(dir);
  RunOptions o;
  o.step_log_dir = dir.string();
  run_train(c, o);
  const std::string text = slurp(dir / "steps_tpareto_d3_seed0.jsonl");
  std::filesystem::remove_all(dir);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);  // ceil(168 / 32)
  const auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_TRUE(first["modules"].contains("I"));
}

TEST(Sweep, DefaultGridsShape) {
  EXPECT_EQ(default_grid(SweepParameter::Gamma), (std::vector<double>{-0.25, 0, 0.25, 0.5}));
  EXPECT_EQ(default_grid(SweepParameter::K), (std::vector<double>{0.5, 1, 1.5, 2}));
  ExperimentConfig c = quick_config();
  c.seeds = {0};
  c.epochs = 1;
  for (auto p : {SweepParameter::Gamma, SweepParameter::K}) {
    const auto t = run_sweep(c, p, default_grid(p));
    ASSERT_EQ(t.acc_mean.size(), 3u);
    for (const auto& row : t.acc_mean) EXPECT_EQ(row.size(), 4u);
    const std::string csv = t.csv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), p == SweepParameter::Gamma ? "level,-0.25,0,0.25,0.5" : "level,0.5,1,1.5,2");
    EXPECT_EQ(t.rows.size(), 12u);
  }
}

TEST(Sweep, SingleValueMatchesRunTrain) {
  ExperimentConfig c = quick_config();
  c.pareto.gamma = 0.0;
  const auto t = run_sweep(c, SweepParameter::Gamma, {0.0});
  const auto r = run_train(c);
  EXPECT_EQ(numbers_only(t.rows), numbers_only(r.rows));
  EXPECT_EQ(t.rows[0].method, "tpareto@gamma=0");
  EXPECT_THROW(run_sweep(c, SweepParameter::K, {}), std::invalid_argument);
}

TEST(Ablation, SixRowsPerSeed) {
  ExperimentConfig c = quick_config();
  c.epochs = 1;
  const auto a = run_ablation(c);
  EXPECT_EQ(a.rows.size(), 6u * c.seeds.size());
  for (const auto& run : a.runs) {
    EXPECT_EQ(run.groups.size(), static_cast<std::size_t>(run.spec.depth) + 1);
    if (run.spec.depth == 1) {
      EXPECT_EQ(std::count(run.groups.begin(), run.groups.end(), GroupId::Theta2), 0);
      EXPECT_EQ(std::count(run.groups.begin(), run.groups.end(), GroupId::Theta3), 0);
    }
    EXPECT_EQ(run.rows.back().level, run.spec.depth);
  }
  EXPECT_FALSE(a.pretty().empty());
}

TEST(Ablation, ConflictFreeDataReachesBayesLevel) {
  ExperimentConfig c = quick_config();
  c.data.n_samples = 1200;
  c.data.informativeness = {0.8, 0.8, 0.8, 0.8};
  c.data.conflict_rate = 0.0;
  c.epochs = 30;
  c.patience = 5;
  c.seeds = {0};
  const auto oracle = bayes_oracle(c.data, 20000);
  const auto a = run_ablation(c);
  // the oracle sees every modality; only level III does as well
  for (const auto& r : a.rows) {
    if (r.level != 3) continue;
    const double se = std::sqrt(oracle.accuracy * (1 - oracle.accuracy) / static_cast<double>(r.confusion.total()));
    EXPECT_GE(r.acc, oracle.accuracy - 0.02 - 3 * se) << r.method << " level " << r.level;
  }
}

TEST(RunTrain, NeverBeatsBayesOracle) {
  ExperimentConfig c = quick_config();
  c.data.n_samples = 1000;
  c.data.feature_dim = 16;
  c.model.input_dim = 16;
  c.data.conflict_rate = 0.3;
  c.epochs = 3;
  c.seeds = {0};
  const auto oracle = bayes_oracle(c.data, 100000);
  const auto out = run_train(c);
  for (const auto& r : out.rows) EXPECT_LE(r.acc, oracle.accuracy + 0.01) << "level " << r.level;
}
