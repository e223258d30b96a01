// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: generate data, train, evaluate every fusion level on the
// test split, sweep the TPareto thresholds, and compare against plain
// all-modal training.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tpareto/integrator.hpp"
#include "tpareto/metrics.hpp"
#include "tpareto/model.hpp"
#include "tpareto/synthetic.hpp"
#include "tpareto/trainer.hpp"

namespace tpareto {

enum class Method { TPareto, Plain, LevelOnly1, LevelOnly2 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct OptimizerSettings {
  double lr = 1e-4;
  double weight_decay = 5e-3;
  std::size_t batch_size = 64;
};

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
  GenConfig data;
  ModelConfig model;  // model.input_dim must equal data.feature_dim
  TParetoConfig pareto;
  OptimizerSettings optimizer;
  int epochs = 30;
  int patience = 5;  // early stopping on validation accuracy; <= 0 disables
  std::vector<std::uint64_t> seeds{0};
  Method method = Method::TPareto;
  std::array<double, 3> split{0.7, 0.15, 0.15};

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const TParetoConfig& c);
void from_json(const nlohmann::json& j, TParetoConfig& c);

// What one training run builds and how it is optimised.
struct RunSpec {
  int depth = 3;
  bool pareto = true;
  std::string method;  // label written into metric rows
};

RunSpec run_spec(const ExperimentConfig& cfg);

struct RunOptions {
  int threads = 1;
  // When set, each run writes its step reports to
  // <dir>/steps_<method>_d<depth>_seed<seed>.jsonl.
  std::string step_log_dir;
};

struct RunResult {
  std::uint64_t seed = 0;
  RunSpec spec;
  std::vector<MetricsRow> rows;  // test metrics for levels 1..depth
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  std::uint64_t solver_calls = 0;
  std::vector<GroupId> groups;  // parameter groups the model was built with
  std::optional<HierFusionModel> model;  // best checkpoint
};

using StepCallback = std::function<void(const StepReport&)>;

// Single seeded run. Deterministic for identical arguments.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed, const RunSpec& spec,
                     const StepCallback& on_step = {});

// Evaluates `model` on the given samples at fusion level `level`.
ConfusionMatrix evaluate_level(const HierFusionModel& model, const Dataset& data, const std::vector<std::size_t>& idx,
                               int level);

struct TrainOutcome {
  std::vector<MetricsRow> rows;  // sorted
  std::vector<RunResult> runs;   // in seed order
};

TrainOutcome run_train(const ExperimentConfig& cfg, const RunOptions& options = {});

enum class SweepParameter { Gamma, K };

std::string to_string(SweepParameter p);
SweepParameter sweep_parameter_from_string(const std::string& s);
std::vector<double> default_grid(SweepParameter p);

struct SweepTable {
  SweepParameter parameter = SweepParameter::Gamma;
  std::vector<double> values;
  std::vector<int> levels;                     // rows
  std::vector<std::vector<double>> acc_mean;   // [level][value]
  std::vector<std::vector<double>> acc_std;    // sample std over seeds
  std::vector<MetricsRow> rows;                // every run, method "tpareto@<param>=<v>"

  std::string csv() const;        // level,<v1>,<v2>,... of mean accuracy
  std::string long_csv() const;   // parameter,value,level,acc_mean,acc_std,n_seeds
  std::string pretty() const;
};

SweepTable run_sweep(const ExperimentConfig& cfg, SweepParameter parameter, const std::vector<double>& grid,
                     const RunOptions& options = {});

struct AblationResult {
  std::vector<MetricsRow> rows;  // per seed: levels I..III x {plain, tpareto}
  std::vector<RunResult> runs;

  std::string pretty() const;
};

// Trains depth-1, depth-2 and full models, each with and without TPareto, and
// reports each at its own top level.
AblationResult run_ablation(const ExperimentConfig& cfg, const RunOptions& options = {});

std::string format_value(double v);

}  // namespace tpareto
