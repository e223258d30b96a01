// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tpareto/integrator.hpp"
#include "tpareto/model.hpp"

namespace tpareto {

// One backward pass per level loss. Module j receives the gradients of every
// level l >= j; the head only ever sees the all-modal gradient.
struct LevelGradients {
  std::vector<ModuleGradientSet> modules;
  GradientVector head;
  std::vector<LevelLoss> losses;
};

LevelGradients compute_level_gradients(const HierFusionModel& model, const Batch& batch);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-3;  // decoupled
};

class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  // Returns the updated group.
  ParameterGroup apply(const ParameterGroup& group, const std::vector<double>& grad);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
  };
  AdamConfig cfg_;
  std::map<GroupId, Moments> moments_;
};

enum class TrainMode { Plain, TPareto };

struct TrainOptions {
  TrainMode mode = TrainMode::TPareto;
  TParetoConfig pareto;
};

struct StepReport {
  long step = 0;
  std::vector<LevelLoss> losses;
  std::vector<IntegratedGradient> modules;
  std::uint64_t solver_calls = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Updates theta1..theta3 with their integrated gradients and theta_cls with
// the all-modal gradient. Plain mode uses the all-modal gradient everywhere.
StepReport train_step(HierFusionModel& model, const Batch& batch, const TrainOptions& options, AdamState& optimizer,
                      long step_index = 0);

// {step, losses: {l1, l2, all}, modules: {I: {case, cosines, weights}, ...}}
nlohmann::json step_report_json(const StepReport& report);

}  // namespace tpareto
