// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Targeted Pareto integration of the level gradients that reach one fusion
// module. The all-modal gradient always enters with relative weight 1; every
// other level gradient is admitted only if it points within the angle
// threshold of the all-modal one, and their summed relative weight is capped
// at k.

#pragma once

#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tpareto/minnorm.hpp"
#include "tpareto/tensor.hpp"

namespace tpareto {

enum class ModuleId { I = 1, II = 2, III = 3 };

std::string to_string(ModuleId m);
GroupId module_group(ModuleId m);

// `level` is the fusion level index (1, 2, 3); the top level of a model is its
// all-modal level.
struct LevelLoss {
  int level = 0;
  bool all_modal = false;
  double value = 0.0;
};

struct ModuleGradientSet {
  ModuleId module = ModuleId::I;
  std::vector<GradientVector> gradients;  // ascending level, all-modal last
  std::vector<int> levels;
  std::size_t all_modal_index = 0;

  std::size_t tasks() const { return gradients.size(); }
  const GradientVector& all_modal() const { return gradients.at(all_modal_index); }
  // Throws std::invalid_argument describing the first broken invariant.
  void validate() const;
};

struct TParetoConfig {
  double gamma = 0.25;
  double k = 1.0;
  double epsilon_alpha = 1e-3;
  // false: solve on every gradient first, then zero the excluded ones.
  bool filter_before_solve = true;
  SolverConfig solver;
};

struct ConflictEntry {
  int level = 0;
  double cosine = 0.0;
  bool included = false;
  double raw_relative_weight = 0.0;
  double truncated_relative_weight = 0.0;
};

enum class ConflictCase { NonConflict, AngleConflict, WeightConflict, Both };

std::string to_string(ConflictCase c);

struct IntegratedGradient {
  ModuleId module = ModuleId::I;
  GradientVector values;
  std::vector<ConflictEntry> report;  // one per non-all-modal gradient
  ConflictCase conflict = ConflictCase::NonConflict;
  // Simplex weights aligned with the input gradients (0 for excluded ones).
  std::vector<double> alpha;
  bool solver_invoked = false;
  // All-modal gradient was zero; output is that zero gradient.
  bool dead_module = false;
};

class DeadModuleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct AngleFilterResult {
  bool included = false;
  double cosine = 0.0;
};

// cos = <g_all, g_i> / (|g_all| |g_i|); included iff cos > gamma. A zero g_i
// is excluded with cosine 0. Throws DeadModuleError if g_all is zero.
AngleFilterResult angle_filter(const GradientVector& g_all, const GradientVector& g_i, double gamma);

// alpha_i / max(alpha_all, epsilon_alpha); the all-modal entry is exactly 1.
std::vector<double> relative_weights(const ParetoWeights& alpha, std::size_t all_modal_index, double epsilon_alpha);

// Rescales the non-all-modal entries proportionally so they sum to at most k.
std::vector<double> weight_truncate(const std::vector<double>& relative, std::size_t all_modal_index, double k);

IntegratedGradient integrate_module_gradient(const ModuleGradientSet& set, const TParetoConfig& cfg);

}  // namespace tpareto
