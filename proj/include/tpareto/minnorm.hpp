// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Min-norm point in the convex hull of T gradients:
//
//   min_alpha || sum_t alpha_t g_t ||^2   s.t.  alpha on the simplex.
//
// T = 2 has a closed form; T > 2 uses Frank-Wolfe whose line search is the
// same closed form applied to the segment being searched.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tpareto/tensor.hpp"

namespace tpareto {

struct ParetoProblem {
  std::vector<GradientVector> gradients;

  std::size_t tasks() const { return gradients.size(); }
};

struct ParetoWeights {
  std::vector<double> alpha;
};

struct SolverConfig {
  int max_iter = 100;
  double tol = 1e-7;
  // Away steps let Frank-Wolfe drop weight from a vertex; without them the
  // method zig-zags when the optimum lies on a face.
  bool away_steps = true;
};

struct SolverResult {
  ParetoWeights weights;
  double min_norm_sq = 0.0;
  double gap = 0.0;
  int iterations = 0;
};

// Degenerate threshold on ||g1 - g2||^2, relative to max(||g1||^2, ||g2||^2).
inline constexpr double kDegenerateTwoTask = 1e-12;

// Weight on g1 minimising ||a g1 + (1 - a) g2||^2 given the Gram entries.
double two_task_weight(double g1g1, double g1g2, double g2g2);

double analytic_two_task(const GradientVector& g1, const GradientVector& g2);

// Validates shapes and returns the T x T Gram matrix, row-major.
std::vector<double> gram_matrix(const ParetoProblem& problem);

SolverResult solve_minnorm(const ParetoProblem& problem, const SolverConfig& cfg = {});
ParetoWeights frank_wolfe_minnorm(const ParetoProblem& problem, const SolverConfig& cfg = {});

// Brute force over the simplex lattice with spacing grid_step (T <= 4).
ParetoWeights minnorm_oracle(const ParetoProblem& problem, double grid_step);

// ||sum alpha_t g_t||^2.
double combined_norm_sq(const ParetoProblem& problem, std::span<const double> alpha);
std::vector<double> combine(const ParetoProblem& problem, std::span<const double> alpha);

// Number of solve_minnorm invocations in this process. Used to check that
// plain training never touches the solver.
std::uint64_t minnorm_call_count();

}  // namespace tpareto
