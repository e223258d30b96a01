// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/minnorm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tpareto {

namespace {

std::atomic<std::uint64_t> g_solver_calls{0};

void project_to_simplex(std::vector<double>& alpha) {
  double total = 0.0;
  for (double& a : alpha) {
    a = std::max(a, 0.0);
    total += a;
  }
  if (total <= 0.0) {
    std::fill(alpha.begin(), alpha.end(), 1.0 / static_cast<double>(alpha.size()));
    return;
  }
  for (double& a : alpha) a /= total;
}

// p = M alpha
std::vector<double> gram_times(const std::vector<double>& gram, const std::vector<double>& alpha) {
  const std::size_t t = alpha.size();
  std::vector<double> p(t, 0.0);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) p[i] += gram[i * t + j] * alpha[j];
  return p;
}

double quad(const std::vector<double>& gram, const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t t = a.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) acc += a[i] * gram[i * t + j] * b[j];
  return acc;
}


// Minimiser of a'Ma over the affine hull of the support `in` (sum a = 1),
// from the KKT system [M_SS 1; 1' 0]. Empty when the system is singular,
// i.e. the support gradients are affinely dependent.
std::vector<double> affine_minimizer(const std::vector<double>& gram, const std::vector<bool>& in, double scale) {
  const std::size_t t = in.size();
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < t; ++i)
    if (in[i]) idx.push_back(i);
  const std::size_t n = idx.size() + 1;
  std::vector<double> a(n * (n + 1), 0.0);  // augmented
  for (std::size_t r = 0; r + 1 < n; ++r) {
    for (std::size_t c = 0; c + 1 < n; ++c) a[r * (n + 1) + c] = gram[idx[r] * t + idx[c]];
    a[r * (n + 1) + n - 1] = 1.0;
    a[(n - 1) * (n + 1) + r] = 1.0;
  }
  a[(n - 1) * (n + 1) + n] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * (n + 1) + col]) > std::abs(a[piv * (n + 1) + col])) piv = r;
    // pivots of the Gram block are O(scale); the bordered row is O(1)
    const double floor = 1e-12 * std::max(scale, 1.0) * std::max(1.0, 1.0 / std::max(scale, 1e-300));
    if (std::abs(a[piv * (n + 1) + col]) <= floor * 1e-3) return {};
    if (piv != col)
      for (std::size_t c = 0; c <= n; ++c) std::swap(a[col * (n + 1) + c], a[piv * (n + 1) + c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a[r * (n + 1) + col] / a[col * (n + 1) + col];
      if (factor == 0.0) continue;
      for (std::size_t c = col; c <= n; ++c) a[r * (n + 1) + c] -= factor * a[col * (n + 1) + c];
    }
  }
  std::vector<double> y(t, 0.0);
  for (std::size_t r = 0; r + 1 < n; ++r) y[idx[r]] = a[r * (n + 1) + n] / a[r * (n + 1) + r];
  for (double v : y)
    if (!std::isfinite(v)) return {};
  return y;
}

// Exact finish for the Frank-Wolfe iterate: Wolfe's min-norm-point
// corral iterations on the Gram matrix, started from the FW support.
// Terminates at the exact optimum unless the support becomes affinely
// dependent, in which case the input is returned unchanged.
std::vector<double> polish(const std::vector<double>& gram, std::vector<double> alpha, double scale) {
  const std::size_t t = alpha.size();
  std::vector<bool> in(t);
  for (std::size_t i = 0; i < t; ++i) in[i] = alpha[i] > 0.0;
  for (std::size_t major = 0; major < 4 * t + 4; ++major) {
    for (std::size_t minor = 0; minor <= t; ++minor) {
      const auto y = affine_minimizer(gram, in, scale);
      if (y.empty()) return alpha;
      bool inside = true;
      for (std::size_t i = 0; i < t; ++i)
        if (in[i] && y[i] <= 0.0) inside = false;
      if (inside) {
        alpha = y;
        break;
      }
      double theta = 1.0;
      for (std::size_t i = 0; i < t; ++i)
        if (in[i] && y[i] <= 0.0) theta = std::min(theta, alpha[i] / (alpha[i] - y[i]));
      for (std::size_t i = 0; i < t; ++i) alpha[i] += theta * (y[i] - alpha[i]);
      for (std::size_t i = 0; i < t; ++i)
        if (in[i] && (y[i] <= 0.0 && alpha[i] <= 1e-15)) {
          alpha[i] = 0.0;
          in[i] = false;
        }
    }
    const auto p = gram_times(gram, alpha);
    const double f = quad(gram, alpha, alpha);
    const std::size_t j = static_cast<std::size_t>(std::min_element(p.begin(), p.end()) - p.begin());
    if (in[j] || f - p[j] <= 1e-14 * scale) break;
    in[j] = true;
  }
  return alpha;
}

}  // namespace

double two_task_weight(double g1g1, double g1g2, double g2g2) {
  const double diff = g1g1 - 2.0 * g1g2 + g2g2;
  if (diff <= kDegenerateTwoTask * std::max(g1g1, g2g2)) return 0.5;
  return std::clamp((g2g2 - g1g2) / diff, 0.0, 1.0);
}

double analytic_two_task(const GradientVector& g1, const GradientVector& g2) {
  if (g1.dim() != g2.dim())
    throw std::invalid_argument("analytic_two_task: dimension mismatch " + std::to_string(g1.dim()) + " vs " +
                                std::to_string(g2.dim()));
  return two_task_weight(squared_norm(g1.values), dot(g1.values, g2.values), squared_norm(g2.values));
}

std::vector<double> gram_matrix(const ParetoProblem& problem) {
  const std::size_t t = problem.tasks();
  if (t == 0) throw std::invalid_argument("min-norm problem needs at least one gradient");
  const auto& first = problem.gradients.front();
  for (const auto& g : problem.gradients) {
    if (g.dim() != first.dim())
      throw std::invalid_argument("min-norm problem: gradient dims differ (" + std::to_string(first.dim()) + " vs " +
                                  std::to_string(g.dim()) + ")");
    if (g.group != first.group) throw std::invalid_argument("min-norm problem: gradients from different groups");
  }
  std::vector<double> gram(t * t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = i; j < t; ++j)
      gram[i * t + j] = gram[j * t + i] = dot(problem.gradients[i].values, problem.gradients[j].values);
  return gram;
}

SolverResult solve_minnorm(const ParetoProblem& problem, const SolverConfig& cfg) {
  g_solver_calls.fetch_add(1, std::memory_order_relaxed);
  const std::vector<double> gram = gram_matrix(problem);
  const std::size_t t = problem.tasks();

  SolverResult result;
  if (t == 1) {
    result.weights.alpha = {1.0};
    result.min_norm_sq = gram[0];
    return result;
  }
  if (t == 2) {
    const double a = two_task_weight(gram[0], gram[1], gram[3]);
    result.weights.alpha = {a, 1.0 - a};
    result.min_norm_sq = quad(gram, result.weights.alpha, result.weights.alpha);
    const auto p = gram_times(gram, result.weights.alpha);
    result.gap = result.min_norm_sq - std::min(p[0], p[1]);
    return result;
  }

  // The stopping tolerance is scaled by the largest squared gradient norm so
  // that the iterate sequence is invariant to rescaling all gradients.
  double scale = 0.0;
  for (std::size_t i = 0; i < t; ++i) scale = std::max(scale, gram[i * t + i]);
  const double tol = cfg.tol * std::max(scale, std::numeric_limits<double>::min());

  std::vector<double> alpha(t, 1.0 / static_cast<double>(t));
  std::vector<double> p = gram_times(gram, alpha);
  double f = quad(gram, alpha, alpha);
  int it = 0;
  double gap = 0.0;
  for (; it < cfg.max_iter; ++it) {
    const std::size_t s = static_cast<std::size_t>(std::min_element(p.begin(), p.end()) - p.begin());
    gap = f - p[s];
    if (gap <= tol) break;

    std::size_t away = s;
    double away_gap = -1.0;
    if (cfg.away_steps) {
      for (std::size_t i = 0; i < t; ++i) {
        if (alpha[i] > 0.0 && p[i] - f > away_gap) {
          away_gap = p[i] - f;
          away = i;
        }
      }
    }

    std::vector<double> target(t, 0.0);
    if (away_gap > gap && alpha[away] < 1.0) {
      // Move away from vertex `away` until its weight hits zero.
      const double max_step = alpha[away] / (1.0 - alpha[away]);
      for (std::size_t i = 0; i < t; ++i) target[i] = alpha[i] * (1.0 + max_step);
      target[away] = 0.0;
    } else {
      target[s] = 1.0;
    }
    const auto pt = gram_times(gram, target);
    double tt = 0.0, tv = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      tt += target[i] * pt[i];
      tv += target[i] * p[i];
    }
    const double step = two_task_weight(tt, tv, f);
    for (std::size_t i = 0; i < t; ++i) alpha[i] = (1.0 - step) * alpha[i] + step * target[i];
    project_to_simplex(alpha);
    p = gram_times(gram, alpha);
    f = quad(gram, alpha, alpha);
  }
  {
    std::vector<double> exact = polish(gram, alpha, scale);
    project_to_simplex(exact);
    const auto pe = gram_times(gram, exact);
    const double fe = quad(gram, exact, exact);
    const double gap_e = fe - *std::min_element(pe.begin(), pe.end());
    // near the optimum f is flat to rounding, so compare within 1e-12 of the scale
    const double slack = 1e-12 * scale;
    if (fe <= f + slack && gap_e <= std::max(f - *std::min_element(p.begin(), p.end()), slack)) {
      alpha = std::move(exact);
      p = pe;
      f = fe;
    }
  }
  gap = f - *std::min_element(p.begin(), p.end());
  result.weights.alpha = std::move(alpha);
  result.min_norm_sq = f;
  result.gap = gap;
  result.iterations = it;
  return result;
}

ParetoWeights frank_wolfe_minnorm(const ParetoProblem& problem, const SolverConfig& cfg) {
  return solve_minnorm(problem, cfg).weights;
}

double combined_norm_sq(const ParetoProblem& problem, std::span<const double> alpha) {
  return squared_norm(combine(problem, alpha));
}

std::vector<double> combine(const ParetoProblem& problem, std::span<const double> alpha) {
  if (alpha.size() != problem.tasks()) throw std::invalid_argument("combine: weight count mismatch");
  std::vector<double> out(problem.gradients.front().dim(), 0.0);
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    const auto& g = problem.gradients[t].values;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha[t] * g[i];
  }
  return out;
}

ParetoWeights minnorm_oracle(const ParetoProblem& problem, double grid_step) {
  const std::size_t t = problem.tasks();
  if (t > 4) throw std::invalid_argument("minnorm_oracle: T=" + std::to_string(t) + " too large to enumerate (max 4)");
  if (!(grid_step > 0.0 && grid_step <= 0.5)) throw std::invalid_argument("minnorm_oracle: grid_step must be in (0, 0.5]");
  const std::vector<double> gram = gram_matrix(problem);
  if (t == 1) return {{1.0}};

  const int n = static_cast<int>(std::lround(1.0 / grid_step));
  std::vector<int> counts(t, 0);
  std::vector<double> alpha(t), best;
  double best_value = std::numeric_limits<double>::infinity();

  // Enumerate compositions of n into t non-negative parts.
  auto visit = [&](auto&& self, std::size_t idx, int remaining) -> void {
    if (idx + 1 == t) {
      counts[idx] = remaining;
      for (std::size_t i = 0; i < t; ++i) alpha[i] = static_cast<double>(counts[i]) / n;
      const double v = quad(gram, alpha, alpha);
      if (v < best_value) {
        best_value = v;
        best = alpha;
      }
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[idx] = c;
      self(self, idx + 1, remaining - c);
    }
  };
  visit(visit, 0, n);
  return {best};
}

std::uint64_t minnorm_call_count() { return g_solver_calls.load(std::memory_order_relaxed); }

}  // namespace tpareto
