// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/integrator.hpp"

#include <cmath>
#include <numeric>

namespace tpareto {

std::string to_string(ModuleId m) {
  switch (m) {
    case ModuleId::I: return "I";
    case ModuleId::II: return "II";
    case ModuleId::III: return "III";
  }
  return "?";
}

GroupId module_group(ModuleId m) {
  switch (m) {
    case ModuleId::I: return GroupId::Theta1;
    case ModuleId::II: return GroupId::Theta2;
    case ModuleId::III: return GroupId::Theta3;
  }
  throw std::invalid_argument("module_group: bad module");
}

std::string to_string(ConflictCase c) {
  switch (c) {
    case ConflictCase::NonConflict: return "non-conflict";
    case ConflictCase::AngleConflict: return "angle-conflict";
    case ConflictCase::WeightConflict: return "weight-conflict";
    case ConflictCase::Both: return "both";
  }
  return "?";
}

void ModuleGradientSet::validate() const {
  if (gradients.empty()) throw std::invalid_argument("module " + to_string(module) + ": no gradients");
  if (levels.size() != gradients.size())
    throw std::invalid_argument("module " + to_string(module) + ": level labels do not match gradients");
  if (all_modal_index != gradients.size() - 1)
    throw std::invalid_argument("module " + to_string(module) + ": all-modal gradient must be last");
  const auto dim = gradients.front().dim();
  for (const auto& g : gradients) {
    if (g.dim() != dim) throw std::invalid_argument("module " + to_string(module) + ": gradient dims differ");
    if (g.group != module_group(module))
      throw std::invalid_argument("module " + to_string(module) + ": gradient from group " + to_string(g.group));
  }
}

AngleFilterResult angle_filter(const GradientVector& g_all, const GradientVector& g_i, double gamma) {
  if (g_all.dim() != g_i.dim()) throw std::invalid_argument("angle_filter: dimension mismatch");
  const double na = squared_norm(g_all.values);
  if (na == 0.0) throw DeadModuleError("angle_filter: all-modal gradient is zero");
  const double ni = squared_norm(g_i.values);
  if (ni == 0.0) return {false, 0.0};
  const double cosine = std::clamp(dot(g_all.values, g_i.values) / (std::sqrt(na) * std::sqrt(ni)), -1.0, 1.0);
  return {cosine > gamma, cosine};
}

std::vector<double> relative_weights(const ParetoWeights& alpha, std::size_t all_modal_index, double epsilon_alpha) {
  if (all_modal_index >= alpha.alpha.size()) throw std::invalid_argument("relative_weights: bad all-modal index");
  const double denom = std::max(alpha.alpha[all_modal_index], epsilon_alpha);
  std::vector<double> out(alpha.alpha.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha.alpha[i] / denom;
  out[all_modal_index] = 1.0;
  return out;
}

std::vector<double> weight_truncate(const std::vector<double>& relative, std::size_t all_modal_index, double k) {
  if (all_modal_index >= relative.size() || relative[all_modal_index] != 1.0)
    throw std::invalid_argument("weight_truncate: all-modal relative weight must be 1");
  double others = 0.0;
  for (std::size_t i = 0; i < relative.size(); ++i)
    if (i != all_modal_index) others += relative[i];
  std::vector<double> out = relative;
  if (others > k) {
    const double factor = k / others;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (i != all_modal_index) out[i] *= factor;
  }
  return out;
}

IntegratedGradient integrate_module_gradient(const ModuleGradientSet& set, const TParetoConfig& cfg) {
  set.validate();
  const std::size_t t = set.tasks();
  const std::size_t all = set.all_modal_index;
  const GradientVector& g_all = set.all_modal();

  IntegratedGradient out;
  out.module = set.module;
  out.values = g_all;
  out.alpha.assign(t, 0.0);
  out.alpha[all] = 1.0;
  if (t == 1) return out;

  out.report.resize(t - 1);
  for (std::size_t i = 0; i + 1 < t; ++i) out.report[i].level = set.levels[i];

  if (squared_norm(g_all.values) == 0.0) {
    out.dead_module = true;
    return out;
  }

  bool any_excluded = false;
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    const auto af = angle_filter(g_all, set.gradients[i], cfg.gamma);
    out.report[i].cosine = af.cosine;
    out.report[i].included = af.included;
    if (af.included)
      survivors.push_back(i);
    else
      any_excluded = true;
  }

  std::vector<double> relative(t, 0.0);
  relative[all] = 1.0;
  if (cfg.filter_before_solve) {
    if (survivors.empty()) {
      out.conflict = ConflictCase::AngleConflict;
      return out;
    }
    ParetoProblem problem;
    for (auto i : survivors) problem.gradients.push_back(set.gradients[i]);
    problem.gradients.push_back(g_all);
    const ParetoWeights w = frank_wolfe_minnorm(problem, cfg.solver);
    out.solver_invoked = true;
    const auto rel = relative_weights(w, survivors.size(), cfg.epsilon_alpha);
    for (std::size_t s = 0; s < survivors.size(); ++s) {
      out.alpha[survivors[s]] = w.alpha[s];
      relative[survivors[s]] = rel[s];
    }
    out.alpha[all] = w.alpha.back();
  } else {
    ParetoProblem problem{set.gradients};
    const ParetoWeights w = frank_wolfe_minnorm(problem, cfg.solver);
    out.solver_invoked = true;
    out.alpha = w.alpha;
    relative = relative_weights(w, all, cfg.epsilon_alpha);
    for (std::size_t i = 0; i + 1 < t; ++i) {
      if (!out.report[i].included) relative[i] = 0.0;
    }
  }

  const auto truncated = weight_truncate(relative, all, cfg.k);
  bool truncation_fired = false;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    out.report[i].raw_relative_weight = relative[i];
    out.report[i].truncated_relative_weight = truncated[i];
    truncation_fired = truncation_fired || truncated[i] != relative[i];
  }

  auto& values = out.values.values;
  for (std::size_t i = 0; i + 1 < t; ++i) {
    const double w = truncated[i];
    if (w == 0.0) continue;
    const auto& g = set.gradients[i].values;
    for (std::size_t j = 0; j < values.size(); ++j) values[j] += w * g[j];
  }

  if (any_excluded && truncation_fired)
    out.conflict = ConflictCase::Both;
  else if (any_excluded)
    out.conflict = ConflictCase::AngleConflict;
  else if (truncation_fired)
    out.conflict = ConflictCase::WeightConflict;
  return out;
}

}  // namespace tpareto
