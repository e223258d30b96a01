// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/trainer.hpp"

#include <cmath>
#include <string>

namespace tpareto {

namespace {

std::string describe_batch(const Batch& batch) {
  std::string ids;
  for (std::size_t i = 0; i < batch.sample_ids.size() && i < 8; ++i) {
    if (i) ids += ",";
    ids += std::to_string(batch.sample_ids[i]);
  }
  if (batch.sample_ids.size() > 8) ids += ",...";
  return "batch of " + std::to_string(batch.size) + " samples [" + ids + "]";
}

std::vector<ParameterGroup> trainable_groups(const HierFusionModel& model, int level) {
  std::vector<ParameterGroup> groups;
  for (int j = 1; j <= level; ++j) groups.push_back(model.group(module_group(static_cast<ModuleId>(j))));
  groups.push_back(model.group(GroupId::ThetaCls));
  return groups;
}

std::map<GroupId, GradientVector> level_backward(const HierFusionModel& model, const Batch& batch, int level,
                                                 double& loss_value) {
  Tensor loss;
  try {
    loss = model.level_loss(batch, level);
  } catch (const NumericError& e) {
    throw DivergenceError("level-" + std::to_string(level) + " loss is non-finite on " + describe_batch(batch) + ": " +
                          e.what());
  }
  loss_value = loss.item();
  return backward(loss, trainable_groups(model, level));
}

}  // namespace

LevelGradients compute_level_gradients(const HierFusionModel& model, const Batch& batch) {
  const int depth = model.depth();
  LevelGradients out;
  for (int j = 1; j <= depth; ++j) {
    ModuleGradientSet set;
    set.module = static_cast<ModuleId>(j);
    set.all_modal_index = static_cast<std::size_t>(depth - j);
    out.modules.push_back(std::move(set));
  }
  for (int level = 1; level <= depth; ++level) {
    double value = 0.0;
    auto grads = level_backward(model, batch, level, value);
    out.losses.push_back({level, level == depth, value});
    for (int j = 1; j <= level; ++j) {
      auto& set = out.modules[static_cast<std::size_t>(j - 1)];
      set.gradients.push_back(std::move(grads.at(module_group(set.module))));
      set.levels.push_back(level);
    }
    if (level == depth) out.head = std::move(grads.at(GroupId::ThetaCls));
  }
  return out;
}

ParameterGroup AdamState::apply(const ParameterGroup& group, const std::vector<double>& grad) {
  std::vector<double> theta = group.flatten();
  if (grad.size() != theta.size())
    throw std::invalid_argument("Adam: gradient size " + std::to_string(grad.size()) + " != parameter count " +
                                std::to_string(theta.size()) + " for " + to_string(group.id()));
  Moments& mom = moments_[group.id()];
  if (mom.m.empty()) {
    mom.m.assign(theta.size(), 0.0);
    mom.v.assign(theta.size(), 0.0);
  }
  ++mom.step;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(mom.step));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(mom.step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * grad[i];
    mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double mhat = mom.m[i] / bc1;
    const double vhat = mom.v[i] / bc2;
    theta[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * theta[i]);
  }
  return group.with_values(theta);
}

StepReport train_step(HierFusionModel& model, const Batch& batch, const TrainOptions& options, AdamState& optimizer,
                      long step_index) {
  StepReport report;
  report.step = step_index;
  const int depth = model.depth();

  if (options.mode == TrainMode::Plain) {
    double value = 0.0;
    auto grads = level_backward(model, batch, depth, value);
    report.losses.push_back({depth, true, value});
    std::vector<ParameterGroup> updated;
    for (const auto& g : model.groups()) updated.push_back(optimizer.apply(g, grads.at(g.id()).values));
    for (auto& g : updated) model.set_group(std::move(g));
    return report;
  }

  LevelGradients lg = compute_level_gradients(model, batch);
  report.losses = lg.losses;
  for (const auto& set : lg.modules) {
    report.modules.push_back(integrate_module_gradient(set, options.pareto));
    if (report.modules.back().solver_invoked) ++report.solver_calls;
  }
  // The update is applied only after every module has been integrated.
  std::vector<ParameterGroup> updated;
  for (const auto& ig : report.modules)
    updated.push_back(optimizer.apply(model.group(module_group(ig.module)), ig.values.values));
  updated.push_back(optimizer.apply(model.group(GroupId::ThetaCls), lg.head.values));
  for (auto& g : updated) model.set_group(std::move(g));
  return report;
}

nlohmann::json step_report_json(const StepReport& report) {
  nlohmann::json j;
  j["step"] = report.step;
  nlohmann::json losses = nlohmann::json::object();
  for (const auto& l : report.losses) losses[l.all_modal ? "all" : "l" + std::to_string(l.level)] = l.value;
  j["losses"] = losses;
  nlohmann::json modules = nlohmann::json::object();
  for (const auto& ig : report.modules) {
    nlohmann::json m;
    m["case"] = to_string(ig.conflict);
    m["cosines"] = nlohmann::json::array();
    m["weights"] = nlohmann::json::array();
    for (const auto& e : ig.report) {
      m["cosines"].push_back(e.cosine);
      m["weights"].push_back(e.truncated_relative_weight);
    }
    m["weights"].push_back(1.0);
    m["alpha"] = ig.alpha;
    if (ig.dead_module) m["dead_module"] = true;
    modules[to_string(ig.module)] = m;
  }
  j["modules"] = modules;
  return j;
}

}  // namespace tpareto
