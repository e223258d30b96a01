// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (JSON):
//
//   {"format": "tpareto-checkpoint", "version": 1,
//    "config": {input_dim, d, d_f, heads, num_classes, head_tokens, depth},
//    "groups": [{"id": "theta1",
//                "tensors": [{"name": ..., "shape": [r, c], "data": [...]}, ...]},
//               ...]}
//
// Groups appear in model order and tensors in declaration order, so the
// concatenated "data" arrays of a group are its flattened parameter vector.
// Doubles are written in shortest round-trip form, so loading restores every
// bit.

#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "tpareto/model.hpp"

namespace tpareto {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

nlohmann::json checkpoint_json(const HierFusionModel& model);
HierFusionModel model_from_checkpoint(const nlohmann::json& j);

void save_checkpoint(const HierFusionModel& model, const std::string& path);
HierFusionModel load_checkpoint(const std::string& path);

}  // namespace tpareto
