// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tpareto {

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_dim", c.input_dim}, {"d", c.d},
                     {"d_f", c.d_f},             {"heads", c.heads},
                     {"num_classes", c.num_classes}, {"head_tokens", c.head_tokens},
                     {"depth", c.depth}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  for (const auto& [key, value] : j.items()) {
    if (key == "input_dim") d.input_dim = value.get<std::size_t>();
    else if (key == "d") d.d = value.get<std::size_t>();
    else if (key == "d_f") d.d_f = value.get<std::size_t>();
    else if (key == "heads") d.heads = value.get<std::size_t>();
    else if (key == "num_classes") d.num_classes = value.get<std::size_t>();
    else if (key == "head_tokens") d.head_tokens = value.get<std::size_t>();
    else if (key == "depth") d.depth = value.get<int>();
    else throw std::invalid_argument("ModelConfig: unknown key '" + key + "'");
  }
  d.validate();
  c = d;
}

nlohmann::json checkpoint_json(const HierFusionModel& model) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : model.groups()) {
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& nt : g.tensors()) {
      auto d = nt.tensor.data();
      tensors.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}, {"data", std::vector<double>(d.begin(), d.end())}});
    }
    groups.push_back({{"id", to_string(g.id())}, {"tensors", tensors}});
  }
  return {{"format", "tpareto-checkpoint"}, {"version", 1}, {"config", model.config()}, {"groups", groups}};
}

HierFusionModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "tpareto-checkpoint" || j.value("version", 0) != 1)
    throw std::runtime_error("not a version-1 tpareto checkpoint");
  const auto cfg = j.at("config").get<ModelConfig>();
  std::vector<ParameterGroup> groups;
  for (const auto& gj : j.at("groups")) {
    ParameterGroup g(group_from_string(gj.at("id").get<std::string>()));
    for (const auto& tj : gj.at("tensors"))
      g.add(tj.at("name").get<std::string>(),
            Tensor::parameter(tj.at("shape").get<Shape>(), tj.at("data").get<std::vector<double>>()));
    groups.push_back(std::move(g));
  }
  return HierFusionModel(cfg, std::move(groups));
}

void save_checkpoint(const HierFusionModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << checkpoint_json(model).dump() << '\n';
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

HierFusionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_checkpoint(nlohmann::json::parse(ss.str()));
}

}  // namespace tpareto
