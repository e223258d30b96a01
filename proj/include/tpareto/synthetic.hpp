// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multimodal news with a known generative model.
//
// Each sample has a latent sign y (+1 fake, -1 real). Every vector of
// modality m is
//
//     x = rho_m * s_m * mu_m + sigma * eps,   eps ~ N(0, I)
//
// where mu_m is a unit direction fixed by the seed and s_m = y, except that
// with probability conflict_rate one uniformly chosen modality uses s_m = -y.
// The extra modality covers both comments and the publisher vector.
//
// Randomness for sample i comes from its own stream seeded with
// mix64(seed, i), so generation order does not matter.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tpareto/model.hpp"

namespace tpareto {

enum class Modality { Text = 0, Audio = 1, Image = 2, Extra = 3 };
inline constexpr std::size_t kModalityCount = 4;

inline constexpr int kLabelReal = 0;
inline constexpr int kLabelFake = 1;

struct GenConfig {
  std::size_t n_samples = 4000;
  std::uint64_t seed = 0;
  std::array<double, kModalityCount> informativeness{0.8, 0.6, 0.4, 0.2};
  double conflict_rate = 0.4;
  double noise_sigma = 1.0;
  std::size_t feature_dim = 16;
  std::size_t text_len = 4;
  std::size_t audio_len = 4;
  std::size_t image_count = 3;
  std::size_t comments_min = 0;
  std::size_t comments_max = 4;
  // Likes ~ floor(like_scale * (U^(-1/like_tail) - 1)): discrete Pareto.
  double like_tail = 1.2;
  double like_scale = 5.0;
  bool include_publisher = true;

  void validate() const;
  bool operator==(const GenConfig&) const = default;
};

void to_json(nlohmann::json& j, const GenConfig& c);
void from_json(const nlohmann::json& j, GenConfig& c);

// Hex FNV-1a of the canonical JSON form.
std::string config_hash(const GenConfig& c);

inline constexpr const char* kGeneratorVersion = "mt19937_64/box-muller/v1";

struct SyntheticInstance {
  ModalityEmbeddings embeddings;
  int label = kLabelReal;
  // Which modality carries the flipped sign, if any. Kept for analysis only.
  int conflict_modality = -1;
};

struct Dataset {
  GenConfig config;
  std::vector<SyntheticInstance> samples;
  std::array<std::vector<double>, kModalityCount> directions;
};

std::array<std::vector<double>, kModalityCount> signal_directions(const GenConfig& cfg);

SyntheticInstance generate_instance(const GenConfig& cfg, const std::array<std::vector<double>, kModalityCount>& dirs,
                                    std::size_t index);

Dataset generate(const GenConfig& cfg);

struct OracleEstimate {
  double accuracy = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

// Bayes-optimal accuracy under the generative model, by Monte-Carlo over
// n_mc fresh samples drawn from a stream independent of cfg.seed's dataset.
OracleEstimate bayes_oracle(const GenConfig& cfg, std::size_t n_mc);

// Log-likelihood ratio log p(x | fake) - log p(x | real) for one instance.
double posterior_log_odds(const GenConfig& cfg, const std::array<std::vector<double>, kModalityCount>& dirs,
                          const SyntheticInstance& inst);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Index-order split into consecutive blocks.
Split split_by_ratio(std::size_t n, const std::array<double, 3>& ratios);

// k consecutive folds; the first n % k folds get one extra element.
std::vector<std::vector<std::size_t>> split_kfold(std::size_t n, std::size_t k);

// Fold `fold` as test, the rest as train; val is empty.
Split kfold_split(std::size_t n, std::size_t k, std::size_t fold);

// JSON-lines: a header line {format, version, generator, config, config_hash}
// followed by one line per instance.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace tpareto
