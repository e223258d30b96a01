// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy hierarchical fusion network.
//
//   Module I   (theta1)    text <-> audio two-stream cross-attention -> F1
//   Module II  (theta2)    images cross-attend to text and to audio; the two
//                          enhanced image features are mixed by adaptive
//                          weights; text/audio attend to images        -> F2
//   Module III (theta3)    main tokens attend to extra features; a softmax
//                          gate scales the extra pathway               -> F3
//   Head       (theta_cls) self-attention over F split into tokens, then a
//                          linear readout. Shared by F1, F2 and F3.
//
// Samples in a batch are stacked by rows, so every modality tensor has
// batch * length rows. All pooling is mean pooling.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tpareto/tensor.hpp"

namespace tpareto {

struct ModelConfig {
  std::size_t input_dim = 16;  // raw feature width of every modality
  std::size_t d = 32;
  std::size_t d_f = 64;
  std::size_t heads = 2;
  std::size_t num_classes = 2;
  std::size_t head_tokens = 4;  // F is split into this many tokens in the head
  int depth = 3;                // number of fusion modules built (1..3)

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ModalityEmbeddings {
  std::vector<std::vector<double>> text;
  std::vector<std::vector<double>> audio;
  std::vector<std::vector<double>> images;
  std::vector<std::vector<double>> comments;
  std::vector<long> like_counts;
  std::optional<std::vector<double>> publisher;
};

// Like-weighted average of comments with weights log(1 + likes) + 1. An empty
// list yields the zero vector of width `dim`.
std::vector<double> aggregate_comments(std::span<const std::vector<double>> comments, std::span<const long> like_counts,
                                       std::size_t dim);

struct Batch {
  std::size_t size = 0;
  std::size_t text_len = 0;
  std::size_t audio_len = 0;
  std::size_t image_count = 0;
  std::size_t extra_count = 0;
  Tensor text;    // (size * text_len) x input_dim
  Tensor audio;   // (size * audio_len) x input_dim
  Tensor images;  // (size * image_count) x input_dim
  Tensor extra;   // (size * extra_count) x input_dim; aggregated comments, then publisher
  std::vector<int> labels;
  std::vector<std::size_t> sample_ids;
};

// All samples must share sequence lengths and the presence of a publisher
// vector. Throws std::invalid_argument otherwise.
Batch make_batch(std::span<const ModalityEmbeddings* const> samples, std::span<const int> labels,
                 std::span<const std::size_t> sample_ids = {});

struct AttentionOutput {
  Tensor out;                  // (B * Lq) x d, before any residual
  std::vector<Tensor> probs;   // one (B * Lq) x Lk map per head
};

struct Level1Output {
  Tensor enhanced_text;
  Tensor enhanced_audio;
  Tensor f1;  // B x d_f
  std::vector<Tensor> attention;
};

struct Level2Output {
  Tensor further_text;
  Tensor further_audio;
  Tensor fused_image;       // B x d
  Tensor adaptive_weights;  // B x 2: (text-enhanced, audio-enhanced) image weights
  Tensor f2;
  std::vector<Tensor> attention;
};

struct Level3Output {
  Tensor f3;
  Tensor gate;  // B x 2: (main, extra)
  std::vector<Tensor> attention;
};

// Every op below takes the batch size so it can split stacked rows.

Level1Output fuse_level1(const Tensor& text, const Tensor& audio, std::size_t batch, const ParameterGroup& theta1,
                         const ModelConfig& cfg);

Level2Output fuse_level2(const Tensor& enhanced_text, const Tensor& enhanced_audio, const Tensor& images,
                         std::size_t batch, const ParameterGroup& theta2, const ModelConfig& cfg);

// `extra` may be a block of zero vectors (no comments and no publisher).
Level3Output fuse_level3(const Level2Output& level2, const Tensor& extra, std::size_t batch,
                         const ParameterGroup& theta3, const ModelConfig& cfg);

// F is B x d_f; returns B x num_classes logits.
Tensor classify(const Tensor& features, const ParameterGroup& theta_cls, const ModelConfig& cfg);

struct ForwardResult {
  std::optional<Level1Output> level1;
  std::optional<Level2Output> level2;
  std::optional<Level3Output> level3;

  const Tensor& features(int level) const;
};

struct LevelLosses {
  std::vector<Tensor> losses;  // index l-1 holds the level-l loss

  const Tensor& all_modal() const { return losses.back(); }
};

class HierFusionModel {
 public:
  // Glorot-uniform weights, zero biases.
  HierFusionModel(ModelConfig cfg, std::uint64_t seed);
  // Takes ownership of existing groups (e.g. from a checkpoint); shapes are
  // validated against a freshly built layout.
  HierFusionModel(ModelConfig cfg, std::vector<ParameterGroup> groups);

  const ModelConfig& config() const { return cfg_; }
  int depth() const { return cfg_.depth; }
  const std::vector<ParameterGroup>& groups() const { return groups_; }
  bool has_group(GroupId id) const;
  const ParameterGroup& group(GroupId id) const;
  void set_group(ParameterGroup group);
  HierFusionModel with_group(ParameterGroup group) const;
  std::size_t parameter_count() const;

  // Runs modules 1..up_to_level.
  ForwardResult forward(const Batch& batch, int up_to_level) const;
  Tensor logits(const Batch& batch, int level) const;
  Tensor level_loss(const Batch& batch, int level) const;
  LevelLosses level_losses(const Batch& batch) const;

  // Group ids in this model, in storage order (modules first, head last).
  std::vector<GroupId> group_ids() const;

 private:
  ModelConfig cfg_;
  std::vector<ParameterGroup> groups_;
};

// Names and shapes of every tensor a model with this config owns, grouped.
std::vector<ParameterGroup> build_layout(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace tpareto
