// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tpareto/rng.hpp"

namespace tpareto {

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ModelConfig: " + m); };
  if (input_dim == 0 || d == 0 || d_f == 0) fail("dimensions must be positive");
  if (heads == 0 || d % heads != 0) fail("d must be divisible by heads");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (head_tokens == 0 || d_f % head_tokens != 0) fail("d_f must be divisible by head_tokens");
  if (depth < 1 || depth > 3) fail("depth must be 1, 2 or 3");
}

std::vector<double> aggregate_comments(std::span<const std::vector<double>> comments, std::span<const long> like_counts,
                                       std::size_t dim) {
  if (comments.size() != like_counts.size())
    throw std::invalid_argument("aggregate_comments: " + std::to_string(comments.size()) + " comments but " +
                                std::to_string(like_counts.size()) + " like counts");
  std::vector<double> out(dim, 0.0);
  if (comments.empty()) return out;
  std::vector<double> w(comments.size());
  double total = 0.0;
  for (std::size_t i = 0; i < comments.size(); ++i) {
    if (like_counts[i] < 0) throw std::invalid_argument("aggregate_comments: negative like count");
    if (comments[i].size() != dim) throw std::invalid_argument("aggregate_comments: comment width mismatch");
    w[i] = std::log1p(static_cast<double>(like_counts[i])) + 1.0;
    total += w[i];
  }
  for (std::size_t i = 0; i < comments.size(); ++i)
    for (std::size_t j = 0; j < dim; ++j) out[j] += (w[i] / total) * comments[i][j];
  return out;
}

namespace {

void append_rows(std::vector<double>& dst, const std::vector<std::vector<double>>& rows, std::size_t dim,
                 const char* what) {
  for (const auto& r : rows) {
    if (r.size() != dim) throw std::invalid_argument(std::string("make_batch: ") + what + " vector width mismatch");
    dst.insert(dst.end(), r.begin(), r.end());
  }
}

}  // namespace

Batch make_batch(std::span<const ModalityEmbeddings* const> samples, std::span<const int> labels,
                 std::span<const std::size_t> sample_ids) {
  if (samples.empty()) throw std::invalid_argument("make_batch: empty batch");
  if (labels.size() != samples.size()) throw std::invalid_argument("make_batch: label count mismatch");
  const ModalityEmbeddings& first = *samples.front();
  if (first.text.empty() || first.audio.empty()) throw std::invalid_argument("make_batch: empty text or audio sequence");
  if (first.images.empty()) throw std::invalid_argument("make_batch: empty image set");
  const std::size_t dim = first.text.front().size();
  const bool with_publisher = first.publisher.has_value();

  Batch b;
  b.size = samples.size();
  b.text_len = first.text.size();
  b.audio_len = first.audio.size();
  b.image_count = first.images.size();
  b.extra_count = with_publisher ? 2 : 1;
  b.labels.assign(labels.begin(), labels.end());
  if (sample_ids.empty()) {
    for (std::size_t i = 0; i < samples.size(); ++i) b.sample_ids.push_back(i);
  } else {
    b.sample_ids.assign(sample_ids.begin(), sample_ids.end());
  }

  std::vector<double> text, audio, images, extra;
  for (const ModalityEmbeddings* s : samples) {
    if (s->text.size() != b.text_len || s->audio.size() != b.audio_len || s->images.size() != b.image_count)
      throw std::invalid_argument("make_batch: samples have different sequence lengths");
    if (s->publisher.has_value() != with_publisher)
      throw std::invalid_argument("make_batch: publisher vector present in some samples only");
    append_rows(text, s->text, dim, "text");
    append_rows(audio, s->audio, dim, "audio");
    append_rows(images, s->images, dim, "image");
    auto agg = aggregate_comments(s->comments, s->like_counts, dim);
    extra.insert(extra.end(), agg.begin(), agg.end());
    if (with_publisher) {
      if (s->publisher->size() != dim) throw std::invalid_argument("make_batch: publisher width mismatch");
      extra.insert(extra.end(), s->publisher->begin(), s->publisher->end());
    }
  }
  b.text = Tensor::constant({b.size * b.text_len, dim}, std::move(text));
  b.audio = Tensor::constant({b.size * b.audio_len, dim}, std::move(audio));
  b.images = Tensor::constant({b.size * b.image_count, dim}, std::move(images));
  b.extra = Tensor::constant({b.size * b.extra_count, dim}, std::move(extra));
  return b;
}

namespace {

// Multi-head cross-attention: queries from `query`, keys and values from
// `context`. Parameters are `<prefix>.wq/.wk/.wv/.wo`, all d x d.
AttentionOutput attention(const Tensor& query, const Tensor& context, std::size_t batch, const ParameterGroup& g,
                          const std::string& prefix, std::size_t heads) {
  const Tensor q = matmul(query, g.get(prefix + ".wq"));
  const Tensor k = matmul(context, g.get(prefix + ".wk"));
  const Tensor v = matmul(context, g.get(prefix + ".wv"));
  const std::size_t width = q.cols();
  const std::size_t dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionOutput out;
  std::vector<Tensor> head_out;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
    Tensor p = softmax(scale(batched_scores(qh, kh, batch), inv_sqrt), 1);
    head_out.push_back(batched_mix(p, vh, batch));
    out.probs.push_back(std::move(p));
  }
  Tensor joined = heads == 1 ? head_out.front() : concat_cols(head_out);
  out.out = matmul(joined, g.get(prefix + ".wo"));
  return out;
}

Tensor dense(const Tensor& x, const ParameterGroup& g, const std::string& prefix) {
  return add_row(matmul(x, g.get(prefix + ".w")), g.get(prefix + ".b"));
}

void append(std::vector<Tensor>& dst, std::vector<Tensor> src) {
  for (auto& t : src) dst.push_back(std::move(t));
}

void require_rows(const Tensor& t, std::size_t batch, const char* what) {
  if (t.rows() == 0 || batch == 0 || t.rows() % batch != 0 || t.rows() / batch == 0)
    throw std::invalid_argument(std::string(what) + ": sequence must be non-empty and stacked per sample");
}

}  // namespace

Level1Output fuse_level1(const Tensor& text, const Tensor& audio, std::size_t batch, const ParameterGroup& theta1,
                         const ModelConfig& cfg) {
  require_rows(text, batch, "fuse_level1 text");
  require_rows(audio, batch, "fuse_level1 audio");
  const Tensor t = matmul(text, theta1.get("text_proj"));
  const Tensor a = matmul(audio, theta1.get("audio_proj"));
  auto t_from_a = attention(t, a, batch, theta1, "text_from_audio", cfg.heads);
  auto a_from_t = attention(a, t, batch, theta1, "audio_from_text", cfg.heads);

  Level1Output out;
  out.enhanced_text = add(t, t_from_a.out);
  out.enhanced_audio = add(a, a_from_t.out);
  const Tensor pooled[] = {segment_mean(out.enhanced_text, text.rows() / batch),
                           segment_mean(out.enhanced_audio, audio.rows() / batch)};
  out.f1 = tanh(dense(concat_cols(pooled), theta1, "f1"));
  append(out.attention, std::move(t_from_a.probs));
  append(out.attention, std::move(a_from_t.probs));
  return out;
}

Level2Output fuse_level2(const Tensor& enhanced_text, const Tensor& enhanced_audio, const Tensor& images,
                         std::size_t batch, const ParameterGroup& theta2, const ModelConfig& cfg) {
  require_rows(images, batch, "fuse_level2 images");
  const std::size_t lt = enhanced_text.rows() / batch;
  const std::size_t la = enhanced_audio.rows() / batch;
  const std::size_t nv = images.rows() / batch;
  const Tensor v = matmul(images, theta2.get("image_proj"));

  auto img_from_text = attention(v, enhanced_text, batch, theta2, "image_from_text", cfg.heads);
  auto img_from_audio = attention(v, enhanced_audio, batch, theta2, "image_from_audio", cfg.heads);
  auto text_from_img = attention(enhanced_text, v, batch, theta2, "text_from_image", cfg.heads);
  auto audio_from_img = attention(enhanced_audio, v, batch, theta2, "audio_from_image", cfg.heads);

  Level2Output out;
  out.further_text = add(enhanced_text, text_from_img.out);
  out.further_audio = add(enhanced_audio, audio_from_img.out);

  // Each image feature is scored by the energy its cross-attention delivered;
  // a modality with nothing to contribute scores zero.
  const double inv_d = 1.0 / static_cast<double>(cfg.d);
  auto energy = [&](const Tensor& delivered) {
    const Tensor z = matmul(segment_mean(delivered, nv), theta2.get("adapt.w"));
    return scale(row_sum(mul(z, z)), inv_d);
  };
  const Tensor scores[] = {energy(img_from_text.out), energy(img_from_audio.out)};
  out.adaptive_weights = softmax(concat_cols(scores), 1);

  const Tensor image_t = segment_mean(add(v, img_from_text.out), nv);
  const Tensor image_a = segment_mean(add(v, img_from_audio.out), nv);
  out.fused_image = add(scale_segments(image_t, slice_cols(out.adaptive_weights, 0, 1), 1),
                        scale_segments(image_a, slice_cols(out.adaptive_weights, 1, 2), 1));

  const Tensor pooled[] = {segment_mean(out.further_text, lt), segment_mean(out.further_audio, la), out.fused_image};
  out.f2 = tanh(dense(concat_cols(pooled), theta2, "f2"));
  for (auto* a : {&img_from_text, &img_from_audio, &text_from_img, &audio_from_img}) append(out.attention, std::move(a->probs));
  return out;
}

Level3Output fuse_level3(const Level2Output& level2, const Tensor& extra, std::size_t batch,
                         const ParameterGroup& theta3, const ModelConfig& cfg) {
  require_rows(extra, batch, "fuse_level3 extra");
  const std::size_t lt = level2.further_text.rows() / batch;
  const std::size_t la = level2.further_audio.rows() / batch;
  const Tensor pooled[] = {segment_mean(level2.further_text, lt), segment_mean(level2.further_audio, la),
                           level2.fused_image};
  // Three main tokens per sample: text, audio, image.
  const Tensor main = reshape(concat_cols(pooled), {batch * 3, cfg.d});
  const Tensor e = matmul(extra, theta3.get("extra_proj"));
  auto main_from_extra = attention(main, e, batch, theta3, "main_from_extra", cfg.heads);

  const Tensor logits[] = {matmul(segment_mean(main, 3), theta3.get("gate.main")),
                           matmul(segment_mean(main_from_extra.out, 3), theta3.get("gate.extra"))};
  Level3Output out;
  out.gate = softmax(add_row(concat_cols(logits), theta3.get("gate.b")), 1);
  const Tensor fused = add(main, scale_segments(main_from_extra.out, slice_cols(out.gate, 1, 2), 3));
  out.f3 = tanh(dense(reshape(fused, {batch, 3 * cfg.d}), theta3, "f3"));
  out.attention = std::move(main_from_extra.probs);
  return out;
}

Tensor classify(const Tensor& features, const ParameterGroup& theta_cls, const ModelConfig& cfg) {
  if (features.cols() != cfg.d_f)
    throw std::invalid_argument("classify: feature width " + std::to_string(features.cols()) + " != d_f " +
                                std::to_string(cfg.d_f));
  const std::size_t batch = features.rows();
  const std::size_t tok = cfg.d_f / cfg.head_tokens;
  const Tensor x = reshape(features, {batch * cfg.head_tokens, tok});
  auto self = attention(x, x, batch, theta_cls, "attn", 1);
  const Tensor h = add(x, self.out);
  return dense(segment_mean(h, cfg.head_tokens), theta_cls, "out");
}

const Tensor& ForwardResult::features(int level) const {
  switch (level) {
    case 1:
      if (level1) return level1->f1;
      break;
    case 2:
      if (level2) return level2->f2;
      break;
    case 3:
      if (level3) return level3->f3;
      break;
    default: break;
  }
  throw std::invalid_argument("forward result has no level-" + std::to_string(level) + " features");
}

// ---- layout ------------------------------------------------------------------

namespace {

Tensor glorot(Rng& rng, std::size_t rows, std::size_t cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::parameter({rows, cols}, std::move(v));
}

Tensor zero_param(std::size_t rows, std::size_t cols) {
  return Tensor::parameter({rows, cols}, std::vector<double>(rows * cols, 0.0));
}

void add_attention(ParameterGroup& g, Rng& rng, const std::string& prefix, std::size_t width) {
  for (const char* w : {".wq", ".wk", ".wv", ".wo"}) g.add(prefix + w, glorot(rng, width, width));
}

}  // namespace

std::vector<ParameterGroup> build_layout(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t in = cfg.input_dim, d = cfg.d, df = cfg.d_f;
  std::vector<ParameterGroup> groups;

  {
    Rng rng(mix64(seed, fnv1a("theta1")));
    ParameterGroup g(GroupId::Theta1);
    g.add("text_proj", glorot(rng, in, d));
    g.add("audio_proj", glorot(rng, in, d));
    add_attention(g, rng, "text_from_audio", d);
    add_attention(g, rng, "audio_from_text", d);
    g.add("f1.w", glorot(rng, 2 * d, df));
    g.add("f1.b", zero_param(1, df));
    groups.push_back(std::move(g));
  }
  if (cfg.depth >= 2) {
    Rng rng(mix64(seed, fnv1a("theta2")));
    ParameterGroup g(GroupId::Theta2);
    g.add("image_proj", glorot(rng, in, d));
    add_attention(g, rng, "image_from_text", d);
    add_attention(g, rng, "image_from_audio", d);
    add_attention(g, rng, "text_from_image", d);
    add_attention(g, rng, "audio_from_image", d);
    g.add("adapt.w", glorot(rng, d, d));
    g.add("f2.w", glorot(rng, 3 * d, df));
    g.add("f2.b", zero_param(1, df));
    groups.push_back(std::move(g));
  }
  if (cfg.depth >= 3) {
    Rng rng(mix64(seed, fnv1a("theta3")));
    ParameterGroup g(GroupId::Theta3);
    g.add("extra_proj", glorot(rng, in, d));
    add_attention(g, rng, "main_from_extra", d);
    g.add("gate.main", glorot(rng, d, 1));
    g.add("gate.extra", glorot(rng, d, 1));
    g.add("gate.b", zero_param(1, 2));
    g.add("f3.w", glorot(rng, 3 * d, df));
    g.add("f3.b", zero_param(1, df));
    groups.push_back(std::move(g));
  }
  {
    Rng rng(mix64(seed, fnv1a("theta_cls")));
    ParameterGroup g(GroupId::ThetaCls);
    const std::size_t tok = df / cfg.head_tokens;
    add_attention(g, rng, "attn", tok);
    g.add("out.w", glorot(rng, tok, cfg.num_classes));
    g.add("out.b", zero_param(1, cfg.num_classes));
    groups.push_back(std::move(g));
  }
  return groups;
}

// ---- model -------------------------------------------------------------------

HierFusionModel::HierFusionModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg), groups_(build_layout(cfg, seed)) {}

HierFusionModel::HierFusionModel(ModelConfig cfg, std::vector<ParameterGroup> groups) : cfg_(cfg) {
  const auto layout = build_layout(cfg_, 0);
  if (groups.size() != layout.size())
    throw std::invalid_argument("model: expected " + std::to_string(layout.size()) + " parameter groups, got " +
                                std::to_string(groups.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& want = layout[i];
    const auto& got = groups[i];
    if (want.id() != got.id()) throw std::invalid_argument("model: group order mismatch at " + to_string(got.id()));
    if (want.tensors().size() != got.tensors().size())
      throw std::invalid_argument("model: tensor count mismatch in " + to_string(got.id()));
    for (std::size_t j = 0; j < want.tensors().size(); ++j) {
      const auto& a = want.tensors()[j];
      const auto& b = got.tensors()[j];
      if (a.name != b.name || a.tensor.shape() != b.tensor.shape())
        throw std::invalid_argument("model: tensor '" + b.name + "' does not match layout entry '" + a.name + "'");
    }
  }
  groups_ = std::move(groups);
}

bool HierFusionModel::has_group(GroupId id) const {
  return std::any_of(groups_.begin(), groups_.end(), [id](const ParameterGroup& g) { return g.id() == id; });
}

const ParameterGroup& HierFusionModel::group(GroupId id) const {
  for (const auto& g : groups_)
    if (g.id() == id) return g;
  throw std::out_of_range("model has no group " + to_string(id));
}

void HierFusionModel::set_group(ParameterGroup group) {
  for (auto& g : groups_) {
    if (g.id() == group.id()) {
      if (g.dim() != group.dim()) throw std::invalid_argument("set_group: dimension mismatch for " + to_string(g.id()));
      g = std::move(group);
      return;
    }
  }
  throw std::out_of_range("model has no group " + to_string(group.id()));
}

HierFusionModel HierFusionModel::with_group(ParameterGroup group) const {
  HierFusionModel copy = *this;
  copy.set_group(std::move(group));
  return copy;
}

std::size_t HierFusionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.dim();
  return n;
}

std::vector<GroupId> HierFusionModel::group_ids() const {
  std::vector<GroupId> ids;
  for (const auto& g : groups_) ids.push_back(g.id());
  return ids;
}

ForwardResult HierFusionModel::forward(const Batch& batch, int up_to_level) const {
  if (up_to_level < 1 || up_to_level > cfg_.depth)
    throw std::invalid_argument("forward: level " + std::to_string(up_to_level) + " outside 1.." +
                                std::to_string(cfg_.depth));
  ForwardResult r;
  r.level1 = fuse_level1(batch.text, batch.audio, batch.size, group(GroupId::Theta1), cfg_);
  if (up_to_level >= 2)
    r.level2 = fuse_level2(r.level1->enhanced_text, r.level1->enhanced_audio, batch.images, batch.size,
                           group(GroupId::Theta2), cfg_);
  if (up_to_level >= 3) r.level3 = fuse_level3(*r.level2, batch.extra, batch.size, group(GroupId::Theta3), cfg_);
  return r;
}

Tensor HierFusionModel::logits(const Batch& batch, int level) const {
  const ForwardResult r = forward(batch, level);
  return classify(r.features(level), group(GroupId::ThetaCls), cfg_);
}

Tensor HierFusionModel::level_loss(const Batch& batch, int level) const {
  return cross_entropy(logits(batch, level), batch.labels);
}

LevelLosses HierFusionModel::level_losses(const Batch& batch) const {
  const ForwardResult r = forward(batch, cfg_.depth);
  LevelLosses out;
  for (int l = 1; l <= cfg_.depth; ++l)
    out.losses.push_back(cross_entropy(classify(r.features(l), group(GroupId::ThetaCls), cfg_), batch.labels));
  return out;
}

}  // namespace tpareto
