// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "tpareto/rng.hpp"

namespace tpareto {

namespace {

constexpr const char* kModalityNames[kModalityCount] = {"text", "audio", "image", "extra"};

// Smallest sigma used in likelihoods, so sigma = 0 stays finite.
constexpr double kSigmaFloor = 1e-6;

std::vector<double> signal_vector(Rng& rng, const std::vector<double>& dir, double amplitude, double sigma) {
  std::vector<double> v(dir.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = amplitude * dir[i] + sigma * rng.normal();
  return v;
}

std::vector<std::vector<double>> signal_rows(Rng& rng, std::size_t count, const std::vector<double>& dir,
                                             double amplitude, double sigma) {
  std::vector<std::vector<double>> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) rows.push_back(signal_vector(rng, dir, amplitude, sigma));
  return rows;
}

int label_for(std::uint64_t stream, std::size_t index) {
  // Labels are assigned in pairs (2m, 2m+1): one fake, one real, order by coin.
  Rng coin(mix64(stream, fnv1a("label") ^ static_cast<std::uint64_t>(index / 2)));
  const bool fake_first = (coin.next() & 1u) != 0;
  const bool first = index % 2 == 0;
  return (first == fake_first) ? kLabelFake : kLabelReal;
}

SyntheticInstance draw_instance(const GenConfig& cfg, const std::array<std::vector<double>, kModalityCount>& dirs,
                                std::uint64_t stream, std::size_t index) {
  SyntheticInstance inst;
  inst.label = label_for(stream, index);
  const double y = inst.label == kLabelFake ? 1.0 : -1.0;

  Rng rng(mix64(mix64(stream, fnv1a("sample")), static_cast<std::uint64_t>(index)));
  std::array<double, kModalityCount> sign{y, y, y, y};
  if (rng.uniform() < cfg.conflict_rate) {
    inst.conflict_modality = static_cast<int>(rng.integer(0, kModalityCount - 1));
    sign[static_cast<std::size_t>(inst.conflict_modality)] = -y;
  }
  auto amp = [&](Modality m) {
    const auto i = static_cast<std::size_t>(m);
    return cfg.informativeness[i] * sign[i];
  };
  const double sigma = cfg.noise_sigma;
  auto& e = inst.embeddings;
  e.text = signal_rows(rng, cfg.text_len, dirs[0], amp(Modality::Text), sigma);
  e.audio = signal_rows(rng, cfg.audio_len, dirs[1], amp(Modality::Audio), sigma);
  e.images = signal_rows(rng, cfg.image_count, dirs[2], amp(Modality::Image), sigma);
  const auto n_comments = static_cast<std::size_t>(
      rng.integer(static_cast<std::int64_t>(cfg.comments_min), static_cast<std::int64_t>(cfg.comments_max)));
  e.comments = signal_rows(rng, n_comments, dirs[3], amp(Modality::Extra), sigma);
  for (std::size_t c = 0; c < n_comments; ++c) {
    double u = rng.uniform();
    while (u <= 0.0) u = rng.uniform();
    const double raw = cfg.like_scale * (std::pow(u, -1.0 / cfg.like_tail) - 1.0);
    e.like_counts.push_back(static_cast<long>(std::min(std::floor(raw), 1e12)));
  }
  if (cfg.include_publisher) e.publisher = signal_vector(rng, dirs[3], amp(Modality::Extra), sigma);
  return inst;
}

}  // namespace

void GenConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("GenConfig: " + m); };
  for (std::size_t i = 0; i < kModalityCount; ++i)
    if (!(informativeness[i] >= 0.0 && informativeness[i] <= 1.0))
      fail(std::string("informativeness.") + kModalityNames[i] + " must be in [0,1]");
  if (!(conflict_rate >= 0.0 && conflict_rate <= 1.0)) fail("conflict_rate must be in [0,1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (text_len == 0 || audio_len == 0 || image_count == 0) fail("sequence lengths must be >= 1");
  if (comments_min > comments_max) fail("comments_min > comments_max");
  if (!(like_tail > 0.0) || !(like_scale >= 0.0)) fail("like distribution parameters must be positive");
}

void to_json(nlohmann::json& j, const GenConfig& c) {
  j = nlohmann::json{{"n_samples", c.n_samples},
                     {"seed", c.seed},
                     {"informativeness",
                      {{"text", c.informativeness[0]},
                       {"audio", c.informativeness[1]},
                       {"image", c.informativeness[2]},
                       {"extra", c.informativeness[3]}}},
                     {"conflict_rate", c.conflict_rate},
                     {"noise_sigma", c.noise_sigma},
                     {"feature_dim", c.feature_dim},
                     {"text_len", c.text_len},
                     {"audio_len", c.audio_len},
                     {"image_count", c.image_count},
                     {"comments_min", c.comments_min},
                     {"comments_max", c.comments_max},
                     {"like_tail", c.like_tail},
                     {"like_scale", c.like_scale},
                     {"include_publisher", c.include_publisher}};
}

void from_json(const nlohmann::json& j, GenConfig& c) {
  GenConfig d;
  for (const auto& [key, value] : j.items()) {
    if (key == "n_samples") d.n_samples = value.get<std::size_t>();
    else if (key == "seed") d.seed = value.get<std::uint64_t>();
    else if (key == "informativeness") {
      for (const auto& [m, v] : value.items()) {
        auto it = std::find_if(std::begin(kModalityNames), std::end(kModalityNames),
                               [&](const char* n) { return m == n; });
        if (it == std::end(kModalityNames)) throw std::invalid_argument("GenConfig: unknown modality '" + m + "'");
        d.informativeness[static_cast<std::size_t>(it - std::begin(kModalityNames))] = v.get<double>();
      }
    } else if (key == "conflict_rate") d.conflict_rate = value.get<double>();
    else if (key == "noise_sigma") d.noise_sigma = value.get<double>();
    else if (key == "feature_dim") d.feature_dim = value.get<std::size_t>();
    else if (key == "text_len") d.text_len = value.get<std::size_t>();
    else if (key == "audio_len") d.audio_len = value.get<std::size_t>();
    else if (key == "image_count") d.image_count = value.get<std::size_t>();
    else if (key == "comments_min") d.comments_min = value.get<std::size_t>();
    else if (key == "comments_max") d.comments_max = value.get<std::size_t>();
    else if (key == "like_tail") d.like_tail = value.get<double>();
    else if (key == "like_scale") d.like_scale = value.get<double>();
    else if (key == "include_publisher") d.include_publisher = value.get<bool>();
    else throw std::invalid_argument("GenConfig: unknown key '" + key + "'");
  }
  d.validate();
  c = d;
}

std::string config_hash(const GenConfig& c) {
  const nlohmann::json j = c;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

std::array<std::vector<double>, kModalityCount> signal_directions(const GenConfig& cfg) {
  Rng rng(mix64(cfg.seed, fnv1a("directions")));
  std::array<std::vector<double>, kModalityCount> dirs;
  for (auto& dir : dirs) {
    double norm = 0.0;
    while (norm < 1e-8) {
      dir.assign(cfg.feature_dim, 0.0);
      norm = 0.0;
      for (double& x : dir) {
        x = rng.normal();
        norm += x * x;
      }
      norm = std::sqrt(norm);
    }
    for (double& x : dir) x /= norm;
  }
  return dirs;
}

SyntheticInstance generate_instance(const GenConfig& cfg, const std::array<std::vector<double>, kModalityCount>& dirs,
                                    std::size_t index) {
  return draw_instance(cfg, dirs, cfg.seed, index);
}

Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.config = cfg;
  ds.directions = signal_directions(cfg);
  ds.samples.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) ds.samples.push_back(draw_instance(cfg, ds.directions, cfg.seed, i));
  return ds;
}

double posterior_log_odds(const GenConfig& cfg, const std::array<std::vector<double>, kModalityCount>& dirs,
                          const SyntheticInstance& inst) {
  const double sigma = std::max(cfg.noise_sigma, kSigmaFloor);
  const double inv_var = 1.0 / (sigma * sigma);
  const auto& e = inst.embeddings;

  // a_m = rho_m <sum of modality-m vectors, mu_m> / sigma^2; the modality's
  // log-likelihood of sign s is s * a_m up to terms independent of s.
  std::array<double, kModalityCount> a{};
  auto project = [&](const std::vector<std::vector<double>>& rows, std::size_t m) {
    double s = 0.0;
    for (const auto& r : rows)
      for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * dirs[m][i];
    return s;
  };
  a[0] = project(e.text, 0);
  a[1] = project(e.audio, 1);
  a[2] = project(e.images, 2);
  a[3] = project(e.comments, 3);
  if (e.publisher)
    for (std::size_t i = 0; i < e.publisher->size(); ++i) a[3] += (*e.publisher)[i] * dirs[3][i];
  double total = 0.0;
  for (std::size_t m = 0; m < kModalityCount; ++m) {
    a[m] *= cfg.informativeness[m] * inv_var;
    total += a[m];
  }

  const double c = cfg.conflict_rate;
  auto log_lik = [&](double y) {
    // log[(1-c) e^{y A} + c/4 sum_m e^{y (A - 2 a_m)}]
    std::vector<double> terms;
    if (c < 1.0) terms.push_back(std::log1p(-c) + y * total);
    if (c > 0.0)
      for (std::size_t m = 0; m < kModalityCount; ++m)
        terms.push_back(std::log(c / kModalityCount) + y * (total - 2.0 * a[m]));
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s);
  };
  return log_lik(1.0) - log_lik(-1.0);
}

OracleEstimate bayes_oracle(const GenConfig& cfg, std::size_t n_mc) {
  cfg.validate();
  if (n_mc == 0) throw std::invalid_argument("bayes_oracle: n_mc must be positive");
  const auto dirs = signal_directions(cfg);
  const std::uint64_t stream = mix64(cfg.seed, fnv1a("bayes-oracle"));
  double correct = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const SyntheticInstance inst = draw_instance(cfg, dirs, stream, i);
    const double lo = posterior_log_odds(cfg, dirs, inst);
    if (lo == 0.0)
      correct += 0.5;
    else if ((lo > 0.0) == (inst.label == kLabelFake))
      correct += 1.0;
  }
  OracleEstimate est;
  est.samples = n_mc;
  est.accuracy = correct / static_cast<double>(n_mc);
  est.standard_error = std::sqrt(est.accuracy * (1.0 - est.accuracy) / static_cast<double>(n_mc));
  return est;
}

Split split_by_ratio(std::size_t n, const std::array<double, 3>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split: ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");
  if (n == 0) throw std::invalid_argument("split: empty dataset");
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(ratios[0] * n)));
  const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));
  const std::size_t sizes[3] = {n_train, n_val, n - n_train - n_val};
  static constexpr const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i)
    if (ratios[i] > 0.0 && sizes[i] == 0)
      throw std::invalid_argument(std::string("split: ") + names[i] + " split is empty for n=" + std::to_string(n));
  Split s;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) s.train.push_back(idx++);
  for (std::size_t i = 0; i < sizes[1]; ++i) s.val.push_back(idx++);
  for (std::size_t i = 0; i < sizes[2]; ++i) s.test.push_back(idx++);
  return s;
}

std::vector<std::vector<std::size_t>> split_kfold(std::size_t n, std::size_t k) {
  if (k < 2) throw std::invalid_argument("kfold: k must be >= 2");
  if (n < k) throw std::invalid_argument("kfold: fewer samples than folds leaves an empty split");
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t idx = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) folds[f].push_back(idx++);
  }
  return folds;
}

Split kfold_split(std::size_t n, std::size_t k, std::size_t fold) {
  auto folds = split_kfold(n, k);
  if (fold >= k) throw std::invalid_argument("kfold: fold index out of range");
  Split s;
  s.test = folds[fold];
  for (std::size_t f = 0; f < k; ++f)
    if (f != fold) s.train.insert(s.train.end(), folds[f].begin(), folds[f].end());
  return s;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  nlohmann::json header{{"format", "tpareto-dataset"},
                        {"version", 1},
                        {"generator", kGeneratorVersion},
                        {"config", ds.config},
                        {"config_hash", config_hash(ds.config)}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const auto& e = s.embeddings;
    nlohmann::json j{{"id", i},
                     {"label", s.label == kLabelFake ? "fake" : "real"},
                     {"conflict_modality", s.conflict_modality},
                     {"text", e.text},
                     {"audio", e.audio},
                     {"images", e.images},
                     {"comments", e.comments},
                     {"likes", e.like_counts}};
    j["publisher"] = e.publisher ? nlohmann::json(*e.publisher) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("'" + path + "' is empty");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "tpareto-dataset" || header.value("version", 0) != 1)
    throw std::runtime_error("'" + path + "' is not a version-1 dataset file");
  Dataset ds;
  ds.config = header.at("config").get<GenConfig>();
  if (header.at("config_hash").get<std::string>() != config_hash(ds.config))
    throw std::runtime_error("'" + path + "': config hash mismatch");
  ds.directions = signal_directions(ds.config);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    SyntheticInstance s;
    s.label = j.at("label").get<std::string>() == "fake" ? kLabelFake : kLabelReal;
    s.conflict_modality = j.at("conflict_modality").get<int>();
    auto& e = s.embeddings;
    j.at("text").get_to(e.text);
    j.at("audio").get_to(e.audio);
    j.at("images").get_to(e.images);
    j.at("comments").get_to(e.comments);
    j.at("likes").get_to(e.like_counts);
    if (!j.at("publisher").is_null()) e.publisher = j.at("publisher").get<std::vector<double>>();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace tpareto
