// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "tpareto/checkpoint.hpp"
#include "tpareto/rng.hpp"

namespace tpareto {

std::string to_string(Method m) {
  switch (m) {
    case Method::TPareto: return "tpareto";
    case Method::Plain: return "plain";
    case Method::LevelOnly1: return "level-only-1";
    case Method::LevelOnly2: return "level-only-2";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "tpareto") return Method::TPareto;
  if (s == "plain") return Method::Plain;
  if (s == "level-only-1") return Method::LevelOnly1;
  if (s == "level-only-2") return Method::LevelOnly2;
  throw std::invalid_argument("unknown method '" + s + "' (expected tpareto, plain, level-only-1, level-only-2)");
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("ExperimentConfig: " + m); };
  data.validate();
  model.validate();
  if (model.input_dim != data.feature_dim) fail("model.input_dim must equal data.feature_dim");
  if (!std::isfinite(pareto.gamma)) fail("tpareto.gamma must be finite");
  if (!(pareto.k > 0.0)) fail("tpareto.k must be positive");
  if (!(pareto.epsilon_alpha > 0.0)) fail("tpareto.epsilon_alpha must be positive");
  if (pareto.solver.max_iter <= 0 || !(pareto.solver.tol > 0.0)) fail("tpareto.solver settings must be positive");
  if (!(optimizer.lr > 0.0) || !(optimizer.weight_decay >= 0.0)) fail("optimizer lr/weight_decay out of range");
  if (optimizer.batch_size == 0) fail("optimizer.batch_size must be positive");
  if (epochs <= 0) fail("epochs must be positive");
  if (seeds.empty()) fail("seeds must not be empty");
}

namespace {

nlohmann::json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double read_number(const nlohmann::json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return v.get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const TParetoConfig& c) {
  j = nlohmann::json{{"gamma", number_or_inf(c.gamma)},
                     {"k", number_or_inf(c.k)},
                     {"epsilon_alpha", c.epsilon_alpha},
                     {"filter_before_solve", c.filter_before_solve},
                     {"solver", {{"max_iter", c.solver.max_iter}, {"tol", c.solver.tol}, {"away_steps", c.solver.away_steps}}}};
}

void from_json(const nlohmann::json& j, TParetoConfig& c) {
  TParetoConfig d;
  for (const auto& [key, value] : j.items()) {
    if (key == "gamma") d.gamma = read_number(value);
    else if (key == "k") d.k = read_number(value);
    else if (key == "epsilon_alpha") d.epsilon_alpha = value.get<double>();
    else if (key == "filter_before_solve") d.filter_before_solve = value.get<bool>();
    else if (key == "solver") {
      for (const auto& [sk, sv] : value.items()) {
        if (sk == "max_iter") d.solver.max_iter = sv.get<int>();
        else if (sk == "tol") d.solver.tol = sv.get<double>();
        else if (sk == "away_steps") d.solver.away_steps = sv.get<bool>();
        else throw std::invalid_argument("tpareto.solver: unknown key '" + sk + "'");
      }
    } else throw std::invalid_argument("tpareto: unknown key '" + key + "'");
  }
  c = d;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"version", kConfigVersion},
                     {"data", c.data},
                     {"model", c.model},
                     {"tpareto", c.pareto},
                     {"optimizer",
                      {{"lr", c.optimizer.lr},
                       {"weight_decay", c.optimizer.weight_decay},
                       {"batch_size", c.optimizer.batch_size}}},
                     {"epochs", c.epochs},
                     {"patience", c.patience},
                     {"seeds", c.seeds},
                     {"method", to_string(c.method)},
                     {"split", c.split}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  if (j.contains("version") && j.at("version").get<int>() != kConfigVersion)
    throw std::invalid_argument("config version " + j.at("version").dump() + " is not supported (expected " +
                                std::to_string(kConfigVersion) + ")");
  if (j.contains("data")) d.data = j.at("data").get<GenConfig>();
  d.model.input_dim = d.data.feature_dim;
  if (j.contains("model")) {
    nlohmann::json m = j.at("model");
    if (!m.contains("input_dim")) m["input_dim"] = d.data.feature_dim;
    d.model = m.get<ModelConfig>();
  }
  for (const auto& [key, value] : j.items()) {
    if (key == "version" || key == "data" || key == "model") continue;
    if (key == "tpareto") d.pareto = value.get<TParetoConfig>();
    else if (key == "optimizer") {
      for (const auto& [ok, ov] : value.items()) {
        if (ok == "lr") d.optimizer.lr = ov.get<double>();
        else if (ok == "weight_decay") d.optimizer.weight_decay = ov.get<double>();
        else if (ok == "batch_size") d.optimizer.batch_size = ov.get<std::size_t>();
        else throw std::invalid_argument("optimizer: unknown key '" + ok + "'");
      }
    } else if (key == "epochs") d.epochs = value.get<int>();
    else if (key == "patience") d.patience = value.get<int>();
    else if (key == "seeds") d.seeds = value.get<std::vector<std::uint64_t>>();
    else if (key == "method") d.method = method_from_string(value.get<std::string>());
    else if (key == "split") d.split = value.get<std::array<double, 3>>();
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  d.validate();
  c = d;
}

RunSpec run_spec(const ExperimentConfig& cfg) {
  switch (cfg.method) {
    case Method::TPareto: return {3, true, "tpareto"};
    case Method::Plain: return {3, false, "plain"};
    case Method::LevelOnly1: return {1, false, "level-only-1"};
    case Method::LevelOnly2: return {2, false, "level-only-2"};
  }
  throw std::invalid_argument("run_spec: bad method");
}

namespace {

constexpr std::size_t kEvalChunk = 256;

Batch batch_of(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<const ModalityEmbeddings*> samples;
  std::vector<int> labels;
  samples.reserve(idx.size());
  labels.reserve(idx.size());
  for (auto i : idx) {
    samples.push_back(&data.samples[i].embeddings);
    labels.push_back(data.samples[i].label);
  }
  return make_batch(samples, labels, idx);
}

int argmax_row(std::span<const double> row) {
  int best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return best;
}

// Confusion matrices for levels 1..up_to from one forward pass per chunk.
std::vector<ConfusionMatrix> evaluate_levels(const HierFusionModel& model, const Dataset& data,
                                             const std::vector<std::size_t>& idx, int up_to) {
  NoGradGuard no_grad;
  std::vector<std::vector<int>> predictions(static_cast<std::size_t>(up_to));
  std::vector<int> labels;
  for (std::size_t start = 0; start < idx.size(); start += kEvalChunk) {
    const std::size_t end = std::min(idx.size(), start + kEvalChunk);
    const Batch batch = batch_of(data, std::span<const std::size_t>(idx).subspan(start, end - start));
    labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    const ForwardResult fr = model.forward(batch, up_to);
    for (int level = 1; level <= up_to; ++level) {
      const Tensor logits = classify(fr.features(level), model.group(GroupId::ThetaCls), model.config());
      auto& out = predictions[static_cast<std::size_t>(level - 1)];
      for (std::size_t r = 0; r < logits.rows(); ++r)
        out.push_back(argmax_row(logits.data().subspan(r * logits.cols(), logits.cols())));
    }
  }
  std::vector<ConfusionMatrix> out;
  for (const auto& p : predictions) out.push_back(confusion(labels, p));
  return out;
}

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)));
    std::swap(v[i - 1], v[j]);
  }
}

template <typename Fn>
void parallel_for(std::size_t jobs, int threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs, static_cast<std::size_t>(std::max(threads, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

StepCallback step_logger(const RunOptions& options, const RunSpec& spec, std::uint64_t seed,
                         std::shared_ptr<std::ofstream>& sink) {
  if (options.step_log_dir.empty()) return {};
  const std::string path = options.step_log_dir + "/steps_" + spec.method + "_d" + std::to_string(spec.depth) +
                           "_seed" + std::to_string(seed) + ".jsonl";
  sink = std::make_shared<std::ofstream>(path, std::ios::binary);
  if (!*sink) throw std::runtime_error("cannot open step log '" + path + "'");
  return [out = sink](const StepReport& r) { *out << step_report_json(r).dump() << '\n'; };
}

}  // namespace

ConfusionMatrix evaluate_level(const HierFusionModel& model, const Dataset& data, const std::vector<std::size_t>& idx,
                               int level) {
  return evaluate_levels(model, data, idx, level).back();
}

RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed, const RunSpec& spec,
                     const StepCallback& on_step) {
  cfg.validate();
  GenConfig gen = cfg.data;
  gen.seed = cfg.data.seed + seed;
  const Dataset data = generate(gen);
  const Split split = split_by_ratio(data.samples.size(), cfg.split);

  ModelConfig mc = cfg.model;
  mc.depth = spec.depth;
  HierFusionModel model(mc, mix64(seed, fnv1a("model")));
  AdamState optimizer(AdamConfig{cfg.optimizer.lr, 0.9, 0.999, 1e-8, cfg.optimizer.weight_decay});
  const TrainOptions train_options{spec.pareto ? TrainMode::TPareto : TrainMode::Plain, cfg.pareto};
  Rng shuffle(mix64(seed, fnv1a("shuffle")));

  RunResult result;
  result.seed = seed;
  result.spec = spec;
  result.groups = model.group_ids();

  HierFusionModel best = model;
  double best_val = -1.0;
  int since_best = 0;
  long step = 0;
  std::vector<std::size_t> order = split.train;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_indices(order, shuffle);
    for (std::size_t start = 0; start < order.size(); start += cfg.optimizer.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.optimizer.batch_size);
      const Batch batch = batch_of(data, std::span<const std::size_t>(order).subspan(start, end - start));
      const StepReport report = train_step(model, batch, train_options, optimizer, step++);
      result.solver_calls += report.solver_calls;
      if (on_step) on_step(report);
    }
    result.epochs_run = epoch;
    if (split.val.empty()) {
      best = model;
      result.best_epoch = epoch;
      continue;
    }
    const double val_acc = macro_metrics(evaluate_level(model, data, split.val, spec.depth)).acc;
    if (val_acc > best_val) {
      best_val = val_acc;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  result.best_val_acc = std::max(best_val, 0.0);

  const auto cms = evaluate_levels(best, data, split.test, spec.depth);
  for (int level = 1; level <= spec.depth; ++level)
    result.rows.push_back(make_row(seed, spec.method, level, cms[static_cast<std::size_t>(level - 1)]));
  result.model = std::move(best);
  return result;
}

TrainOutcome run_train(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const RunSpec spec = run_spec(cfg);
  TrainOutcome out;
  out.runs.resize(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), options.threads, [&](std::size_t i) {
    std::shared_ptr<std::ofstream> sink;
    auto logger = step_logger(options, spec, cfg.seeds[i], sink);
    out.runs[i] = run_single(cfg, cfg.seeds[i], spec, logger);
  });
  for (const auto& r : out.runs) out.rows.insert(out.rows.end(), r.rows.begin(), r.rows.end());
  sort_rows(out.rows);
  return out;
}

std::string to_string(SweepParameter p) { return p == SweepParameter::Gamma ? "gamma" : "k"; }

SweepParameter sweep_parameter_from_string(const std::string& s) {
  if (s == "gamma") return SweepParameter::Gamma;
  if (s == "k") return SweepParameter::K;
  throw std::invalid_argument("unknown sweep parameter '" + s + "' (expected gamma or k)");
}

std::vector<double> default_grid(SweepParameter p) {
  if (p == SweepParameter::Gamma) return {-0.25, 0.0, 0.25, 0.5};
  return {0.5, 1.0, 1.5, 2.0};
}

std::string format_value(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

const char* level_label(int level) {
  switch (level) {
    case 1: return "I (T+A)";
    case 2: return "II (T+A+V)";
    default: return "III (T+A+V+E)";
  }
}

}  // namespace

SweepTable run_sweep(const ExperimentConfig& cfg, SweepParameter parameter, const std::vector<double>& grid,
                     const RunOptions& options) {
  cfg.validate();
  if (grid.empty()) throw std::invalid_argument("run_sweep: empty grid");
  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<RunResult> runs(grid.size() * n_seeds);
  parallel_for(runs.size(), options.threads, [&](std::size_t job) {
    ExperimentConfig c = cfg;
    const double v = grid[job / n_seeds];
    if (parameter == SweepParameter::Gamma)
      c.pareto.gamma = v;
    else
      c.pareto.k = v;
    RunSpec spec{3, true, "tpareto@" + to_string(parameter) + "=" + format_value(v)};
    std::shared_ptr<std::ofstream> sink;
    auto logger = step_logger(options, spec, cfg.seeds[job % n_seeds], sink);
    runs[job] = run_single(c, cfg.seeds[job % n_seeds], spec, logger);
  });

  SweepTable t;
  t.parameter = parameter;
  t.values = grid;
  t.levels = {1, 2, 3};
  t.acc_mean.assign(3, std::vector<double>(grid.size(), 0.0));
  t.acc_std.assign(3, std::vector<double>(grid.size(), 0.0));
  for (std::size_t vi = 0; vi < grid.size(); ++vi) {
    for (int level = 1; level <= 3; ++level) {
      std::vector<double> accs;
      for (std::size_t s = 0; s < n_seeds; ++s) accs.push_back(runs[vi * n_seeds + s].rows[static_cast<std::size_t>(level - 1)].acc);
      t.acc_mean[static_cast<std::size_t>(level - 1)][vi] = mean_of(accs);
      t.acc_std[static_cast<std::size_t>(level - 1)][vi] = std_of(accs);
    }
  }
  for (const auto& r : runs) t.rows.insert(t.rows.end(), r.rows.begin(), r.rows.end());
  sort_rows(t.rows);
  return t;
}

std::string SweepTable::csv() const {
  std::string out = "level";
  for (double v : values) out += "," + format_value(v);
  out += "\n";
  for (std::size_t li = 0; li < levels.size(); ++li) {
    out += level_name(levels[li]);
    for (std::size_t vi = 0; vi < values.size(); ++vi) out += "," + format_metric(acc_mean[li][vi]);
    out += "\n";
  }
  return out;
}

std::string SweepTable::long_csv() const {
  std::string out = "parameter,value,level,acc_mean,acc_std,n_seeds\n";
  std::size_t n_seeds = values.empty() ? 0 : rows.size() / (values.size() * levels.size());
  for (std::size_t vi = 0; vi < values.size(); ++vi)
    for (std::size_t li = 0; li < levels.size(); ++li)
      out += to_string(parameter) + "," + format_value(values[vi]) + "," + level_name(levels[li]) + "," +
             format_metric(acc_mean[li][vi]) + "," + format_metric(acc_std[li][vi]) + "," + std::to_string(n_seeds) +
             "\n";
  return out;
}

std::string SweepTable::pretty() const {
  char buf[64];
  std::string out = "Acc.(%) w.r.t. " + std::string(parameter == SweepParameter::Gamma ? "angle cosine threshold"
                                                                                        : "non-all-modal weight threshold") +
                    "\n";
  std::snprintf(buf, sizeof buf, "%-16s", (to_string(parameter) + " ->").c_str());
  out += buf;
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%18s", format_value(v).c_str());
    out += buf;
  }
  out += "\n";
  for (std::size_t li = 0; li < levels.size(); ++li) {
    std::snprintf(buf, sizeof buf, "%-16s", level_label(levels[li]));
    out += buf;
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
      std::snprintf(buf, sizeof buf, "%9.2f +- %5.2f", 100.0 * acc_mean[li][vi], 100.0 * acc_std[li][vi]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

AblationResult run_ablation(const ExperimentConfig& cfg, const RunOptions& options) {
  cfg.validate();
  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<RunSpec> specs;
  for (int depth = 1; depth <= 3; ++depth) {
    specs.push_back({depth, false, "plain"});
    specs.push_back({depth, true, "tpareto"});
  }
  AblationResult out;
  out.runs.resize(specs.size() * n_seeds);
  parallel_for(out.runs.size(), options.threads, [&](std::size_t job) {
    const RunSpec& spec = specs[job / n_seeds];
    const std::uint64_t seed = cfg.seeds[job % n_seeds];
    std::shared_ptr<std::ofstream> sink;
    auto logger = step_logger(options, spec, seed, sink);
    out.runs[job] = run_single(cfg, seed, spec, logger);
  });
  for (const auto& r : out.runs) out.rows.push_back(r.rows.back());
  sort_rows(out.rows);
  return out;
}

std::string AblationResult::pretty() const {
  std::map<std::pair<int, std::string>, std::vector<const MetricsRow*>> groups;
  for (const auto& r : rows) groups[{r.level, r.method}].push_back(&r);
  std::string out = "Fusion Level     Method          f1  recall  precision     acc\n";
  char buf[128];
  for (const auto& [key, rs] : groups) {
    std::vector<double> f1, rec, prec, acc;
    for (const auto* r : rs) {
      f1.push_back(r->f1);
      rec.push_back(r->recall);
      prec.push_back(r->precision);
      acc.push_back(r->acc);
    }
    std::snprintf(buf, sizeof buf, "%-16s %-10s %7.2f %7.2f %10.2f %7.2f\n", level_label(key.first), key.second.c_str(),
                  100 * mean_of(f1), 100 * mean_of(rec), 100 * mean_of(prec), 100 * mean_of(acc));
    out += buf;
  }
  return out;
}

}  // namespace tpareto
