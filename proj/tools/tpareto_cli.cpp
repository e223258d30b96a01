// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// tpareto: train / sweep / ablate / gen-data / solve-minnorm.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tpareto/checkpoint.hpp"
#include "tpareto/experiment.hpp"
#include "tpareto/minnorm.hpp"
#include "tpareto/synthetic.hpp"
#include "tpareto/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tpareto;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string out_dir = ".";
  int threads = 1;
  bool step_log = false;
  // overrides
  std::optional<double> gamma, k, lr;
  std::optional<int> epochs;
  std::optional<std::size_t> samples, batch;
  std::optional<std::string> method;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON experiment config");
  app->add_option("--seed", c.seed, "run a single seed");
  app->add_option("--seeds", c.seeds, "seed list (overrides config)")->delimiter(',');
  app->add_option("--out-dir", c.out_dir, "output directory");
  app->add_option("--threads", c.threads, "worker threads across runs")->check(CLI::PositiveNumber);
  app->add_flag("--step-log", c.step_log, "write per-step JSON-lines reports");
  app->add_option("--gamma", c.gamma, "angle cosine threshold");
  app->add_option("--k", c.k, "non-all-modal weight threshold");
  app->add_option("--lr", c.lr, "learning rate");
  app->add_option("--epochs", c.epochs, "training epochs");
  app->add_option("--samples", c.samples, "number of synthetic samples");
  app->add_option("--batch-size", c.batch, "minibatch size");
  app->add_option("--method", c.method, "tpareto | plain | level-only-1 | level-only-2");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

ExperimentConfig load_config(const Common& c) {
  json j = json::object();
  if (!c.config.empty()) j = json::parse(read_file(c.config));
  ExperimentConfig cfg = j.get<ExperimentConfig>();
  if (c.gamma) cfg.pareto.gamma = *c.gamma;
  if (c.k) cfg.pareto.k = *c.k;
  if (c.lr) cfg.optimizer.lr = *c.lr;
  if (c.epochs) cfg.epochs = *c.epochs;
  if (c.samples) cfg.data.n_samples = *c.samples;
  if (c.batch) cfg.optimizer.batch_size = *c.batch;
  if (c.method) cfg.method = method_from_string(*c.method);
  if (!c.seeds.empty()) cfg.seeds = c.seeds;
  if (c.seed) cfg.seeds = {*c.seed};
  cfg.validate();
  return cfg;
}

RunOptions prepare(const Common& c, const ExperimentConfig& cfg) {
  fs::create_directories(c.out_dir);
  write_file(fs::path(c.out_dir) / "config.json", json(cfg).dump(2) + "\n");
  RunOptions o;
  o.threads = c.threads;
  if (c.step_log) {
    o.step_log_dir = (fs::path(c.out_dir) / "steps").string();
    fs::create_directories(o.step_log_dir);
  }
  return o;
}

void write_metrics(const Common& c, const std::vector<MetricsRow>& rows) {
  emit_metrics(rows, (fs::path(c.out_dir) / "metrics.csv").string());
  emit_metrics_jsonl(rows, (fs::path(c.out_dir) / "metrics.jsonl").string());
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  const RunOptions opts = prepare(c, cfg);
  const TrainOutcome out = run_train(cfg, opts);
  write_metrics(c, out.rows);
  for (const auto& r : out.runs)
    if (r.model) save_checkpoint(*r.model, (fs::path(c.out_dir) / ("checkpoint_seed" + std::to_string(r.seed) + ".json")).string());
  std::cout << metrics_csv(out.rows);
  return 0;
}

int cmd_sweep(const Common& c, const std::string& param, const std::vector<double>& grid_in) {
  const ExperimentConfig cfg = load_config(c);
  const SweepParameter p = sweep_parameter_from_string(param);
  const std::vector<double> grid = grid_in.empty() ? default_grid(p) : grid_in;
  const RunOptions opts = prepare(c, cfg);
  const SweepTable t = run_sweep(cfg, p, grid, opts);
  write_metrics(c, t.rows);
  write_file(fs::path(c.out_dir) / ("sweep_" + param + ".csv"), t.csv());
  write_file(fs::path(c.out_dir) / ("sweep_" + param + "_long.csv"), t.long_csv());
  std::cout << t.pretty();
  return 0;
}

int cmd_ablate(const Common& c) {
  const ExperimentConfig cfg = load_config(c);
  const RunOptions opts = prepare(c, cfg);
  const AblationResult a = run_ablation(cfg, opts);
  write_metrics(c, a.rows);
  std::cout << a.pretty();
  return 0;
}

int cmd_gen_data(const Common& c, std::size_t oracle_mc) {
  const ExperimentConfig cfg = load_config(c);
  GenConfig gen = cfg.data;
  if (c.seed) gen.seed = *c.seed;
  fs::create_directories(c.out_dir);
  const Dataset ds = generate(gen);
  const fs::path path = fs::path(c.out_dir) / "dataset.jsonl";
  write_dataset(ds, path.string());
  json summary{{"path", path.string()}, {"samples", ds.samples.size()}, {"config_hash", config_hash(gen)}};
  if (oracle_mc > 0) {
    const OracleEstimate est = bayes_oracle(gen, oracle_mc);
    summary["bayes_accuracy"] = est.accuracy;
    summary["bayes_standard_error"] = est.standard_error;
  }
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_solve(const std::string& input, const SolverConfig& sc) {
  const json j = json::parse(input == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {}) : read_file(input));
  ParetoProblem problem;
  for (const auto& g : j.at("gradients")) problem.gradients.push_back({GroupId::Theta1, g.get<std::vector<double>>()});
  const SolverResult r = solve_minnorm(problem, sc);
  std::cout << json{{"alpha", r.weights.alpha}, {"min_norm_sq", r.min_norm_sq}, {"gap", r.gap}, {"iterations", r.iterations}}.dump()
            << "\n";
  return 0;
}

int report_error(const std::string& type, const std::string& message, int code) {
  std::cerr << json{{"error", {{"type", type}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical multimodal fusion with TPareto gradient integration"};
  app.require_subcommand(1);

  Common train_c, sweep_c, ablate_c, gen_c;
  auto* train = app.add_subcommand("train", "train and evaluate every fusion level");
  add_common(train, train_c);

  auto* sweep = app.add_subcommand("sweep", "sweep gamma or k");
  add_common(sweep, sweep_c);
  std::string sweep_param = "gamma";
  std::vector<double> grid;
  sweep->add_option("--param", sweep_param, "gamma | k");
  sweep->add_option("--grid", grid, "comma separated values")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "per-level ablation with and without TPareto");
  add_common(ablate, ablate_c);

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as JSON lines");
  add_common(gen, gen_c);
  std::size_t oracle_mc = 0;
  gen->add_option("--oracle", oracle_mc, "Monte Carlo draws for the Bayes accuracy estimate");

  auto* solve = app.add_subcommand("solve-minnorm", "min-norm convex combination of gradients");
  std::string solve_input;
  SolverConfig solver_cfg;
  solve->add_option("input", solve_input, "JSON file {\"gradients\": [[...], ...]} or - for stdin")->required();
  solve->add_option("--max-iter", solver_cfg.max_iter, "Frank-Wolfe iteration cap");
  solve->add_option("--tol", solver_cfg.tol, "duality-gap tolerance, relative to max diag of the Gram matrix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*train) return cmd_train(train_c);
    if (*sweep) return cmd_sweep(sweep_c, sweep_param, grid);
    if (*ablate) return cmd_ablate(ablate_c);
    if (*gen) return cmd_gen_data(gen_c, oracle_mc);
    if (*solve) return cmd_solve(solve_input, solver_cfg);
  } catch (const DivergenceError& e) {
    return report_error("divergence", e.what(), 3);
  } catch (const json::exception& e) {
    return report_error("json", e.what(), 1);
  } catch (const std::invalid_argument& e) {
    return report_error("invalid_argument", e.what(), 1);
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), 1);
  }
  return 1;
}
