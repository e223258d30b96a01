// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0

#include "tpareto/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace tpareto {

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw std::invalid_argument("confusion: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool fake = labels[i] == 1;
    const bool said_fake = predictions[i] == 1;
    if (fake && said_fake) ++cm.tp;
    else if (!fake && said_fake) ++cm.fp;
    else if (fake) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

namespace {

double ratio(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

double f1(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

ClassMetrics macro_metrics(const ConfusionMatrix& cm) {
  const double p_fake = ratio(cm.tp, cm.tp + cm.fp);
  const double r_fake = ratio(cm.tp, cm.tp + cm.fn);
  const double p_real = ratio(cm.tn, cm.tn + cm.fn);
  const double r_real = ratio(cm.tn, cm.tn + cm.fp);
  ClassMetrics m;
  m.precision = 0.5 * (p_fake + p_real);
  m.recall = 0.5 * (r_fake + r_real);
  m.f1 = 0.5 * (f1(p_fake, r_fake) + f1(p_real, r_real));
  m.acc = ratio(cm.tp + cm.tn, cm.total());
  return m;
}

std::string level_name(int level) {
  switch (level) {
    case 1: return "I";
    case 2: return "II";
    case 3: return "III";
    default: throw std::invalid_argument("level_name: bad level " + std::to_string(level));
  }
}

int level_from_name(const std::string& name) {
  if (name == "I") return 1;
  if (name == "II") return 2;
  if (name == "III") return 3;
  throw std::invalid_argument("unknown fusion level '" + name + "'");
}

MetricsRow make_row(std::uint64_t seed, std::string method, int level, const ConfusionMatrix& cm) {
  const ClassMetrics m = macro_metrics(cm);
  return MetricsRow{seed, std::move(method), level, m.f1, m.recall, m.precision, m.acc, cm};
}

void sort_rows(std::vector<MetricsRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.seed, a.method, a.level) < std::tie(b.seed, b.method, b.level);
  });
}

std::string format_metric(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.seed) + "," + r.method + "," + level_name(r.level) + "," + format_metric(r.f1) + "," +
           format_metric(r.recall) + "," + format_metric(r.precision) + "," + format_metric(r.acc) + "\n";
  }
  return out;
}

std::string metrics_jsonl(std::span<const MetricsRow> rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::json j{{"seed", r.seed},
                     {"method", r.method},
                     {"level", level_name(r.level)},
                     {"f1", r.f1},
                     {"recall", r.recall},
                     {"precision", r.precision},
                     {"acc", r.acc},
                     {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}}}};
    out += j.dump() + "\n";
  }
  return out;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

void emit_metrics(std::span<const MetricsRow> rows, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("emit_metrics: no rows");
  write_text(path, metrics_csv(rows));
}

void emit_metrics_jsonl(std::span<const MetricsRow> rows, const std::string& path) {
  if (rows.empty()) throw std::invalid_argument("emit_metrics: no rows");
  write_text(path, metrics_jsonl(rows));
}

std::vector<MetricsRow> parse_metrics_jsonl(const std::string& text) {
  std::vector<MetricsRow> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    MetricsRow r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.method = j.at("method").get<std::string>();
    r.level = level_from_name(j.at("level").get<std::string>());
    r.f1 = j.at("f1").get<double>();
    r.recall = j.at("recall").get<double>();
    r.precision = j.at("precision").get<double>();
    r.acc = j.at("acc").get<double>();
    const auto& c = j.at("confusion");
    r.confusion = {c.at("tp").get<long>(), c.at("fp").get<long>(), c.at("fn").get<long>(), c.at("tn").get<long>()};
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace tpareto
