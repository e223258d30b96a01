// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary classification metrics, macro-averaged over the two classes. All
// values are fractions in [0, 1]; fake is the positive class.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tpareto {

struct ConfusionMatrix {
  long tp = 0;  // fake predicted fake
  long fp = 0;  // real predicted fake
  long fn = 0;  // fake predicted real
  long tn = 0;

  long total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions);

struct ClassMetrics {
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double acc = 0.0;
};

// A class that is never predicted has precision 0 (and F1 0).
ClassMetrics macro_metrics(const ConfusionMatrix& cm);

std::string level_name(int level);  // 1 -> "I"
int level_from_name(const std::string& name);

struct MetricsRow {
  std::uint64_t seed = 0;
  std::string method;
  int level = 3;
  double f1 = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double acc = 0.0;
  ConfusionMatrix confusion;
};

MetricsRow make_row(std::uint64_t seed, std::string method, int level, const ConfusionMatrix& cm);

// Sort key (seed, method, level).
void sort_rows(std::vector<MetricsRow>& rows);

inline constexpr const char* kMetricsHeader = "seed,method,level,f1,recall,precision,acc";

// Fixed 4-decimal formatting.
std::string format_metric(double value);
std::string metrics_csv(std::span<const MetricsRow> rows);
std::string metrics_jsonl(std::span<const MetricsRow> rows);

// Writes rows as given. Throws std::runtime_error on I/O failure and
// std::invalid_argument on an empty row set.
void emit_metrics(std::span<const MetricsRow> rows, const std::string& path);
void emit_metrics_jsonl(std::span<const MetricsRow> rows, const std::string& path);

std::vector<MetricsRow> parse_metrics_jsonl(const std::string& text);

}  // namespace tpareto
