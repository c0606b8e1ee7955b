#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distmatch/simulation.hpp"

namespace distmatch {

enum class BenchmarkKind { Cate, Positivity, Coverage, KSensitivity };

std::string_view to_string(BenchmarkKind kind) noexcept;
std::optional<BenchmarkKind> parse_benchmark_kind(std::string_view name);

struct BenchmarkConfig {
  BenchmarkKind kind = BenchmarkKind::Cate;
  SimulationSpec spec;
  std::size_t replicates = 1;
  /// Replicates run concurrently on this many threads (0 = all cores).
  std::size_t threads = 1;
  /// KSensitivity: K values to compare. With refit_per_k the metric is
  /// retrained with k_train = K; otherwise only the estimation K varies.
  std::vector<std::size_t> k_values{2, 5, 10};
  bool refit_per_k = true;
  /// Positivity: flag every generated unit rather than only the estimation
  /// split. The metric is always learned on the training split.
  bool diagnose_full_sample = true;
  std::size_t j = 2;
  double level = 0.95;
  std::size_t population_draws = 100000;
};

/// One metric of one method in one replicate.
struct BenchmarkRow {
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::string metric;
  double value = 0.0;
};

struct MetricSummary {
  std::string method;
  std::string metric;
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct BenchmarkResult {
  BenchmarkConfig config;
  std::vector<BenchmarkRow> rows;
  /// Wall-clock seconds per replicate (kept apart from `rows` so that the
  /// row CSV is byte-reproducible).
  std::vector<double> seconds;
  std::vector<std::string> warnings;

  /// Aggregates recomputed from `rows`, ordered by first appearance.
  std::vector<MetricSummary> summaries() const;
  std::optional<MetricSummary> summary(std::string_view method, std::string_view metric) const;
  std::vector<double> values(std::string_view method, std::string_view metric) const;

  /// replicate,seed,method,metric,value
  std::string rows_csv() const;
  std::string timing_csv() const;
  std::string summary_text() const;
};

/// Seeded, reproducible replicate loop. Replicate r uses
/// derive_seed(config.spec.seed, r) for data, split and optimizer.
BenchmarkResult run_benchmark(const BenchmarkConfig& config);

}  // namespace distmatch
