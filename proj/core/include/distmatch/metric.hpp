#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "distmatch/dataset.hpp"
#include "distmatch/quantile.hpp"

namespace distmatch {

/// Diagonal covariate metric: d_M(a, b) = sum_l weights[l] * W2^2(a_l, b_l).
/// `c` is the regularization strength applied to ||weights||_2 in training.
struct MetricParams {
  std::vector<double> weights;
  double c = 0.001;

  static MetricParams uniform(std::size_t dimension, double weight = 1.0, double c = 0.001);
  /// Throws InvalidArgument on negative or non-finite entries.
  void validate() const;
  std::size_t dimension() const noexcept { return weights.size(); }
};

/// Per-covariate W2^2 between two units. Throws SchemaMismatch.
std::vector<double> covariate_components(const Unit& a, const Unit& b);
double covariate_distance(const MetricParams& m, const Unit& a, const Unit& b);

/// A query's K nearest neighbors in one treatment arm, nearest first.
struct MatchedGroup {
  UnitId query_id = 0;
  int treatment_arm = 0;
  std::vector<UnitId> neighbor_ids;
  /// Positions of the neighbors in the pool (or dataset) they came from.
  std::vector<std::size_t> neighbor_rows;
  std::vector<double> distances;
  /// Mean of `distances`.
  double diameter = 0.0;
};

/// Fills `diameter` from `distances`.
void finalize_group(MatchedGroup& group);

/// The k pool units closest to `query` under `m`, ties broken by lower unit
/// id. Pool members sharing the query's id are skipped. All pool units must
/// share one treatment. Throws PoolTooSmall.
MatchedGroup knn_set(const Unit& query, std::span<const Unit> pool, std::size_t k,
                     const MetricParams& m);

/// Barycenter of the outcomes of knn_set(query, pool, k, m).
QuantileFunction knn_predict(const Unit& query, std::span<const Unit> pool, std::size_t k,
                             const MetricParams& m);

/// Per-covariate W2^2 for a fixed list of units, independent of the metric
/// weights so it is prepared once and reused for every loss evaluation.
/// Covariates that are point masses for every unit keep only their
/// coordinates (W2^2 = mass * (a - b)^2); the rest are cached as full n x n
/// matrices.
class PairwiseComponents {
 public:
  PairwiseComponents(const Dataset& data, std::span<const std::size_t> rows);

  std::size_t size() const noexcept { return n_; }
  std::size_t dimension() const noexcept { return dim_; }
  double component(std::size_t l, std::size_t i, std::size_t j) const;
  /// out[j] = d_M(row i, row j) for every j.
  void distance_row(std::span<const double> weights, std::size_t i, std::span<double> out) const;

 private:
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  double mass_ = 1.0;
  // Per covariate: offset into coords_ (point masses) or blocks_ (otherwise).
  std::vector<bool> point_;
  std::vector<std::size_t> offset_;
  std::vector<double> coords_;
  std::vector<double> blocks_;
};

/// Metric-learning objective: c * ||w||_2 + Delta(1) + Delta(0), where
/// Delta(t) averages W2^2 between each arm-t unit's outcome and the
/// barycenter of its k nearest same-arm units (itself excluded).
class TrainingObjective {
 public:
  /// Throws ArmTooSmall unless each arm holds more than k units.
  TrainingObjective(const Dataset& train, std::size_t k);

  std::size_t dimension() const noexcept { return dim_; }
  std::size_t k() const noexcept { return k_; }
  /// Delta(1) + Delta(0) for the given weights.
  double prediction_error(std::span<const double> weights) const;
  double operator()(const MetricParams& m) const;
  double loss(std::span<const double> weights, double c) const;

 private:
  struct Arm {
    std::vector<std::size_t> rows;
    PairwiseComponents components;
    std::vector<double> gram;  // grid-weighted inner products of outcomes
  };
  double arm_error(const Arm& arm, std::span<const double> weights) const;

  std::size_t k_;
  std::size_t dim_;
  std::vector<Arm> arms_;
};

double training_loss(const MetricParams& m, const Dataset& train, std::size_t k);

struct OptimizerConfig {
  double c = 0.001;
  std::size_t k_train = 10;
  double w_max = 100.0;
  std::size_t starts = 5;
  std::size_t budget_per_dimension = 500;
  double initial_step = 0.5;
  double x_tolerance = 1e-3;
  double f_tolerance = 1e-9;
  /// Simplex rebuilds per start after convergence (see NelderMeadOptions).
  std::size_t max_restarts = 1;
  std::uint64_t seed = 0;
  /// 0 selects std::thread::hardware_concurrency().
  std::size_t threads = 1;
};

struct TracePoint {
  std::size_t start = 0;
  std::size_t evaluation = 0;
  double loss = 0.0;
};

struct FitResult {
  MetricParams params;
  double loss = 0.0;
  /// Loss at the all-ones starting point.
  double initial_loss = 0.0;
  std::size_t evaluations = 0;
  std::size_t best_start = 0;
  /// The winning start hit its evaluation budget before converging.
  bool budget_exhausted = false;
  std::vector<TracePoint> trace;
};

/// Multi-start Nelder-Mead over [0, w_max]^d: one start at all-ones, the
/// rest drawn uniformly from [0, 2]^d with `seed`. Deterministic for a
/// given seed regardless of thread count.
FitResult fit_metric(const Dataset& train, const OptimizerConfig& config);

}  // namespace distmatch
