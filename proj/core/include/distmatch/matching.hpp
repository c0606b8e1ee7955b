#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "distmatch/dataset.hpp"
#include "distmatch/metric.hpp"

namespace distmatch {

/// A treatment-effect curve tau(q) on the dataset grid, optionally with a
/// pointwise variance and confidence band.
struct EffectCurve {
  GridPtr grid;
  std::vector<double> tau;
  std::optional<std::vector<double>> variance;
  std::optional<std::vector<double>> ci_lo;
  std::optional<std::vector<double>> ci_hi;
  std::size_t n_used = 0;
};

/// Estimation-set index: all pairwise d_M distances under a fixed metric plus
/// the id-sorted rows of each arm. The dataset must outlive the index.
class MatchIndex {
 public:
  MatchIndex(const Dataset& est, MetricParams m);

  const Dataset& dataset() const noexcept { return *data_; }
  const MetricParams& metric() const noexcept { return metric_; }
  std::size_t size() const noexcept { return n_; }
  double distance(std::size_t a, std::size_t b) const { return dist_[a * n_ + b]; }
  const std::vector<std::size_t>& arm(int treatment) const { return arms_[treatment == 0 ? 0 : 1]; }

  /// K nearest units of `arm` to dataset row `row`; the row itself is never
  /// its own neighbor. Throws PoolTooSmall.
  MatchedGroup neighbors(std::size_t row, int arm, std::size_t k) const;
  /// Same for an arbitrary covariate vector; a dataset unit sharing the
  /// query's id is excluded.
  MatchedGroup neighbors(const Unit& query, int arm, std::size_t k) const;

  /// Levelwise mean of the outcomes of the given dataset rows.
  std::vector<double> mean_outcome(std::span<const std::size_t> rows) const;

 private:
  const Dataset* data_;
  MetricParams metric_;
  std::size_t n_ = 0;
  std::vector<double> dist_;
  std::vector<std::size_t> arms_[2];
};

/// Barycenter of the k nearest arm-`arm` outcomes in `est` (query excluded
/// from its own pool).
QuantileFunction conditional_barycenter(const Unit& query, const Dataset& est, int arm,
                                        std::size_t k, const MetricParams& m);
QuantileFunction conditional_barycenter(const MatchIndex& index, const Unit& query, int arm,
                                        std::size_t k);

/// tau(q | x) = treated conditional barycenter - control conditional barycenter.
EffectCurve estimate_cate(const Unit& query, const Dataset& est, std::size_t k,
                          const MetricParams& m);
EffectCurve estimate_cate(const MatchIndex& index, const Unit& query, std::size_t k);
/// CATE for dataset row `row` (self-excluded), reusing cached distances.
EffectCurve estimate_cate(const MatchIndex& index, std::size_t row, std::size_t k);

/// Observed outcome contrasted with the K-neighbor counterfactual barycenter
/// from the opposite arm, signed as Y(1) - Y(0).
EffectCurve ite_contrast(const Unit& unit, const Dataset& est, std::size_t k,
                         const MetricParams& m);
EffectCurve ite_contrast(const MatchIndex& index, std::size_t row, std::size_t k);

/// ITE curves of every estimation unit, one row per dataset row.
std::vector<std::vector<double>> ite_curves(const MatchIndex& index, std::size_t k);

/// Both algebraic routes to the ATE, computed independently.
struct AteForms {
  /// (1/N) sum_i (F^_{Y_i(1)} - F^_{Y_i(0)})
  std::vector<double> mean_of_ite;
  /// (1/N) sum_i (2T_i - 1)(1 + M_K(i)/K) F_{Y_i}
  std::vector<double> weighted_sum;
  std::vector<std::size_t> match_counts;
};

AteForms ate_forms(const MatchIndex& index, std::size_t k);

/// ATE curve. Throws InternalIdentityViolation if the two forms disagree by
/// more than 1e-9 (relative to the outcome scale).
EffectCurve estimate_ate(const Dataset& est, std::size_t k, const MetricParams& m);
EffectCurve estimate_ate(const MatchIndex& index, std::size_t k);

/// Mean ITE over the estimation units selected by `member`.
EffectCurve subgroup_cate(const MatchIndex& index, std::size_t k,
                          const std::function<bool(const Unit&)>& member);

}  // namespace distmatch
