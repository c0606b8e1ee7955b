#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "distmatch/dataset.hpp"
#include "distmatch/matching.hpp"
#include "distmatch/metric.hpp"

namespace distmatch {

/// M_K(i): how many opposite-arm units list row i among their k nearest.
std::vector<std::size_t> match_counts(const MatchIndex& index, std::size_t k);
std::vector<std::size_t> match_counts(const Dataset& est, std::size_t k, const MetricParams& m);

/// sigma^2_{T_i}(q) ~ J/(J+1) * (F_{Y_i}(q) - mean of its J nearest same-arm
/// outcomes)^2, per grid level. Throws ArmTooSmall.
std::vector<double> conditional_variance_hat(const MatchIndex& index, std::size_t row,
                                             std::size_t j);
std::vector<double> conditional_variance_hat(const Unit& unit, const Dataset& est, std::size_t j,
                                             const MetricParams& m);

/// The two sums making up V^(q): the spread of the ITE curves around the ATE
/// and the match-count weighted conditional variances.
struct VarianceTerms {
  std::vector<double> heterogeneity;
  std::vector<double> matching;
  std::vector<double> total;
};

VarianceTerms variance_terms(const MatchIndex& index, std::size_t k, std::size_t j);
std::vector<double> variance_hat(const MatchIndex& index, std::size_t k, std::size_t j);
std::vector<double> variance_hat(const Dataset& est, std::size_t k, std::size_t j,
                                 const MetricParams& m);

struct InferenceReport {
  GridPtr grid;
  std::vector<double> tau_hat;
  std::optional<std::vector<double>> tau_bcm;
  std::vector<double> variance_hat;
  double ci_level = 0.95;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::vector<std::size_t> match_counts;
  std::size_t j_used = 0;
  std::size_t n = 0;
  bool centered_on_bcm = false;

  /// The estimate the band is centered on.
  const std::vector<double>& center() const { return centered_on_bcm ? *tau_bcm : tau_hat; }
};

/// Pointwise normal bands center(q) +/- z_{(1+level)/2} * sqrt(V^(q) / N).
/// `report` must carry tau_hat, variance_hat and n. Throws BadLevel.
InferenceReport confidence_band(InferenceReport report, double level, bool center_on_bcm = false);

/// Per-arm, per-level ridge regression of outcome quantiles on the flattened
/// covariate quantile vectors; the plug-in mu^_t for bias correction.
class ConditionalMeanModel {
 public:
  ConditionalMeanModel();
  ~ConditionalMeanModel();
  ConditionalMeanModel(const ConditionalMeanModel&);
  ConditionalMeanModel& operator=(const ConditionalMeanModel&);

  static ConditionalMeanModel fit(const Dataset& data, double ridge = 1e-6);
  bool fitted() const noexcept;
  /// Throws ModelNotFitted.
  std::vector<double> predict(int arm, const Unit& unit) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

struct BiasCorrection {
  /// B^(q)
  std::vector<double> bias;
  /// tau^(q) - B^(q)
  std::vector<double> corrected;
};

BiasCorrection bias_correction(const MatchIndex& index, std::size_t k,
                               const ConditionalMeanModel& mu);
BiasCorrection bias_correction(const Dataset& est, std::size_t k, const MetricParams& m,
                               const ConditionalMeanModel& mu);

struct InferenceOptions {
  std::size_t k = 10;
  std::size_t j = 2;
  double level = 0.95;
  bool bias_correct = false;
  bool center_on_bcm = false;
};

/// ATE with variance, bands and (optionally) bias correction in one pass.
InferenceReport infer_ate(const MatchIndex& index, const InferenceOptions& options);

}  // namespace distmatch
