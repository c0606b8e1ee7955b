#pragma once

#include <memory>
#include <vector>

#include "distmatch/dataset.hpp"
#include "distmatch/matching.hpp"

namespace distmatch {

/// Outcome regression fit at each quantile level with a linear model per
/// arm on scalarized covariates; CATE = fitted treated - fitted control.
/// The result is not forced to be monotone.
class LinearOutcomeBaseline {
 public:
  LinearOutcomeBaseline();
  ~LinearOutcomeBaseline();
  LinearOutcomeBaseline(const LinearOutcomeBaseline&);
  LinearOutcomeBaseline& operator=(const LinearOutcomeBaseline&);

  /// Throws DegenerateDesign.
  static LinearOutcomeBaseline fit(const Dataset& data, double ridge = 1e-6);
  EffectCurve cate(const Unit& unit) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Fits the baseline on `fit_data` and returns one CATE curve per unit of
/// `queries`, in row order.
std::vector<EffectCurve> baseline_lr_cate(const Dataset& fit_data, const Dataset& queries);

/// L1-regularized logistic propensity model on standardized scalarized
/// covariates; the penalty is chosen by 5-fold cross-validated log loss.
class LogisticPropensity {
 public:
  LogisticPropensity();
  ~LogisticPropensity();
  LogisticPropensity(const LogisticPropensity&);
  LogisticPropensity& operator=(const LogisticPropensity&);

  /// Throws DegenerateDesign when an arm is empty.
  static LogisticPropensity fit(const Dataset& data);
  double predict(const Unit& unit) const;
  double penalty() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

/// Flags units whose estimated propensity falls outside [lo, hi].
std::vector<bool> baseline_linear_propensity_flags(const Dataset& est, double lo = 0.1,
                                                   double hi = 0.9);

}  // namespace distmatch
