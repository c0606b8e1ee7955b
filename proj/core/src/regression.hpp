#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "distmatch/dataset.hpp"

namespace distmatch::detail {

/// Ridge least squares with an unpenalized intercept, fitted to many
/// responses at once (one column per grid level).
class RidgeRegression {
 public:
  /// Throws DegenerateDesign when the damped normal equations cannot be
  /// solved or produce non-finite coefficients.
  void fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda);
  Eigen::RowVectorXd predict(const Eigen::RowVectorXd& x) const;
  bool fitted() const noexcept { return fitted_; }

 private:
  Eigen::MatrixXd coef_;  // (p + 1) x responses, intercept first
  bool fitted_ = false;
};

/// One scalar per covariate: point masses give their value, distributions
/// their grid mean (the integral of the quantile function).
Eigen::RowVectorXd scalar_features(const Unit& unit, const Schema& schema);
/// Every covariate's quantile values laid end to end; non-distribution
/// covariates add one coordinate.
Eigen::RowVectorXd flattened_features(const Unit& unit, const Schema& schema);

Eigen::MatrixXd outcome_matrix(const Dataset& data, const std::vector<std::size_t>& rows);

}  // namespace distmatch::detail
