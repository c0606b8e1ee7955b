#include "regression.hpp"

#include "distmatch/error.hpp"

namespace distmatch::detail {

void RidgeRegression::fit(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda) {
  if (x.rows() != y.rows() || x.rows() < 2) {
    throw Error(Errc::DegenerateDesign, "regression needs at least two rows");
  }
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  Eigen::MatrixXd gram = design.transpose() * design;
  for (Eigen::Index i = 1; i < gram.rows(); ++i) gram(i, i) += lambda;
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) {
    throw Error(Errc::DegenerateDesign, "normal equations are singular");
  }
  coef_ = solver.solve(design.transpose() * y);
  if (!coef_.allFinite()) throw Error(Errc::DegenerateDesign, "regression coefficients diverged");
  fitted_ = true;
}

Eigen::RowVectorXd RidgeRegression::predict(const Eigen::RowVectorXd& x) const {
  if (!fitted_) throw Error(Errc::ModelNotFitted, "regression used before fit");
  return coef_.row(0) + x * coef_.bottomRows(coef_.rows() - 1);
}

namespace {

bool is_distribution(const Schema& schema, std::size_t l) {
  return schema.covariates[l].kind == CovariateKind::Distribution;
}

}  // namespace

Eigen::RowVectorXd scalar_features(const Unit& unit, const Schema& schema) {
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(unit.covariates.size()));
  for (std::size_t l = 0; l < unit.covariates.size(); ++l) {
    const QuantileFunction& x = unit.covariates[l];
    out(static_cast<Eigen::Index>(l)) = is_distribution(schema, l) ? x.mean() : x[0];
  }
  return out;
}

Eigen::RowVectorXd flattened_features(const Unit& unit, const Schema& schema) {
  Eigen::Index width = 0;
  for (std::size_t l = 0; l < unit.covariates.size(); ++l) {
    width += is_distribution(schema, l) ? static_cast<Eigen::Index>(unit.covariates[l].size()) : 1;
  }
  Eigen::RowVectorXd out(width);
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < unit.covariates.size(); ++l) {
    const QuantileFunction& x = unit.covariates[l];
    if (is_distribution(schema, l)) {
      for (double v : x.values()) out(at++) = v;
    } else {
      out(at++) = x[0];
    }
  }
  return out;
}

Eigen::MatrixXd outcome_matrix(const Dataset& data, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd y(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(data.grid().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = data.unit(rows[i]).outcome.values();
    for (std::size_t q = 0; q < v.size(); ++q) {
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = v[q];
    }
  }
  return y;
}

}  // namespace distmatch::detail
