#include "distmatch/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "distmatch/error.hpp"
#include "regression.hpp"

namespace distmatch {

struct LinearOutcomeBaseline::Impl {
  Schema schema;
  GridPtr grid;
  detail::RidgeRegression arms[2];
};

LinearOutcomeBaseline::LinearOutcomeBaseline() = default;
LinearOutcomeBaseline::~LinearOutcomeBaseline() = default;
LinearOutcomeBaseline::LinearOutcomeBaseline(const LinearOutcomeBaseline&) = default;
LinearOutcomeBaseline& LinearOutcomeBaseline::operator=(const LinearOutcomeBaseline&) = default;

LinearOutcomeBaseline LinearOutcomeBaseline::fit(const Dataset& data, double ridge) {
  auto impl = std::make_shared<Impl>();
  impl->schema = data.schema();
  impl->grid = data.grid_ptr();
  for (int t : {0, 1}) {
    const auto rows = data.arm_rows(t);
    if (rows.size() < 2) throw Error(Errc::DegenerateDesign, "an arm is too small to regress");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(data.dimension()));
    for (std::size_t i = 0; i < rows.size(); ++i)
      x.row(static_cast<Eigen::Index>(i)) = detail::scalar_features(data.unit(rows[i]), data.schema());
    impl->arms[t].fit(x, detail::outcome_matrix(data, rows), ridge);
  }
  LinearOutcomeBaseline model;
  model.impl_ = std::move(impl);
  return model;
}

EffectCurve LinearOutcomeBaseline::cate(const Unit& unit) const {
  if (!impl_) throw Error(Errc::ModelNotFitted, "linear baseline is not fitted");
  const Eigen::RowVectorXd x = detail::scalar_features(unit, impl_->schema);
  const Eigen::RowVectorXd diff = impl_->arms[1].predict(x) - impl_->arms[0].predict(x);
  EffectCurve out;
  out.grid = impl_->grid;
  out.tau.assign(diff.data(), diff.data() + diff.size());
  return out;
}

std::vector<EffectCurve> baseline_lr_cate(const Dataset& fit_data, const Dataset& queries) {
  const auto model = LinearOutcomeBaseline::fit(fit_data);
  std::vector<EffectCurve> out;
  out.reserve(queries.size());
  for (const Unit& u : queries.units()) out.push_back(model.cate(u));
  return out;
}

namespace {

constexpr std::size_t kFolds = 5;
constexpr int kPenaltyCount = 10;

struct LogisticFit {
  Eigen::VectorXd beta;  // intercept first
};

double log_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // log(1 + exp(eta)) - y * eta, evaluated stably
    const double e = eta(i);
    const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    total += softplus - y(i) * e;
  }
  return total / static_cast<double>(eta.size());
}

// FISTA on mean log loss + lambda * |beta[1:]|_1. `x` already carries the
// intercept column.
LogisticFit fit_l1_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                            const Eigen::VectorXd& warm) {
  const double n = static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x.transpose() * x / n,
                                                     Eigen::EigenvaluesOnly);
  const double lipschitz = std::max(0.25 * eig.eigenvalues().maxCoeff(), 1e-12);
  const double step = 1.0 / lipschitz;
  Eigen::VectorXd beta = warm;
  Eigen::VectorXd z = beta;
  double t = 1.0;
  for (int iter = 0; iter < 5000; ++iter) {
    const Eigen::VectorXd eta = x * z;
    Eigen::VectorXd p(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
    const Eigen::VectorXd grad = x.transpose() * (p - y) / n;
    Eigen::VectorXd next = z - step * grad;
    for (Eigen::Index j = 1; j < next.size(); ++j) {
      const double v = next(j);
      next(j) = std::copysign(std::max(std::abs(v) - step * lambda, 0.0), v);
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    z = next + ((t - 1.0) / t_next) * (next - beta);
    const double change = (next - beta).lpNorm<Eigen::Infinity>();
    beta = std::move(next);
    t = t_next;
    if (change < 1e-7) break;
  }
  return LogisticFit{beta};
}

}  // namespace

struct LogisticPropensity::Impl {
  Schema schema;
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
  Eigen::VectorXd beta;
  double penalty = 0.0;
};

LogisticPropensity::LogisticPropensity() = default;
LogisticPropensity::~LogisticPropensity() = default;
LogisticPropensity::LogisticPropensity(const LogisticPropensity&) = default;
LogisticPropensity& LogisticPropensity::operator=(const LogisticPropensity&) = default;

LogisticPropensity LogisticPropensity::fit(const Dataset& data) {
  if (data.arm_size(0) == 0 || data.arm_size(1) == 0)
    throw Error(Errc::DegenerateDesign, "propensity model needs both arms");
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(data.dimension());
  Eigen::MatrixXd raw(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Unit& u = data.unit(static_cast<std::size_t>(i));
    raw.row(i) = detail::scalar_features(u, data.schema());
    y(i) = u.treatment;
  }
  auto impl = std::make_shared<Impl>();
  impl->schema = data.schema();
  impl->mean = raw.colwise().mean();
  impl->scale.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt((raw.col(j).array() - impl->mean(j)).square().mean());
    impl->scale(j) = sd > 1e-12 ? sd : 1.0;
  }
  Eigen::MatrixXd x(n, p + 1);
  x.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i)
    x.row(i).tail(p) = (raw.row(i) - impl->mean).cwiseQuotient(impl->scale);

  // Penalty path: inverse strengths logspace(-4, 4), strongest first for warm starts.
  std::vector<double> lambdas;
  for (int c = 0; c < kPenaltyCount; ++c) {
    const double inv = std::pow(10.0, -4.0 + 8.0 * c / (kPenaltyCount - 1));
    lambdas.push_back(1.0 / (inv * static_cast<double>(n)));
  }
  std::vector<double> cv_loss(lambdas.size(), 0.0);
  if (n >= static_cast<Eigen::Index>(2 * kFolds)) {
    for (std::size_t fold = 0; fold < kFolds; ++fold) {
      std::vector<Eigen::Index> tr, te;
      for (Eigen::Index i = 0; i < n; ++i)
        (static_cast<std::size_t>(i) % kFolds == fold ? te : tr).push_back(i);
      const Eigen::MatrixXd xtr = x(tr, Eigen::all);
      const Eigen::VectorXd ytr = y(tr);
      const Eigen::MatrixXd xte = x(te, Eigen::all);
      const Eigen::VectorXd yte = y(te);
      Eigen::VectorXd warm = Eigen::VectorXd::Zero(p + 1);
      for (std::size_t l = 0; l < lambdas.size(); ++l) {
        warm = fit_l1_logistic(xtr, ytr, lambdas[l], warm).beta;
        cv_loss[l] += log_loss(xte, yte, warm);
      }
    }
  }
  const std::size_t best = static_cast<std::size_t>(
      std::min_element(cv_loss.begin(), cv_loss.end()) - cv_loss.begin());
  impl->penalty = lambdas[best];
  impl->beta = fit_l1_logistic(x, y, impl->penalty, Eigen::VectorXd::Zero(p + 1)).beta;
  if (!impl->beta.allFinite()) throw Error(Errc::DegenerateDesign, "propensity fit diverged");
  LogisticPropensity model;
  model.impl_ = std::move(impl);
  return model;
}

double LogisticPropensity::predict(const Unit& unit) const {
  if (!impl_) throw Error(Errc::ModelNotFitted, "propensity model is not fitted");
  const Eigen::RowVectorXd z =
      (detail::scalar_features(unit, impl_->schema) - impl_->mean).cwiseQuotient(impl_->scale);
  const double eta = impl_->beta(0) + z.dot(impl_->beta.tail(z.size()));
  return 1.0 / (1.0 + std::exp(-eta));
}

double LogisticPropensity::penalty() const {
  if (!impl_) throw Error(Errc::ModelNotFitted, "propensity model is not fitted");
  return impl_->penalty;
}

std::vector<bool> baseline_linear_propensity_flags(const Dataset& est, double lo, double hi) {
  if (!(lo <= hi)) throw Error(Errc::InvalidArgument, "propensity bounds are reversed");
  const auto model = LogisticPropensity::fit(est);
  std::vector<bool> flags;
  flags.reserve(est.size());
  for (const Unit& u : est.units()) {
    const double e = model.predict(u);
    flags.push_back(e < lo || e > hi);
  }
  return flags;
}

}  // namespace distmatch
