#include "distmatch/inference.hpp"

#include <algorithm>
#include <cmath>

#include "distmatch/error.hpp"
#include "distmatch/normal.hpp"
#include "regression.hpp"

namespace distmatch {

std::vector<std::size_t> match_counts(const MatchIndex& index, std::size_t k) {
  std::vector<std::size_t> counts(index.size(), 0);
  for (std::size_t row = 0; row < index.size(); ++row) {
    const int other = 1 - index.dataset().unit(row).treatment;
    for (std::size_t r : index.neighbors(row, other, k).neighbor_rows) ++counts[r];
  }
  return counts;
}

std::vector<std::size_t> match_counts(const Dataset& est, std::size_t k, const MetricParams& m) {
  return match_counts(MatchIndex(est, m), k);
}

namespace {

std::vector<double> residual_variance(const MatchIndex& index, const Unit& unit,
                                      const MatchedGroup& group, std::size_t j) {
  const auto mean = index.mean_outcome(group.neighbor_rows);
  const auto own = unit.outcome.values();
  const double scale = static_cast<double>(j) / static_cast<double>(j + 1);
  std::vector<double> out(mean.size());
  for (std::size_t q = 0; q < out.size(); ++q) {
    const double r = own[q] - mean[q];
    out[q] = scale * r * r;
  }
  return out;
}

void require_j(const MatchIndex& index, int arm, std::size_t j, bool self_in_arm) {
  if (j == 0) throw Error(Errc::InvalidArgument, "J must be positive");
  const std::size_t others = index.arm(arm).size() - (self_in_arm ? 1 : 0);
  if (others < j) {
    throw Error(Errc::ArmTooSmall, "arm " + std::to_string(arm) + " has " +
                                       std::to_string(others) + " other units, J = " +
                                       std::to_string(j));
  }
}

}  // namespace

std::vector<double> conditional_variance_hat(const MatchIndex& index, std::size_t row,
                                             std::size_t j) {
  const Unit& unit = index.dataset().unit(row);
  require_j(index, unit.treatment, j, true);
  return residual_variance(index, unit, index.neighbors(row, unit.treatment, j), j);
}

std::vector<double> conditional_variance_hat(const Unit& unit, const Dataset& est, std::size_t j,
                                             const MetricParams& m) {
  const MatchIndex index(est, m);
  require_j(index, unit.treatment, j, est.find(unit.id).has_value());
  return residual_variance(index, unit, index.neighbors(unit, unit.treatment, j), j);
}

VarianceTerms variance_terms(const MatchIndex& index, std::size_t k, std::size_t j) {
  const Dataset& data = index.dataset();
  const std::size_t n = data.size();
  const std::size_t levels = data.grid().size();
  const AteForms forms = ate_forms(index, k);
  const auto ites = ite_curves(index, k);

  VarianceTerms terms;
  terms.heterogeneity.assign(levels, 0.0);
  terms.matching.assign(levels, 0.0);
  const double dk = static_cast<double>(k);
  for (std::size_t row = 0; row < n; ++row) {
    for (std::size_t q = 0; q < levels; ++q) {
      const double r = ites[row][q] - forms.mean_of_ite[q];
      terms.heterogeneity[q] += r * r;
    }
    const double ratio = static_cast<double>(forms.match_counts[row]) / dk;
    const double weight = ratio * ratio + ((2.0 * dk - 1.0) / dk) * ratio;
    if (weight == 0.0) continue;
    const auto sigma2 = conditional_variance_hat(index, row, j);
    for (std::size_t q = 0; q < levels; ++q) terms.matching[q] += weight * sigma2[q];
  }
  const double inv = 1.0 / static_cast<double>(n);
  terms.total.resize(levels);
  for (std::size_t q = 0; q < levels; ++q) {
    terms.heterogeneity[q] *= inv;
    terms.matching[q] *= inv;
    terms.total[q] = terms.heterogeneity[q] + terms.matching[q];
  }
  return terms;
}

std::vector<double> variance_hat(const MatchIndex& index, std::size_t k, std::size_t j) {
  return variance_terms(index, k, j).total;
}

std::vector<double> variance_hat(const Dataset& est, std::size_t k, std::size_t j,
                                 const MetricParams& m) {
  return variance_hat(MatchIndex(est, m), k, j);
}

InferenceReport confidence_band(InferenceReport report, double level, bool center_on_bcm) {
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(Errc::BadLevel, "confidence level must lie in (0,1)");
  }
  if (report.n == 0) throw Error(Errc::InvalidArgument, "band needs the estimation-set size");
  if (report.variance_hat.size() != report.tau_hat.size()) {
    throw Error(Errc::LengthMismatch, "variance and estimate differ in length");
  }
  if (center_on_bcm && !report.tau_bcm) {
    throw Error(Errc::ModelNotFitted, "bias-corrected center requested without bias correction");
  }
  report.ci_level = level;
  report.centered_on_bcm = center_on_bcm;
  const double z = normal_quantile(0.5 * (1.0 + level));
  const auto& center = report.center();
  const double n = static_cast<double>(report.n);
  report.ci_lo.resize(center.size());
  report.ci_hi.resize(center.size());
  for (std::size_t q = 0; q < center.size(); ++q) {
    const double half = z * std::sqrt(std::max(report.variance_hat[q], 0.0) / n);
    report.ci_lo[q] = center[q] - half;
    report.ci_hi[q] = center[q] + half;
  }
  return report;
}

struct ConditionalMeanModel::Impl {
  Schema schema;
  detail::RidgeRegression arms[2];
};

ConditionalMeanModel::ConditionalMeanModel() = default;
ConditionalMeanModel::~ConditionalMeanModel() = default;
ConditionalMeanModel::ConditionalMeanModel(const ConditionalMeanModel&) = default;
ConditionalMeanModel& ConditionalMeanModel::operator=(const ConditionalMeanModel&) = default;

ConditionalMeanModel ConditionalMeanModel::fit(const Dataset& data, double ridge) {
  auto impl = std::make_shared<Impl>();
  impl->schema = data.schema();
  for (int t : {0, 1}) {
    const auto rows = data.arm_rows(t);
    if (rows.size() < 2) {
      throw Error(Errc::DegenerateDesign, "arm " + std::to_string(t) + " too small to regress");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                      detail::flattened_features(data.unit(rows[0]), data.schema()).size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) =
          detail::flattened_features(data.unit(rows[i]), data.schema());
    }
    impl->arms[t].fit(x, detail::outcome_matrix(data, rows), ridge);
  }
  ConditionalMeanModel model;
  model.impl_ = std::move(impl);
  return model;
}

bool ConditionalMeanModel::fitted() const noexcept {
  return impl_ && impl_->arms[0].fitted() && impl_->arms[1].fitted();
}

std::vector<double> ConditionalMeanModel::predict(int arm, const Unit& unit) const {
  if (!fitted()) throw Error(Errc::ModelNotFitted, "conditional mean model is not fitted");
  const Eigen::RowVectorXd y =
      impl_->arms[arm == 0 ? 0 : 1].predict(detail::flattened_features(unit, impl_->schema));
  return std::vector<double>(y.data(), y.data() + y.size());
}

BiasCorrection bias_correction(const MatchIndex& index, std::size_t k,
                               const ConditionalMeanModel& mu) {
  if (!mu.fitted()) throw Error(Errc::ModelNotFitted, "conditional mean model is not fitted");
  const Dataset& data = index.dataset();
  const std::size_t levels = data.grid().size();
  BiasCorrection out;
  out.bias.assign(levels, 0.0);
  const double dk = static_cast<double>(k);
  for (std::size_t row = 0; row < data.size(); ++row) {
    const Unit& unit = data.unit(row);
    const int other = 1 - unit.treatment;
    const double sign = unit.treatment == 1 ? 1.0 : -1.0;
    const auto at_self = mu.predict(other, unit);
    for (std::size_t r : index.neighbors(row, other, k).neighbor_rows) {
      const auto at_match = mu.predict(other, data.unit(r));
      for (std::size_t q = 0; q < levels; ++q) {
        out.bias[q] += sign / dk * (at_self[q] - at_match[q]);
      }
    }
  }
  for (double& b : out.bias) b /= static_cast<double>(data.size());
  const auto tau = ate_forms(index, k).mean_of_ite;
  out.corrected.resize(levels);
  for (std::size_t q = 0; q < levels; ++q) out.corrected[q] = tau[q] - out.bias[q];
  return out;
}

BiasCorrection bias_correction(const Dataset& est, std::size_t k, const MetricParams& m,
                               const ConditionalMeanModel& mu) {
  return bias_correction(MatchIndex(est, m), k, mu);
}

InferenceReport infer_ate(const MatchIndex& index, const InferenceOptions& options) {
  InferenceReport report;
  report.grid = index.dataset().grid_ptr();
  report.tau_hat = estimate_ate(index, options.k).tau;
  report.variance_hat = variance_hat(index, options.k, options.j);
  report.match_counts = match_counts(index, options.k);
  report.j_used = options.j;
  report.n = index.size();
  if (options.bias_correct || options.center_on_bcm) {
    const auto mu = ConditionalMeanModel::fit(index.dataset());
    report.tau_bcm = bias_correction(index, options.k, mu).corrected;
  }
  return confidence_band(std::move(report), options.level, options.center_on_bcm);
}

}  // namespace distmatch
