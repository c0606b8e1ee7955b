#include "distmatch/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "distmatch/error.hpp"

namespace distmatch {

namespace {

void require_pool(std::size_t available, std::size_t k, int arm) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be positive");
  if (available < k) {
    throw Error(Errc::PoolTooSmall, "arm " + std::to_string(arm) + " offers " +
                                        std::to_string(available) + " candidates, need " +
                                        std::to_string(k));
  }
}

MatchedGroup select_nearest(const Dataset& data, const std::vector<std::size_t>& pool,
                            std::span<const double> dist, std::optional<std::size_t> skip,
                            UnitId query_id, int arm, std::size_t k) {
  require_pool(pool.size() - (skip ? 1 : 0), k, arm);
  // pool is id-sorted, so a stable ordering by distance breaks ties by id
  std::vector<std::size_t> order;
  order.reserve(pool.size());
  for (std::size_t p = 0; p < pool.size(); ++p) {
    if (skip && pool[p] == *skip) continue;
    order.push_back(p);
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (dist[a] != dist[b]) return dist[a] < dist[b];
                      return a < b;
                    });
  MatchedGroup group;
  group.query_id = query_id;
  group.treatment_arm = arm;
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t row = pool[order[r]];
    group.neighbor_ids.push_back(data.unit(row).id);
    group.neighbor_rows.push_back(row);
    group.distances.push_back(dist[order[r]]);
  }
  finalize_group(group);
  return group;
}

EffectCurve make_curve(const GridPtr& grid, std::vector<double> tau, std::size_t n_used) {
  EffectCurve curve;
  curve.grid = grid;
  curve.tau = std::move(tau);
  curve.n_used = n_used;
  return curve;
}

QuantileFunction as_quantile_function(const MatchIndex& index, const MatchedGroup& group) {
  std::vector<const QuantileFunction*> members;
  for (std::size_t row : group.neighbor_rows) members.push_back(&index.dataset().unit(row).outcome);
  double lo = 0.0;
  double hi = 0.0;
  for (const QuantileFunction* q : members) {
    lo += q->support_lo();
    hi += q->support_hi();
  }
  std::vector<double> values = index.mean_outcome(group.neighbor_rows);
  const double inv = 1.0 / static_cast<double>(members.size());
  return QuantileFunction(index.dataset().grid_ptr(), std::move(values),
                          Support{lo * inv, hi * inv});
}

}  // namespace

MatchIndex::MatchIndex(const Dataset& est, MetricParams m)
    : data_(&est), metric_(std::move(m)), n_(est.size()), dist_(n_ * n_, 0.0) {
  metric_.validate();
  if (metric_.dimension() != est.dimension()) {
    throw Error(Errc::SchemaMismatch, "metric has " + std::to_string(metric_.dimension()) +
                                          " weights, dataset has " +
                                          std::to_string(est.dimension()) + " covariates");
  }
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = i + 1; j < n_; ++j) {
      const double d = covariate_distance(metric_, est.unit(i), est.unit(j));
      dist_[i * n_ + j] = d;
      dist_[j * n_ + i] = d;
    }
  }
  arms_[0] = est.arm_rows(0);
  arms_[1] = est.arm_rows(1);
}

MatchedGroup MatchIndex::neighbors(std::size_t row, int arm_id, std::size_t k) const {
  const auto& pool = arm(arm_id);
  std::vector<double> dist(pool.size());
  for (std::size_t p = 0; p < pool.size(); ++p) dist[p] = distance(row, pool[p]);
  const bool in_pool = data_->unit(row).treatment == arm_id;
  return select_nearest(*data_, pool, dist, in_pool ? std::optional<std::size_t>(row) : std::nullopt,
                        data_->unit(row).id, arm_id, k);
}

MatchedGroup MatchIndex::neighbors(const Unit& query, int arm_id, std::size_t k) const {
  const auto& pool = arm(arm_id);
  std::vector<double> dist(pool.size());
  std::optional<std::size_t> skip;
  for (std::size_t p = 0; p < pool.size(); ++p) {
    const Unit& candidate = data_->unit(pool[p]);
    if (candidate.id == query.id) skip = pool[p];
    dist[p] = covariate_distance(metric_, query, candidate);
  }
  return select_nearest(*data_, pool, dist, skip, query.id, arm_id, k);
}

std::vector<double> MatchIndex::mean_outcome(std::span<const std::size_t> rows) const {
  std::vector<double> out(data_->grid().size(), 0.0);
  for (std::size_t r : rows) {
    const auto v = data_->unit(r).outcome.values();
    for (std::size_t q = 0; q < out.size(); ++q) out[q] += v[q];
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (double& v : out) v *= inv;
  return out;
}

QuantileFunction conditional_barycenter(const MatchIndex& index, const Unit& query, int arm,
                                        std::size_t k) {
  return as_quantile_function(index, index.neighbors(query, arm, k));
}

QuantileFunction conditional_barycenter(const Unit& query, const Dataset& est, int arm,
                                        std::size_t k, const MetricParams& m) {
  return conditional_barycenter(MatchIndex(est, m), query, arm, k);
}

EffectCurve estimate_cate(const MatchIndex& index, const Unit& query, std::size_t k) {
  const auto treated = index.mean_outcome(index.neighbors(query, 1, k).neighbor_rows);
  auto tau = index.mean_outcome(index.neighbors(query, 0, k).neighbor_rows);
  for (std::size_t q = 0; q < tau.size(); ++q) tau[q] = treated[q] - tau[q];
  return make_curve(index.dataset().grid_ptr(), std::move(tau), 2 * k);
}

EffectCurve estimate_cate(const MatchIndex& index, std::size_t row, std::size_t k) {
  const auto treated = index.mean_outcome(index.neighbors(row, 1, k).neighbor_rows);
  auto tau = index.mean_outcome(index.neighbors(row, 0, k).neighbor_rows);
  for (std::size_t q = 0; q < tau.size(); ++q) tau[q] = treated[q] - tau[q];
  return make_curve(index.dataset().grid_ptr(), std::move(tau), 2 * k);
}

EffectCurve estimate_cate(const Unit& query, const Dataset& est, std::size_t k,
                          const MetricParams& m) {
  return estimate_cate(MatchIndex(est, m), query, k);
}

namespace {

std::vector<double> contrast(const MatchIndex& index, const Unit& unit, const MatchedGroup& group) {
  std::vector<double> tau = index.mean_outcome(group.neighbor_rows);
  const auto own = unit.outcome.values();
  const double sign = unit.treatment == 1 ? 1.0 : -1.0;
  for (std::size_t q = 0; q < tau.size(); ++q) tau[q] = sign * (own[q] - tau[q]);
  return tau;
}

}  // namespace

EffectCurve ite_contrast(const MatchIndex& index, std::size_t row, std::size_t k) {
  const Unit& unit = index.dataset().unit(row);
  const MatchedGroup group = index.neighbors(row, 1 - unit.treatment, k);
  return make_curve(index.dataset().grid_ptr(), contrast(index, unit, group), k + 1);
}

EffectCurve ite_contrast(const Unit& unit, const Dataset& est, std::size_t k,
                         const MetricParams& m) {
  const MatchIndex index(est, m);
  const MatchedGroup group = index.neighbors(unit, 1 - unit.treatment, k);
  return make_curve(est.grid_ptr(), contrast(index, unit, group), k + 1);
}

std::vector<std::vector<double>> ite_curves(const MatchIndex& index, std::size_t k) {
  std::vector<std::vector<double>> out;
  out.reserve(index.size());
  for (std::size_t row = 0; row < index.size(); ++row) out.push_back(ite_contrast(index, row, k).tau);
  return out;
}

AteForms ate_forms(const MatchIndex& index, std::size_t k) {
  const Dataset& data = index.dataset();
  const std::size_t n = data.size();
  const std::size_t levels = data.grid().size();
  if (n == 0) throw Error(Errc::EmptySet, "empty estimation set");

  AteForms forms;
  forms.mean_of_ite.assign(levels, 0.0);
  forms.match_counts.assign(n, 0);
  for (std::size_t row = 0; row < n; ++row) {
    const Unit& unit = data.unit(row);
    const MatchedGroup group = index.neighbors(row, 1 - unit.treatment, k);
    for (std::size_t r : group.neighbor_rows) ++forms.match_counts[r];
    const auto tau = contrast(index, unit, group);
    for (std::size_t q = 0; q < levels; ++q) forms.mean_of_ite[q] += tau[q];
  }

  forms.weighted_sum.assign(levels, 0.0);
  const double dk = static_cast<double>(k);
  for (std::size_t row = 0; row < n; ++row) {
    const Unit& unit = data.unit(row);
    const double weight = (unit.treatment == 1 ? 1.0 : -1.0) *
                          (1.0 + static_cast<double>(forms.match_counts[row]) / dk);
    const auto y = unit.outcome.values();
    for (std::size_t q = 0; q < levels; ++q) forms.weighted_sum[q] += weight * y[q];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : forms.mean_of_ite) v *= inv;
  for (double& v : forms.weighted_sum) v *= inv;
  return forms;
}

EffectCurve estimate_ate(const MatchIndex& index, std::size_t k) {
  const AteForms forms = ate_forms(index, k);
  double scale = 1.0;
  for (const Unit& u : index.dataset().units()) {
    scale = std::max({scale, std::fabs(u.outcome.values().front()),
                      std::fabs(u.outcome.values().back())});
  }
  for (std::size_t q = 0; q < forms.mean_of_ite.size(); ++q) {
    if (std::fabs(forms.mean_of_ite[q] - forms.weighted_sum[q]) > 1e-9 * scale) {
      throw Error(Errc::InternalIdentityViolation,
                  "weighted-sum and mean-of-ITE ATE disagree at level " + std::to_string(q));
    }
  }
  return make_curve(index.dataset().grid_ptr(), forms.mean_of_ite, index.size());
}

EffectCurve estimate_ate(const Dataset& est, std::size_t k, const MetricParams& m) {
  return estimate_ate(MatchIndex(est, m), k);
}

EffectCurve subgroup_cate(const MatchIndex& index, std::size_t k,
                          const std::function<bool(const Unit&)>& member) {
  const Dataset& data = index.dataset();
  std::vector<double> tau(data.grid().size(), 0.0);
  std::size_t used = 0;
  for (std::size_t row = 0; row < data.size(); ++row) {
    if (!member(data.unit(row))) continue;
    const auto ite = ite_contrast(index, row, k).tau;
    for (std::size_t q = 0; q < tau.size(); ++q) tau[q] += ite[q];
    ++used;
  }
  if (used == 0) throw Error(Errc::EmptySet, "subgroup selects no estimation units");
  for (double& v : tau) v /= static_cast<double>(used);
  return make_curve(data.grid_ptr(), std::move(tau), used);
}

}  // namespace distmatch
