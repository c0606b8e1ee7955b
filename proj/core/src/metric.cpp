#include "distmatch/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "distmatch/error.hpp"
#include "distmatch/nelder_mead.hpp"
#include "distmatch/parallel.hpp"
#include "distmatch/wasserstein.hpp"

namespace distmatch {

MetricParams MetricParams::uniform(std::size_t dimension, double weight, double c) {
  return MetricParams{std::vector<double>(dimension, weight), c};
}

void MetricParams::validate() const {
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(Errc::InvalidArgument, "metric weights must be finite and nonnegative");
    }
  }
  if (!(c >= 0.0) || !std::isfinite(c)) {
    throw Error(Errc::InvalidArgument, "regularization strength must be nonnegative");
  }
}

namespace {

double pair_component(const QuantileFunction& a, const QuantileFunction& b) {
  if (a.is_point_mass() && b.is_point_mass()) {
    if (!same_grid(a.grid_ptr(), b.grid_ptr())) {
      throw Error(Errc::GridMismatch, "covariates live on different grids");
    }
    const double diff = a[0] - b[0];
    return a.grid().mass() * diff * diff;
  }
  return squared_w2(a, b);
}

void require_schema(const Unit& a, const Unit& b, std::size_t dim) {
  if (a.covariates.size() != b.covariates.size() || a.covariates.size() != dim) {
    throw Error(Errc::SchemaMismatch, "units " + std::to_string(a.id) + " and " +
                                          std::to_string(b.id) +
                                          " disagree with the metric dimension");
  }
}

// Keeps the k smallest (distance, position) pairs seen so far, ordered.
// Positions of the k smallest entries of dist (skipping `skip`), nearest
// first; equal distances keep the lower position. `out` must hold k slots.
void select_nearest(const double* dist, std::size_t n, std::size_t skip, std::size_t k,
                    double* best, std::size_t* out) {
  constexpr std::size_t kChunk = 8;
  std::size_t filled = 0;
  double worst = std::numeric_limits<double>::infinity();
  auto offer = [&](std::size_t j) {
    const double v = dist[j];
    if (j == skip || (filled == k && !(v < worst))) return;
    std::size_t p = filled < k ? filled++ : k - 1;
    while (p > 0 && best[p - 1] > v) {
      best[p] = best[p - 1];
      out[p] = out[p - 1];
      --p;
    }
    best[p] = v;
    out[p] = j;
    if (filled == k) worst = best[k - 1];
  };
  std::size_t j = 0;
  for (; j + kChunk <= n; j += kChunk) {
    if (filled == k) {
      // most chunks hold nothing closer than the current k-th neighbor
      bool closer = false;
      for (std::size_t c = 0; c < kChunk; ++c) closer |= dist[j + c] < worst;
      if (!closer) continue;
    }
    for (std::size_t c = 0; c < kChunk; ++c) offer(j + c);
  }
  for (; j < n; ++j) offer(j);
}

}  // namespace

std::vector<double> covariate_components(const Unit& a, const Unit& b) {
  require_schema(a, b, a.covariates.size());
  std::vector<double> out(a.covariates.size());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] = pair_component(a.covariates[l], b.covariates[l]);
  return out;
}

double covariate_distance(const MetricParams& m, const Unit& a, const Unit& b) {
  require_schema(a, b, m.dimension());
  double acc = 0.0;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    if (m.weights[l] == 0.0) continue;
    acc += m.weights[l] * pair_component(a.covariates[l], b.covariates[l]);
  }
  return acc;
}

void finalize_group(MatchedGroup& group) {
  group.diameter = group.distances.empty()
                       ? 0.0
                       : std::accumulate(group.distances.begin(), group.distances.end(), 0.0) /
                             static_cast<double>(group.distances.size());
}

MatchedGroup knn_set(const Unit& query, std::span<const Unit> pool, std::size_t k,
                     const MetricParams& m) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be positive");
  m.validate();
  MatchedGroup group;
  group.query_id = query.id;
  group.treatment_arm = pool.empty() ? 0 : pool.front().treatment;

  std::vector<std::size_t> order;
  order.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].treatment != group.treatment_arm) {
      throw Error(Errc::InvalidArgument, "knn pool mixes treatment arms");
    }
    if (pool[i].id != query.id) order.push_back(i);
  }
  if (order.size() < k) {
    throw Error(Errc::PoolTooSmall, "pool holds " + std::to_string(order.size()) +
                                        " candidates, need " + std::to_string(k));
  }
  std::vector<double> dist(pool.size(), 0.0);
  for (std::size_t i : order) dist[i] = covariate_distance(m, query, pool[i]);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (dist[a] != dist[b]) return dist[a] < dist[b];
                      return pool[a].id < pool[b].id;
                    });
  for (std::size_t r = 0; r < k; ++r) {
    group.neighbor_ids.push_back(pool[order[r]].id);
    group.neighbor_rows.push_back(order[r]);
    group.distances.push_back(dist[order[r]]);
  }
  finalize_group(group);
  return group;
}

QuantileFunction knn_predict(const Unit& query, std::span<const Unit> pool, std::size_t k,
                             const MetricParams& m) {
  const MatchedGroup group = knn_set(query, pool, k, m);
  std::vector<const QuantileFunction*> members;
  members.reserve(k);
  for (std::size_t row : group.neighbor_rows) members.push_back(&pool[row].outcome);
  return barycenter(std::span<const QuantileFunction* const>(members));
}

PairwiseComponents::PairwiseComponents(const Dataset& data, std::span<const std::size_t> rows)
    : n_(rows.size()), dim_(data.dimension()), mass_(data.grid().mass()) {
  point_.resize(dim_);
  offset_.resize(dim_);
  for (std::size_t l = 0; l < dim_; ++l) {
    bool all_points = true;
    for (std::size_t i : rows) all_points = all_points && data.unit(i).covariates[l].is_point_mass();
    point_[l] = all_points;
    if (all_points) {
      offset_[l] = coords_.size();
      for (std::size_t i : rows) coords_.push_back(data.unit(i).covariates[l][0]);
      continue;
    }
    offset_[l] = blocks_.size();
    blocks_.resize(blocks_.size() + n_ * n_, 0.0);
    double* block = blocks_.data() + offset_[l];
    for (std::size_t i = 0; i < n_; ++i) {
      const QuantileFunction& xi = data.unit(rows[i]).covariates[l];
      for (std::size_t j = i + 1; j < n_; ++j) {
        const double v = pair_component(xi, data.unit(rows[j]).covariates[l]);
        block[i * n_ + j] = v;
        block[j * n_ + i] = v;
      }
    }
  }
}

double PairwiseComponents::component(std::size_t l, std::size_t i, std::size_t j) const {
  if (point_[l]) {
    const double diff = coords_[offset_[l] + i] - coords_[offset_[l] + j];
    return mass_ * diff * diff;
  }
  return blocks_[offset_[l] + i * n_ + j];
}

namespace {

// o[j] += sum_m wm[m] * (x[m][j] - xi[m])^2 for M point-mass covariates in
// one pass, adding terms in covariate order.
template <std::size_t M, bool Fresh>
void add_point_terms(double* __restrict o, std::size_t n, const double* const* x, const double* wm,
                     const double* xi) {
  for (std::size_t j = 0; j < n; ++j) {
    double acc = Fresh ? 0.0 : o[j];
    for (std::size_t m = 0; m < M; ++m) {
      const double diff = x[m][j] - xi[m];
      acc += wm[m] * (diff * diff);
    }
    o[j] = acc;
  }
}

template <bool Fresh>
void add_point_terms(std::size_t count, double* o, std::size_t n, const double* const* x,
                     const double* wm, const double* xi) {
  switch (count) {
    case 1: add_point_terms<1, Fresh>(o, n, x, wm, xi); break;
    case 2: add_point_terms<2, Fresh>(o, n, x, wm, xi); break;
    case 3: add_point_terms<3, Fresh>(o, n, x, wm, xi); break;
    case 4: add_point_terms<4, Fresh>(o, n, x, wm, xi); break;
    default: break;
  }
}

}  // namespace

void PairwiseComponents::distance_row(std::span<const double> weights, std::size_t i,
                                      std::span<double> out) const {
  constexpr std::size_t kFuse = 4;
  double* __restrict o = out.data();
  // The first pass writes the row instead of adding to it.
  bool fresh = true;
  const double* x[kFuse];
  double wm[kFuse];
  double xi[kFuse];
  std::size_t pending = 0;
  auto flush = [&] {
    if (pending == 0) return;
    if (fresh) {
      add_point_terms<true>(pending, o, n_, x, wm, xi);
    } else {
      add_point_terms<false>(pending, o, n_, x, wm, xi);
    }
    fresh = false;
    pending = 0;
  };
  for (std::size_t l = 0; l < dim_; ++l) {
    const double w = weights[l];
    if (w == 0.0) continue;
    if (point_[l]) {
      x[pending] = coords_.data() + offset_[l];
      xi[pending] = x[pending][i];
      wm[pending] = w * mass_;
      if (++pending == kFuse) flush();
    } else {
      flush();
      const double* __restrict row = blocks_.data() + offset_[l] + i * n_;
      if (fresh) {
        for (std::size_t j = 0; j < n_; ++j) o[j] = w * row[j];
      } else {
        for (std::size_t j = 0; j < n_; ++j) o[j] += w * row[j];
      }
      fresh = false;
    }
  }
  flush();
  if (fresh) std::fill(out.begin(), out.end(), 0.0);
}

TrainingObjective::TrainingObjective(const Dataset& train, std::size_t k)
    : k_(k), dim_(train.dimension()) {
  if (k == 0) throw Error(Errc::InvalidArgument, "k must be positive");
  train.require_arms(k + 1, "training loss (leave-self-out needs more than k units per arm)");
  const auto weights = train.grid().weights();
  for (int t : {1, 0}) {
    std::vector<std::size_t> rows = train.arm_rows(t);
    PairwiseComponents comps(train, rows);
    const std::size_t n = rows.size();
    std::vector<double> gram(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto yi = train.unit(rows[i]).outcome.values();
      for (std::size_t j = i; j < n; ++j) {
        const auto yj = train.unit(rows[j]).outcome.values();
        double acc = 0.0;
        for (std::size_t q = 0; q < yi.size(); ++q) acc += weights[q] * yi[q] * yj[q];
        gram[i * n + j] = acc;
        gram[j * n + i] = acc;
      }
    }
    arms_.push_back(Arm{std::move(rows), std::move(comps), std::move(gram)});
  }
}

double TrainingObjective::arm_error(const Arm& arm, std::span<const double> weights) const {
  const std::size_t n = arm.rows.size();
  std::vector<double> dist(n);
  std::vector<std::size_t> nbrs(k_);
  std::vector<double> best(k_);
  const double inv_k = 1.0 / static_cast<double>(k_);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    arm.components.distance_row(weights, i, dist);
    select_nearest(dist.data(), n, i, k_, best.data(), nbrs.data());

    // ||mean_a y_a - y_i||^2 expanded through the Gram matrix
    double cross = 0.0;
    double within = 0.0;
    for (std::size_t a : nbrs) {
      const double* g = arm.gram.data() + a * n;
      cross += g[i];
      for (std::size_t b : nbrs) within += g[b];
    }
    const double err = within * inv_k * inv_k - 2.0 * inv_k * cross + arm.gram[i * n + i];
    total += std::max(err, 0.0);
  }
  return total / static_cast<double>(n);
}

double TrainingObjective::prediction_error(std::span<const double> weights) const {
  if (weights.size() != dim_) {
    throw Error(Errc::SchemaMismatch, "metric has " + std::to_string(weights.size()) +
                                          " weights, data has " + std::to_string(dim_) +
                                          " covariates");
  }
  double acc = 0.0;
  for (const Arm& arm : arms_) acc += arm_error(arm, weights);
  return acc;
}

double TrainingObjective::loss(std::span<const double> weights, double c) const {
  double norm = 0.0;
  for (double w : weights) norm += w * w;
  return c * std::sqrt(norm) + prediction_error(weights);
}

double TrainingObjective::operator()(const MetricParams& m) const {
  m.validate();
  return loss(m.weights, m.c);
}

double training_loss(const MetricParams& m, const Dataset& train, std::size_t k) {
  return TrainingObjective(train, k)(m);
}

FitResult fit_metric(const Dataset& train, const OptimizerConfig& config) {
  if (config.starts == 0) throw Error(Errc::InvalidArgument, "need at least one optimizer start");
  if (!(config.w_max > 0.0)) throw Error(Errc::InvalidArgument, "w_max must be positive");
  if (!(config.c >= 0.0)) throw Error(Errc::InvalidArgument, "c must be nonnegative");
  const TrainingObjective objective(train, config.k_train);
  const std::size_t dim = objective.dimension();
  if (dim == 0) throw Error(Errc::InvalidArgument, "dataset has no covariates");

  std::vector<std::vector<double>> starts(config.starts, std::vector<double>(dim, 1.0));
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> draw(0.0, 2.0);
  for (std::size_t s = 1; s < starts.size(); ++s) {
    for (double& w : starts[s]) w = std::min(draw(rng), config.w_max);
  }
  for (double& w : starts[0]) w = std::min(w, config.w_max);

  NelderMeadOptions options;
  options.max_evaluations = config.budget_per_dimension * dim;
  options.initial_step = config.initial_step;
  options.x_tolerance = config.x_tolerance;
  options.f_tolerance = config.f_tolerance;
  options.max_restarts = config.max_restarts;

  std::vector<NelderMeadResult> runs(starts.size());
  parallel_for(starts.size(), config.threads, [&](std::size_t s) {
    runs[s] = nelder_mead_box(
        [&](std::span<const double> w) { return objective.loss(w, config.c); }, starts[s], 0.0,
        config.w_max, options);
  });

  FitResult fit;
  fit.initial_loss = runs[0].improvements.front().second;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    fit.evaluations += runs[s].evaluations;
    for (const auto& [evaluation, loss] : runs[s].improvements) {
      fit.trace.push_back({s, evaluation, loss});
    }
    if (s == 0 || runs[s].value < runs[fit.best_start].value) fit.best_start = s;
  }
  const NelderMeadResult& best = runs[fit.best_start];
  fit.params = MetricParams{best.x, config.c};
  fit.loss = best.value;
  fit.budget_exhausted = best.budget_exhausted;
  return fit;
}

}  // namespace distmatch
