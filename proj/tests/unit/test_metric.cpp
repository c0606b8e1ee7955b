#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "distmatch/error.hpp"
#include "distmatch/metric.hpp"
#include "distmatch/nelder_mead.hpp"
#include "distmatch/wasserstein.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace distmatch;
using testing::grid;
using testing::scalar_schema;
using testing::scalar_unit;

namespace {

double norm2(const std::vector<double>& w) {
  return std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
}

// Brute-force KNN: compute every distance, sort by (distance, id).
std::vector<UnitId> brute_knn(const Unit& q, std::span<const Unit> pool, std::size_t k,
                              const MetricParams& m) {
  std::vector<std::pair<double, UnitId>> all;
  for (const auto& u : pool) {
    if (u.id == q.id) continue;
    double d = 0.0;
    for (std::size_t l = 0; l < m.dimension(); ++l) d += m.weights[l] * squared_w2(q.covariates[l], u.covariates[l]);
    all.emplace_back(d, u.id);
  }
  std::sort(all.begin(), all.end());
  std::vector<UnitId> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(all[i].second);
  return out;
}

// Loss assembled from knn_predict, independent of the cached objective.
double naive_loss(const Dataset& d, const MetricParams& m, std::size_t k) {
  double total = m.c * norm2(m.weights);
  for (int t = 0; t < 2; ++t) {
    std::vector<Unit> arm;
    for (const auto& u : d.units())
      if (u.treatment == t) arm.push_back(u);
    double sum = 0.0;
    for (const auto& u : arm) sum += squared_w2(knn_predict(u, arm, k, m), u.outcome);
    total += sum / static_cast<double>(arm.size());
  }
  return total;
}

Dataset relevance_data(std::uint64_t seed, std::size_t n, const GridPtr& g) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> eps(0, 1);
  std::vector<Unit> units;
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = u(rng), x1 = u(rng);
    const int t = static_cast<int>(i % 2);
    const double mu = 10 + 5 * x0 + 10 * t + eps(rng);
    units.push_back(testing::unit_with_outcome(static_cast<UnitId>(i), t, {x0, x1},
                                               truncated_normal_quantile(mu, 1.0, g)));
  }
  return Dataset(g, scalar_schema(2), std::move(units));
}

}  // namespace

TEST_SUITE("covariate distance") {
  TEST_CASE("identical covariates are at distance zero") {
    std::mt19937_64 rng(1);
    auto d = testing::random_dataset(rng, 5, 3, grid());
    MetricParams m{{0.3, 7.0, 2.0}, 0.0};
    CHECK(covariate_distance(m, d.unit(0), d.unit(0)) == 0.0);
  }

  TEST_CASE("degenerate covariates give weighted squared euclidean distance") {
    auto g = grid();
    auto a = scalar_unit(1, 0, {0.0, 1.0, -2.0}, 0, g);
    auto b = scalar_unit(2, 0, {3.0, 1.0, 0.0}, 0, g);
    CHECK(covariate_distance(MetricParams::uniform(3), a, b) == doctest::Approx(9.0 + 0.0 + 4.0));
    CHECK(covariate_distance(MetricParams{{2.0, 5.0, 0.5}, 0.0}, a, b) == doctest::Approx(18.0 + 2.0));
  }

  TEST_CASE("one-hot mismatch contributes twice the weight") {
    auto g = grid();
    auto a = scalar_unit(1, 0, {1.0, 0.0, 0.0}, 0, g);
    auto b = scalar_unit(2, 0, {0.0, 1.0, 0.0}, 0, g);
    CHECK(covariate_distance(MetricParams::uniform(3, 0.7), a, b) == doctest::Approx(2 * 0.7));
  }

  TEST_CASE("schema mismatch and invalid weights") {
    auto g = grid();
    CHECK_ERRC(covariate_components(scalar_unit(1, 0, {1.0}, 0, g), scalar_unit(2, 0, {1.0, 2.0}, 0, g)),
               Errc::SchemaMismatch);
    CHECK_ERRC((MetricParams{{1.0, -1.0}, 0.0}.validate()), Errc::InvalidArgument);
    CHECK_ERRC((MetricParams{{NAN}, 0.0}.validate()), Errc::InvalidArgument);
  }

  TEST_CASE("pairwise cache agrees with direct components") {
    std::mt19937_64 rng(2);
    auto g = grid(7);
    std::vector<Unit> units;
    for (int i = 0; i < 12; ++i) {
      std::vector<QuantileFunction> cov{QuantileFunction::point_mass(g, i * 0.3), testing::random_qf(rng, g)};
      units.push_back(Unit{i, i % 2, std::move(cov), QuantileFunction::point_mass(g, 0)});
    }
    Schema s{{{"a", CovariateKind::Scalar}, {"b", CovariateKind::Distribution}}};
    Dataset d(g, s, units);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), 0);
    PairwiseComponents pc(d, rows);
    const std::vector<double> w{1.5, 0.25};
    std::vector<double> row(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      pc.distance_row(w, i, row);
      for (std::size_t j = 0; j < d.size(); ++j) {
        const auto direct = covariate_components(d.unit(i), d.unit(j));
        CHECK(pc.component(0, i, j) == doctest::Approx(direct[0]).epsilon(1e-12));
        CHECK(pc.component(1, i, j) == doctest::Approx(direct[1]).epsilon(1e-12));
        CHECK(row[j] == doctest::Approx(1.5 * direct[0] + 0.25 * direct[1]).epsilon(1e-12));
      }
    }
  }
}

TEST_SUITE("knn") {
  TEST_CASE("hand-sorted neighbours") {
    auto g = grid();
    std::vector<Unit> pool{scalar_unit(10, 1, {1.0}, 0, g), scalar_unit(11, 1, {2.0}, 0, g),
                           scalar_unit(12, 1, {10.0}, 0, g)};
    auto q = scalar_unit(1, 0, {0.0}, 0, g);
    auto s = knn_set(q, pool, 2, MetricParams::uniform(1));
    CHECK(s.neighbor_ids == std::vector<UnitId>{10, 11});
    CHECK(s.diameter == doctest::Approx(2.5));
    CHECK(knn_set(q, pool, 3, MetricParams::uniform(1)).neighbor_ids.size() == 3);
    CHECK_ERRC(knn_set(q, pool, 4, MetricParams::uniform(1)), Errc::PoolTooSmall);
  }

  TEST_CASE("ties go to the lower id") {
    auto g = grid();
    std::vector<Unit> pool{scalar_unit(7, 1, {1.0}, 0, g), scalar_unit(3, 1, {-1.0}, 0, g)};
    auto q = scalar_unit(1, 0, {0.0}, 0, g);
    CHECK(knn_set(q, pool, 1, MetricParams::uniform(1)).neighbor_ids == std::vector<UnitId>{3});
  }

  TEST_CASE("prediction is the neighbour barycenter") {
    auto g = grid();
    std::vector<Unit> pool{scalar_unit(2, 1, {1.0}, 0.0, g), scalar_unit(3, 1, {2.0}, 4.0, g),
                           scalar_unit(4, 1, {9.0}, 100.0, g)};
    auto q = scalar_unit(1, 1, {0.0}, 0, g);
    auto f = knn_predict(q, pool, 2, MetricParams::uniform(1));
    CHECK(f.is_point_mass());
    CHECK(f[0] == doctest::Approx(2.0));
    CHECK(knn_predict(q, pool, 1, MetricParams::uniform(1)) == pool[0].outcome);
  }

  TEST_CASE("property: brute force agreement, scale invariance, self exclusion") {
    std::mt19937_64 rng(3);
    auto g = grid(5);
    std::uniform_real_distribution<double> w(0.0, 3.0);
    for (int trial = 0; trial < 60; ++trial) {
      auto d = testing::random_dataset(rng, 30, 3, g);
      std::vector<Unit> pool(d.units().begin(), d.units().end());
      for (auto& u : pool) u.treatment = 1;
      // coarse covariates create ties
      for (auto& u : pool)
        for (auto& c : u.covariates) c = QuantileFunction::point_mass(g, std::round(c[0] * 2) / 2);
      MetricParams m{{w(rng), w(rng), w(rng)}, 0.0};
      const auto& q = pool[rng() % pool.size()];
      const std::size_t k = 1 + rng() % 8;
      auto s = knn_set(q, pool, k, m);
      CHECK(s.neighbor_ids == brute_knn(q, pool, k, m));
      CHECK(std::find(s.neighbor_ids.begin(), s.neighbor_ids.end(), q.id) == s.neighbor_ids.end());
      CHECK(std::is_sorted(s.distances.begin(), s.distances.end()));
      MetricParams scaled = m;
      for (double& x : scaled.weights) x *= 17.5;
      CHECK(knn_set(q, pool, k, scaled).neighbor_ids == s.neighbor_ids);
    }
  }
}

TEST_SUITE("training loss") {
  TEST_CASE("hand-evaluated objective") {
    auto g = grid();
    // treated x = {0, 1, 3}, y = {0, 2, 7}; control x = {0, 3}, y = {1, 5}; k = 1
    // treated: (0-2)^2, (2-0)^2, (7-2)^2 -> 33 / 3 = 11; control: 16 each -> 16
    std::vector<Unit> u{scalar_unit(1, 1, {0.0}, 0.0, g), scalar_unit(2, 1, {1.0}, 2.0, g),
                        scalar_unit(3, 1, {3.0}, 7.0, g), scalar_unit(4, 0, {0.0}, 1.0, g),
                        scalar_unit(5, 0, {3.0}, 5.0, g)};
    Dataset d(g, scalar_schema(1), u);
    CHECK(training_loss(MetricParams{{2.0}, 0.5}, d, 1) == doctest::Approx(0.5 * 2 + 27));
    CHECK(training_loss(MetricParams{{1.0}, 0.0}, d, 1) == doctest::Approx(27));
    CHECK_ERRC(training_loss(MetricParams{{1.0}, 0.0}, d, 2), Errc::ArmTooSmall);
  }

  TEST_CASE("perfect prediction with c = 0 is zero") {
    auto g = grid();
    std::vector<Unit> u;
    for (int i = 0; i < 6; ++i) u.push_back(scalar_unit(i, i % 2, {double(i)}, 3.0 * (i % 2), g));
    Dataset d(g, scalar_schema(1), u);
    CHECK(training_loss(MetricParams{{1.0}, 0.0}, d, 2) == 0.0);
  }

  TEST_CASE("property: c-term additivity, order invariance, naive oracle") {
    std::mt19937_64 rng(4);
    auto g = grid(6);
    std::uniform_real_distribution<double> w(0.0, 2.0);
    for (int trial = 0; trial < 25; ++trial) {
      auto d = testing::random_dataset(rng, 24, 3, g, 5);
      MetricParams m{{w(rng), w(rng), w(rng)}, 0.0};
      const std::size_t k = 1 + rng() % 4;
      const double base = training_loss(m, d, k);
      CHECK(base == doctest::Approx(naive_loss(d, m, k)).epsilon(1e-10));
      MetricParams mc = m;
      mc.c = 0.37;
      CHECK(training_loss(mc, d, k) - base == doctest::Approx(0.37 * norm2(m.weights)).epsilon(1e-9));
      std::vector<Unit> shuffled(d.units().begin(), d.units().end());
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      Dataset ds(g, d.schema(), shuffled);
      CHECK(training_loss(m, ds, k) == doctest::Approx(base).epsilon(1e-12));
    }
  }
}

TEST_SUITE("optimizer") {
  TEST_CASE("nelder-mead finds a box-interior quadratic minimum") {
    auto f = [](std::span<const double> x) { return (x[0] - 1.5) * (x[0] - 1.5) + 3 * (x[1] - 0.25) * (x[1] - 0.25); };
    NelderMeadOptions opt;
    opt.max_evaluations = 2000;
    opt.x_tolerance = 1e-7;
    opt.f_tolerance = 1e-14;
    auto r = nelder_mead_box(f, {5.0, 5.0}, 0.0, 10.0, opt);
    CHECK(r.x[0] == doctest::Approx(1.5).epsilon(1e-4));
    CHECK(r.x[1] == doctest::Approx(0.25).epsilon(1e-3));
    CHECK_FALSE(r.budget_exhausted);
  }

  TEST_CASE("nelder-mead respects the box") {
    auto f = [](std::span<const double> x) { return x[0]; };
    auto r = nelder_mead_box(f, {1.0}, 0.0, 10.0, NelderMeadOptions{});
    CHECK(r.x[0] >= 0.0);
    CHECK(r.value == doctest::Approx(0.0).epsilon(1e-6));
  }

  TEST_CASE("fitted loss never exceeds the starting loss; weights stay in the box") {
    std::mt19937_64 rng(5);
    auto d = testing::random_dataset(rng, 40, 3, grid(5), 6);
    OptimizerConfig cfg;
    cfg.k_train = 3;
    cfg.starts = 3;
    cfg.budget_per_dimension = 60;
    auto fit = fit_metric(d, cfg);
    CHECK(fit.loss <= fit.initial_loss);
    CHECK(fit.initial_loss == doctest::Approx(training_loss(MetricParams::uniform(3, 1.0, cfg.c), d, 3)));
    CHECK(fit.loss == doctest::Approx(training_loss(fit.params, d, 3)));
    for (double w : fit.params.weights) {
      CHECK(w >= 0.0);
      CHECK(w <= cfg.w_max);
    }
  }

  TEST_CASE("single covariate: the regularizer pulls the weight below its start") {
    std::mt19937_64 rng(6);
    auto d = testing::random_dataset(rng, 30, 1, grid(5), 6);
    OptimizerConfig cfg;
    cfg.k_train = 3;
    auto fit = fit_metric(d, cfg);
    CHECK(fit.params.weights[0] <= 1.0);
  }

  TEST_CASE("constant outcomes: loss reduces to the c-term") {
    auto g = grid();
    std::vector<Unit> u;
    for (int i = 0; i < 12; ++i) u.push_back(scalar_unit(i, i % 2, {double(i), double(i * i)}, 4.0, g));
    Dataset d(g, scalar_schema(2), u);
    OptimizerConfig cfg;
    cfg.k_train = 2;
    auto fit = fit_metric(d, cfg);
    CHECK(fit.loss == doctest::Approx(cfg.c * norm2(fit.params.weights)).epsilon(1e-12));
    CHECK(norm2(fit.params.weights) < 1.0);
  }

  TEST_CASE("deterministic for a seed regardless of thread count") {
    std::mt19937_64 rng(7);
    auto d = testing::random_dataset(rng, 40, 2, grid(5), 6);
    OptimizerConfig cfg;
    cfg.k_train = 3;
    cfg.budget_per_dimension = 80;
    cfg.seed = 99;
    auto a = fit_metric(d, cfg);
    cfg.threads = 3;
    auto b = fit_metric(d, cfg);
    CHECK(a.params.weights == b.params.weights);
    CHECK(a.loss == b.loss);
    CHECK(a.trace.size() == b.trace.size());
  }

  TEST_CASE("relevant covariate outweighs an irrelevant one in at least 18 of 20 seeds") {
    auto g = grid(19);
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto d = relevance_data(seed, 200, g);
      OptimizerConfig cfg;
      cfg.seed = seed;
      auto fit = fit_metric(d, cfg);
      if (fit.params.weights[0] > fit.params.weights[1]) ++wins;
    }
    CHECK(wins >= 18);
  }
}
