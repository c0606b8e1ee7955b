#include <cmath>
#include <numeric>
#include <random>

#include "distmatch/error.hpp"
#include "distmatch/inference.hpp"
#include "distmatch/normal.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace distmatch;
using testing::grid;
using testing::scalar_schema;
using testing::scalar_unit;

TEST_CASE("match counts by hand") {
  auto g = grid();
  std::vector<Unit> u{scalar_unit(0, 1, {0.0}, 0, g)};
  for (int i = 1; i <= 5; ++i) u.push_back(scalar_unit(i, 0, {double(i)}, 0, g));
  Dataset est(g, scalar_schema(1), u);
  // the treated query picks only the nearest control; all five controls pick the treated unit
  const auto counts = match_counts(est, 1, MetricParams::uniform(1));
  CHECK(counts == std::vector<std::size_t>{5, 1, 0, 0, 0, 0});
}

TEST_CASE("identical covariates: counts follow the tie rule and still sum to K N") {
  auto g = grid();
  std::vector<Unit> u;
  for (int i = 0; i < 9; ++i) u.push_back(scalar_unit(i, i % 3 == 0, {1.0}, 0, g));
  Dataset est(g, scalar_schema(1), u);
  const auto counts = match_counts(est, 2, MetricParams::uniform(1));
  CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == 18);
  // treated ids 0, 3, 6 and control ids 1, 2 win every tie
  CHECK(counts == std::vector<std::size_t>{6, 3, 3, 6, 0, 0, 0, 0, 0});
}

TEST_CASE("conditional variance") {
  auto g = grid(3);
  std::vector<Unit> u{testing::unit_with_outcome(0, 0, {0.0}, testing::qf(g, {0, 1, 4})),
                      testing::unit_with_outcome(1, 0, {1.0}, testing::qf(g, {0, 3, 4})),
                      testing::unit_with_outcome(2, 0, {9.0}, testing::qf(g, {0, 1, 4})),
                      scalar_unit(3, 1, {0.0}, 0, g), scalar_unit(4, 1, {1.0}, 0, g)};
  Dataset est(g, scalar_schema(1), u);
  MatchIndex index(est, MetricParams::uniform(1));
  // J = 1: neighbour of unit 0 is unit 1, differing by 2 at the middle level
  CHECK(conditional_variance_hat(index, 0, 1) == std::vector<double>{0.0, 2.0, 0.0});
  CHECK(conditional_variance_hat(est.unit(0), est, 1, MetricParams::uniform(1)) ==
        std::vector<double>{0.0, 2.0, 0.0});
  // J = 2 for unit 2: neighbours are units 1 and 0, mean {0, 2, 4}; (2/3) * 1 at the middle
  CHECK(conditional_variance_hat(index, 2, 2)[1] == doctest::Approx(2.0 / 3.0));
  CHECK(conditional_variance_hat(index, 3, 1) == std::vector<double>{0.0, 0.0, 0.0});
  CHECK_ERRC(conditional_variance_hat(index, 3, 2), Errc::ArmTooSmall);
}

TEST_CASE("identical outcomes give zero variance") {
  std::mt19937_64 rng(41);
  auto g = grid(5);
  auto y = testing::random_qf(rng, g);
  std::vector<Unit> u;
  for (int i = 0; i < 12; ++i) u.push_back(testing::unit_with_outcome(i, i % 2, {double(i % 5)}, y));
  Dataset est(g, scalar_schema(1), u);
  // exact up to rounding in the ite mean
  for (double v : variance_hat(est, 3, 2, MetricParams::uniform(1))) CHECK(std::fabs(v) < 1e-20);
}

TEST_CASE("property: variance terms match an independent assembly") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 40; ++trial) {
    auto g = grid(4 + rng() % 6);
    const std::size_t k = 1 + rng() % 4, j = 1 + rng() % 3;
    auto est = testing::random_dataset(rng, 15 + rng() % 25, 2, g, std::max(k, j) + 1);
    MatchIndex index(est, MetricParams{{1.0, 0.5}, 0.0});
    const auto ite = ite_curves(index, k);
    const auto counts = match_counts(index, k);
    const std::size_t n = est.size();
    const auto terms = variance_terms(index, k, j);
    for (std::size_t q = 0; q < g->size(); ++q) {
      double mean = 0.0;
      for (const auto& c : ite) mean += c[q];
      mean /= n;
      double het = 0.0, match = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        het += (ite[i][q] - mean) * (ite[i][q] - mean);
        const double r = static_cast<double>(counts[i]) / k;
        match += (r * r + (2.0 * k - 1) / k * r) * conditional_variance_hat(index, i, j)[q];
      }
      CHECK(terms.heterogeneity[q] == doctest::Approx(het / n).epsilon(1e-10));
      CHECK(terms.matching[q] == doctest::Approx(match / n).epsilon(1e-10));
      CHECK(terms.total[q] == doctest::Approx((het + match) / n).epsilon(1e-10));
      CHECK(terms.total[q] >= 0.0);
    }
    CHECK(variance_hat(index, k, j) == terms.total);
  }
}

TEST_CASE("confidence bands") {
  auto g = grid(3);
  InferenceReport r;
  r.grid = g;
  r.tau_hat = {1.0, 2.0, 3.0};
  r.n = 50;
  r.variance_hat = {0.0, 50.0, 50.0};
  auto b = confidence_band(r, 0.95);
  CHECK(b.ci_lo[0] == 1.0);
  CHECK(b.ci_hi[0] == 1.0);
  CHECK(b.ci_hi[1] - 2.0 == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(3.0 - b.ci_lo[2] == doctest::Approx(normal_quantile(0.975)).epsilon(1e-15));
  CHECK(b.ci_level == 0.95);
  for (double bad : {0.0, 1.0, -0.5, 1.5, double(NAN)}) CHECK_ERRC(confidence_band(r, bad), Errc::BadLevel);
}

TEST_CASE("bias correction") {
  std::mt19937_64 rng(43);
  auto g = grid(5);
  SUBCASE("constant outcomes give a constant model and no bias") {
    std::vector<Unit> u;
    for (int i = 0; i < 20; ++i) {
      std::uniform_real_distribution<double> x(-1, 1);
      u.push_back(scalar_unit(i, i % 2, {x(rng), x(rng)}, 3.0, g));
    }
    Dataset est(g, scalar_schema(2), u);
    auto mu = ConditionalMeanModel::fit(est);
    auto bc = bias_correction(est, 3, MetricParams::uniform(2), mu);
    for (double v : bc.bias) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-8));
  }
  SUBCASE("exact matching gives no bias") {
    auto est = testing::random_dataset(rng, 20, 2, g, 6);
    std::vector<Unit> u(est.units().begin(), est.units().end());
    for (std::size_t i = 0; i < u.size(); ++i)
      for (auto& c : u[i].covariates) c = QuantileFunction::point_mass(g, double(i / 8));
    // groups of 8 share covariates, and each group holds both arms at least 3 times
    for (std::size_t i = 0; i < u.size(); ++i) u[i].treatment = static_cast<int>(i % 2);
    Dataset eq(g, est.schema(), u);
    auto mu = ConditionalMeanModel::fit(eq);
    auto bc = bias_correction(eq, 2, MetricParams::uniform(2), mu);
    for (double v : bc.bias) CHECK(v == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
  }
  SUBCASE("unfitted model") {
    ConditionalMeanModel mu;
    CHECK_FALSE(mu.fitted());
    CHECK_ERRC(mu.predict(0, scalar_unit(1, 0, {0.0, 0.0}, 0, g)), Errc::ModelNotFitted);
  }
}

TEST_CASE("infer_ate assembles the pieces") {
  std::mt19937_64 rng(44);
  auto g = grid(7);
  auto est = testing::random_dataset(rng, 40, 2, g, 6);
  MatchIndex index(est, MetricParams::uniform(2));
  InferenceOptions opt;
  opt.k = 3;
  opt.bias_correct = true;
  auto r = infer_ate(index, opt);
  CHECK(r.tau_hat == estimate_ate(index, 3).tau);
  CHECK(r.variance_hat == variance_hat(index, 3, 2));
  CHECK(r.match_counts == match_counts(index, 3));
  REQUIRE(r.tau_bcm.has_value());
  const auto bc = bias_correction(index, 3, ConditionalMeanModel::fit(est));
  for (std::size_t q = 0; q < g->size(); ++q) {
    CHECK((*r.tau_bcm)[q] == doctest::Approx(bc.corrected[q]).epsilon(1e-12));
    const double half = normal_quantile(0.975) * std::sqrt(r.variance_hat[q] / est.size());
    CHECK(r.ci_hi[q] == doctest::Approx(r.tau_hat[q] + half).epsilon(1e-12));
    CHECK(r.ci_lo[q] <= r.tau_hat[q]);
  }
  CHECK(r.j_used == 2);
  CHECK(r.n == est.size());
}
