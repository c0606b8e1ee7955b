#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "distmatch/error.hpp"
#include "distmatch/inference.hpp"
#include "distmatch/matching.hpp"
#include "distmatch/wasserstein.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace distmatch;
using testing::grid;
using testing::scalar_schema;
using testing::scalar_unit;

namespace {

// Sorted (distance, id) neighbours of `q` among est units of `arm`, skipping q's id.
std::vector<std::size_t> brute_rows(const Dataset& est, const Unit& q, int arm, std::size_t k,
                                    const MetricParams& m) {
  std::vector<std::tuple<double, UnitId, std::size_t>> all;
  for (std::size_t r = 0; r < est.size(); ++r) {
    const auto& u = est.unit(r);
    if (u.treatment != arm || u.id == q.id) continue;
    double d = 0.0;
    for (std::size_t l = 0; l < m.dimension(); ++l) d += m.weights[l] * squared_w2(q.covariates[l], u.covariates[l]);
    all.emplace_back(d, u.id, r);
  }
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < k; ++i) rows.push_back(std::get<2>(all[i]));
  return rows;
}

std::vector<double> brute_mean(const Dataset& est, const std::vector<std::size_t>& rows) {
  std::vector<double> out(est.grid().size(), 0.0);
  for (std::size_t r : rows)
    for (std::size_t q = 0; q < out.size(); ++q) out[q] += est.unit(r).outcome[q];
  for (double& v : out) v /= static_cast<double>(rows.size());
  return out;
}

// Mean-of-ITE ATE assembled from the brute-force neighbours.
std::vector<double> brute_ate(const Dataset& est, std::size_t k, const MetricParams& m) {
  std::vector<double> ate(est.grid().size(), 0.0);
  for (const auto& u : est.units()) {
    const auto cf = brute_mean(est, brute_rows(est, u, 1 - u.treatment, k, m));
    const double sign = u.treatment == 1 ? 1.0 : -1.0;
    for (std::size_t q = 0; q < ate.size(); ++q) ate[q] += sign * (u.outcome[q] - cf[q]);
  }
  for (double& v : ate) v /= static_cast<double>(est.size());
  return ate;
}

}  // namespace

TEST_SUITE("conditional barycenter and cate") {
  TEST_CASE("constant pool returns its outcome") {
    auto g = grid();
    auto y = testing::qf(g, {0, 1, 2, 3, 4, 5, 6, 7, 8});
    std::vector<Unit> u;
    for (int i = 0; i < 3; ++i) u.push_back(testing::unit_with_outcome(i, 1, {double(i)}, y));
    u.push_back(scalar_unit(10, 0, {0.0}, 0, g));
    Dataset est(g, scalar_schema(1), u);
    auto q = scalar_unit(99, 0, {0.5}, 0, g);
    CHECK(conditional_barycenter(q, est, 1, 3, MetricParams::uniform(1)) == y);
  }

  TEST_CASE("midpoint of two degenerate neighbours") {
    auto g = grid();
    std::vector<Unit> u{scalar_unit(1, 1, {1.0}, 1.0, g), scalar_unit(2, 1, {2.0}, 3.0, g),
                        scalar_unit(3, 1, {50.0}, 80.0, g), scalar_unit(4, 0, {0.0}, 0, g)};
    Dataset est(g, scalar_schema(1), u);
    auto b = conditional_barycenter(scalar_unit(99, 0, {0.0}, 0, g), est, 1, 2, MetricParams::uniform(1));
    CHECK(b[3] == doctest::Approx(2.0));
    CHECK(b.is_point_mass());
  }

  TEST_CASE("random 6-unit arm matches a brute-force top-3 average") {
    std::mt19937_64 rng(21);
    auto g = grid(8);
    for (int trial = 0; trial < 30; ++trial) {
      auto est = testing::random_dataset(rng, 12, 2, g, 6);
      MetricParams m{{0.5 + trial * 0.1, 1.0}, 0.0};
      auto q = scalar_unit(1000, 0, {0.1, -0.2}, 0, g);
      auto b = conditional_barycenter(q, est, 1, 3, m);
      const auto oracle = brute_mean(est, brute_rows(est, q, 1, 3, m));
      for (std::size_t i = 0; i < g->size(); ++i) CHECK(b[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
      MatchIndex index(est, m);
      CHECK(conditional_barycenter(index, q, 1, 3) == b);
    }
  }

  TEST_CASE("identical pools cancel and location shifts carry through") {
    auto g = grid();
    std::vector<Unit> same, shifted;
    for (int i = 0; i < 4; ++i) {
      same.push_back(scalar_unit(2 * i, 0, {double(i)}, 3.0 * i, g));
      same.push_back(scalar_unit(2 * i + 1, 1, {double(i)}, 3.0 * i, g));
      shifted.push_back(scalar_unit(2 * i, 0, {double(i)}, 0.0, g));
      shifted.push_back(scalar_unit(2 * i + 1, 1, {double(i) + 0.1}, 10.0, g));
    }
    auto q = scalar_unit(100, 0, {1.2}, 0, g);
    auto zero = estimate_cate(q, Dataset(g, scalar_schema(1), same), 2, MetricParams::uniform(1));
    for (double v : zero.tau) CHECK(v == 0.0);
    auto ten = estimate_cate(q, Dataset(g, scalar_schema(1), shifted), 2, MetricParams::uniform(1));
    for (double v : ten.tau) CHECK(v == doctest::Approx(10.0));
  }
}

TEST_SUITE("ite and ate") {
  TEST_CASE("ite contrasts") {
    auto g = grid();
    std::vector<Unit> u{scalar_unit(1, 1, {0.0}, 4.0, g), scalar_unit(2, 0, {0.1}, 4.0, g),
                        scalar_unit(3, 0, {0.2}, 4.0, g), scalar_unit(4, 0, {5.0}, 0.0, g),
                        scalar_unit(5, 1, {5.1}, 5.0, g), scalar_unit(6, 1, {5.2}, 5.0, g)};
    Dataset est(g, scalar_schema(1), u);
    for (double v : ite_contrast(est.unit(0), est, 2, MetricParams::uniform(1)).tau) CHECK(v == 0.0);
    for (double v : ite_contrast(est.unit(3), est, 2, MetricParams::uniform(1)).tau) CHECK(v == 5.0);
  }

  TEST_CASE("two treated at 10, two control at 0, equal covariates") {
    auto g = grid();
    std::vector<Unit> u{scalar_unit(1, 1, {1.0}, 10.0, g), scalar_unit(2, 1, {1.0}, 10.0, g),
                        scalar_unit(3, 0, {1.0}, 0.0, g), scalar_unit(4, 0, {1.0}, 0.0, g)};
    Dataset est(g, scalar_schema(1), u);
    auto ate = estimate_ate(est, 2, MetricParams::uniform(1));
    for (double v : ate.tau) CHECK(v == doctest::Approx(10.0).epsilon(1e-12));
    MatchIndex index(est, MetricParams::uniform(1));
    const auto forms = ate_forms(index, 2);
    for (std::size_t q = 0; q < g->size(); ++q) {
      CHECK(forms.mean_of_ite[q] == doctest::Approx(10.0));
      CHECK(forms.weighted_sum[q] == doctest::Approx(10.0));
    }
  }

  TEST_CASE("counterfactual neighbours equal to own outcome give zero ate") {
    auto g = grid();
    std::vector<Unit> u;
    for (int i = 0; i < 8; ++i) u.push_back(scalar_unit(i, i % 2, {double(i / 2)}, 2.0 * (i / 2), g));
    Dataset est(g, scalar_schema(1), u);
    for (double v : estimate_ate(est, 1, MetricParams::uniform(1)).tau) CHECK(v == doctest::Approx(0.0));
  }

  TEST_CASE("property: dual-form identity and brute-force agreement on random data") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<double> w(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
      auto g = grid(3 + rng() % 10);
      const std::size_t n = 12 + rng() % 39;
      const std::size_t k = 1 + rng() % 5;
      auto est = testing::random_dataset(rng, n, 3, g, k + 1);
      MetricParams m{{w(rng), w(rng), w(rng)}, 0.0};
      MatchIndex index(est, m);
      const auto forms = ate_forms(index, k);
      double scale = 1.0;
      for (const auto& u : est.units()) scale = std::max({scale, std::fabs(u.outcome.support_lo()), std::fabs(u.outcome.support_hi())});
      const auto oracle = brute_ate(est, k, m);
      for (std::size_t q = 0; q < g->size(); ++q) {
        CHECK(std::fabs(forms.mean_of_ite[q] - forms.weighted_sum[q]) <= 1e-9 * scale);
        CHECK(forms.mean_of_ite[q] == doctest::Approx(oracle[q]).epsilon(1e-10));
      }
      const auto counts = match_counts(index, k);
      CHECK(std::accumulate(counts.begin(), counts.end(), std::size_t{0}) == k * n);
      CHECK(forms.match_counts == counts);
    }
  }

  TEST_CASE("property: subgroup partition and permutation invariance") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
      auto g = grid(5);
      auto est = testing::random_dataset(rng, 30, 2, g, 4);
      MetricParams m = MetricParams::uniform(2);
      MatchIndex index(est, m);
      const std::size_t k = 3;
      auto all = subgroup_cate(index, k, [](const Unit&) { return true; });
      auto lo = subgroup_cate(index, k, [](const Unit& u) { return u.covariates[0][0] < 0.0; });
      auto hi = subgroup_cate(index, k, [](const Unit& u) { return u.covariates[0][0] >= 0.0; });
      CHECK(lo.n_used + hi.n_used == est.size());
      const auto ate = estimate_ate(index, k);
      for (std::size_t q = 0; q < g->size(); ++q) {
        const double mixed = (lo.n_used * lo.tau[q] + hi.n_used * hi.tau[q]) / est.size();
        CHECK(all.tau[q] == doctest::Approx(mixed).epsilon(1e-12));
        CHECK(all.tau[q] == doctest::Approx(ate.tau[q]).epsilon(1e-12));
      }
      std::vector<Unit> shuffled(est.units().begin(), est.units().end());
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      Dataset est2(g, est.schema(), shuffled);
      const auto ate2 = estimate_ate(est2, k, m);
      for (std::size_t q = 0; q < g->size(); ++q) CHECK(ate2.tau[q] == doctest::Approx(ate.tau[q]).epsilon(1e-12));
      const auto& query = est.unit(0);
      const auto row2 = *est2.find(query.id);
      CHECK(estimate_cate(index, 0, k).tau == estimate_cate(MatchIndex(est2, m), row2, k).tau);
    }
  }

  TEST_CASE("pool too small") {
    auto g = grid();
    std::vector<Unit> u{scalar_unit(1, 1, {0.0}, 0, g), scalar_unit(2, 0, {0.0}, 0, g)};
    Dataset est(g, scalar_schema(1), u);
    CHECK_ERRC(estimate_ate(est, 2, MetricParams::uniform(1)), Errc::PoolTooSmall);
  }
}
