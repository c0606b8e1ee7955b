#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "distmatch/dataset.hpp"
#include "distmatch/quantile.hpp"

namespace testing {

using namespace distmatch;

inline GridPtr grid(std::size_t q = 9) { return ProbabilityGrid::uniform(q); }

inline std::vector<double> sorted_values(std::mt19937_64& rng, std::size_t q, double lo = -5.0,
                                         double hi = 5.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(q);
  for (double& x : v) x = u(rng);
  std::sort(v.begin(), v.end());
  return v;
}

inline QuantileFunction random_qf(std::mt19937_64& rng, const GridPtr& g) {
  auto v = sorted_values(rng, g->size());
  const Support s{v.front(), v.back()};
  return QuantileFunction(g, std::move(v), s);
}

inline QuantileFunction qf(const GridPtr& g, std::vector<double> v) {
  const Support s{v.front(), v.back()};
  return QuantileFunction(g, std::move(v), s);
}

inline Unit scalar_unit(UnitId id, int t, const std::vector<double>& x, double y, const GridPtr& g) {
  std::vector<QuantileFunction> cov;
  for (double v : x) cov.push_back(QuantileFunction::point_mass(g, v));
  return Unit{id, t, std::move(cov), QuantileFunction::point_mass(g, y)};
}

inline Unit unit_with_outcome(UnitId id, int t, const std::vector<double>& x, QuantileFunction y) {
  const GridPtr g = y.grid_ptr();
  std::vector<QuantileFunction> cov;
  for (double v : x) cov.push_back(QuantileFunction::point_mass(g, v));
  return Unit{id, t, std::move(cov), std::move(y)};
}

inline Schema scalar_schema(std::size_t d) {
  Schema s;
  for (std::size_t l = 0; l < d; ++l) s.covariates.push_back({"x" + std::to_string(l), CovariateKind::Scalar});
  return s;
}

/// n units, d scalar covariates in [-1, 1], random monotone outcomes, both
/// arms guaranteed at least `min_arm` units.
inline Dataset random_dataset(std::mt19937_64& rng, std::size_t n, std::size_t d, const GridPtr& g,
                              std::size_t min_arm = 3) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Unit> units;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (double& v : x) v = u(rng);
    int t = i < min_arm ? 0 : (i < 2 * min_arm ? 1 : static_cast<int>(rng() % 2));
    units.push_back(unit_with_outcome(static_cast<UnitId>(i), t, x, random_qf(rng, g)));
  }
  std::shuffle(units.begin(), units.end(), rng);
  return Dataset(g, scalar_schema(d), std::move(units));
}

}  // namespace testing

#define CHECK_ERRC(expr, errc)                                   \
  do {                                                           \
    bool thrown_ = false;                                        \
    try {                                                        \
      (void)(expr);                                              \
    } catch (const distmatch::Error& e_) {                       \
      thrown_ = true;                                            \
      CHECK_MESSAGE(e_.code() == (errc), e_.what());             \
    }                                                            \
    CHECK_MESSAGE(thrown_, "expected " #errc " from " #expr);    \
  } while (0)
