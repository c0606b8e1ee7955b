#include "distmatch/wasserstein.hpp"

#include <algorithm>
#include <cmath>

#include "distmatch/error.hpp"

namespace distmatch {

namespace {

void require_same_grid(const QuantileFunction& a, const QuantileFunction& b) {
  if (!same_grid(a.grid_ptr(), b.grid_ptr())) {
    throw Error(Errc::GridMismatch, "quantile functions live on different grids");
  }
}

}  // namespace

double squared_w2(const QuantileFunction& a, const QuantileFunction& b) {
  require_same_grid(a, b);
  const auto w = a.grid().weights();
  const auto x = a.values();
  const auto y = b.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    acc += w[i] * diff * diff;
  }
  return acc;
}

double wasserstein_distance(const QuantileFunction& a, const QuantileFunction& b,
                            WassersteinOrder order) {
  require_same_grid(a, b);
  const auto w = a.grid().weights();
  const auto x = a.values();
  const auto y = b.values();
  switch (order) {
    case WassersteinOrder::One: {
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * std::fabs(x[i] - y[i]);
      return acc;
    }
    case WassersteinOrder::Two:
      return std::sqrt(squared_w2(a, b));
    case WassersteinOrder::Infinity: {
      double worst = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(x[i] - y[i]));
      return worst;
    }
  }
  throw Error(Errc::InvalidArgument, "unknown Wasserstein order");
}

QuantileFunction barycenter(std::span<const QuantileFunction* const> members) {
  if (members.empty()) throw Error(Errc::EmptySet, "barycenter of an empty set");
  const QuantileFunction& first = *members.front();
  if (members.size() == 1) return first;

  std::vector<double> values(first.size(), 0.0);
  double lo = 0.0;
  double hi = 0.0;
  for (const QuantileFunction* m : members) {
    require_same_grid(first, *m);
    const auto v = m->values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += v[i];
    lo += m->support_lo();
    hi += m->support_hi();
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : values) v *= inv;
  for (std::size_t i = 1; i < values.size(); ++i) values[i] = std::max(values[i], values[i - 1]);
  lo = std::min(lo * inv, values.front());
  hi = std::max(hi * inv, values.back());
  return QuantileFunction(first.grid_ptr(), std::move(values), Support{lo, hi});
}

QuantileFunction barycenter(std::span<const QuantileFunction> members) {
  std::vector<const QuantileFunction*> ptrs;
  ptrs.reserve(members.size());
  for (const QuantileFunction& m : members) ptrs.push_back(&m);
  return barycenter(std::span<const QuantileFunction* const>(ptrs));
}

}  // namespace distmatch
