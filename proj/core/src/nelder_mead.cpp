#include "distmatch/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "distmatch/error.hpp"

namespace distmatch {

namespace {

constexpr double kReflect = 1.0;
constexpr double kExpand = 2.0;
constexpr double kContract = 0.5;
constexpr double kShrink = 0.5;

struct Vertex {
  std::vector<double> x;
  double f = 0.0;
};

}  // namespace

NelderMeadResult nelder_mead_box(const std::function<double(std::span<const double>)>& objective,
                                 std::vector<double> start, double lo, double hi,
                                 const NelderMeadOptions& options) {
  const std::size_t dim = start.size();
  if (dim == 0) throw Error(Errc::InvalidArgument, "cannot optimize over zero dimensions");
  if (!(lo < hi)) throw Error(Errc::InvalidArgument, "empty optimization box");

  NelderMeadResult result;
  double best = std::numeric_limits<double>::infinity();
  auto project = [&](std::vector<double>& x) {
    for (double& v : x) v = std::clamp(v, lo, hi);
  };
  auto eval = [&](const std::vector<double>& x) {
    const double f = objective(x);
    ++result.evaluations;
    if (f < best) {
      best = f;
      result.improvements.emplace_back(result.evaluations, f);
    }
    return f;
  };

  project(start);
  std::vector<Vertex> simplex(dim + 1);
  auto build = [&](const std::vector<double>& origin, double f_origin) {
    simplex[0] = {origin, f_origin};
    for (std::size_t i = 0; i < dim; ++i) {
      std::vector<double> x = origin;
      const double step = options.initial_step * std::max(std::fabs(origin[i]), 1.0);
      x[i] = origin[i] + step <= hi ? origin[i] + step : origin[i] - step;
      project(x);
      simplex[i + 1].x = std::move(x);
      simplex[i + 1].f = eval(simplex[i + 1].x);
    }
  };
  build(start, eval(start));
  // Projection can flatten the simplex onto a face of the box, so a
  // converged simplex is rebuilt around its best vertex until a rebuild
  // no longer improves the value.
  double f_at_restart = std::numeric_limits<double>::infinity();
  std::size_t restarts = 0;

  auto by_value = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };
  std::vector<double> centroid(dim);
  auto along = [&](double coeff) {
    std::vector<double> x(dim);
    const auto& worst = simplex.back().x;
    for (std::size_t i = 0; i < dim; ++i) x[i] = centroid[i] + coeff * (centroid[i] - worst[i]);
    project(x);
    return x;
  };

  while (true) {
    std::stable_sort(simplex.begin(), simplex.end(), by_value);

    double x_spread = 0.0;
    for (std::size_t v = 1; v <= dim; ++v) {
      for (std::size_t i = 0; i < dim; ++i) {
        x_spread = std::max(x_spread, std::fabs(simplex[v].x[i] - simplex[0].x[i]));
      }
    }
    const double f_spread = simplex.back().f - simplex.front().f;
    const bool converged = x_spread <= options.x_tolerance && f_spread <= options.f_tolerance;
    if (converged && (restarts >= options.max_restarts ||
                      !(simplex.front().f < f_at_restart - options.f_tolerance))) {
      break;
    }
    if (result.evaluations >= options.max_evaluations) {
      result.budget_exhausted = true;
      break;
    }
    if (converged) {
      f_at_restart = simplex.front().f;
      ++restarts;
      const Vertex origin = simplex.front();
      build(origin.x, origin.f);
      continue;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t v = 0; v < dim; ++v) {
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += simplex[v].x[i];
    }
    for (double& c : centroid) c /= static_cast<double>(dim);

    std::vector<double> reflected = along(kReflect);
    const double f_reflected = eval(reflected);

    if (f_reflected < simplex.front().f) {
      std::vector<double> expanded = along(kReflect * kExpand);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex.back() = {std::move(expanded), f_expanded};
      } else {
        simplex.back() = {std::move(reflected), f_reflected};
      }
      continue;
    }
    if (f_reflected < simplex[dim - 1].f) {
      simplex.back() = {std::move(reflected), f_reflected};
      continue;
    }

    const bool outside = f_reflected < simplex.back().f;
    std::vector<double> contracted = along(outside ? kReflect * kContract : -kContract);
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : simplex.back().f)) {
      simplex.back() = {std::move(contracted), f_contracted};
      continue;
    }

    for (std::size_t v = 1; v <= dim; ++v) {
      for (std::size_t i = 0; i < dim; ++i) {
        simplex[v].x[i] = simplex[0].x[i] + kShrink * (simplex[v].x[i] - simplex[0].x[i]);
      }
      project(simplex[v].x);
      simplex[v].f = eval(simplex[v].x);
    }
  }

  std::stable_sort(simplex.begin(), simplex.end(), by_value);
  result.x = simplex.front().x;
  result.value = simplex.front().f;
  return result;
}

}  // namespace distmatch
