#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace distmatch {

struct NelderMeadOptions {
  std::size_t max_evaluations = 1000;
  /// Edge length of the initial simplex, relative to max(|x0_i|, 1).
  double initial_step = 0.5;
  /// Stop once every vertex is within x_tolerance (max-norm) of the best one
  /// and their values spread by at most f_tolerance.
  double x_tolerance = 1e-3;
  double f_tolerance = 1e-9;
  /// Fresh simplices built around the best point after convergence.
  std::size_t max_restarts = 1;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
  bool budget_exhausted = false;
  /// (evaluation count, best value) recorded every time the best value drops.
  std::vector<std::pair<std::size_t, double>> improvements;
};

/// Derivative-free Nelder-Mead simplex search on the box [lo, hi]^d; trial
/// points are projected onto the box. Suitable for piecewise-constant
/// objectives such as nearest-neighbor losses.
NelderMeadResult nelder_mead_box(const std::function<double(std::span<const double>)>& objective,
                                 std::vector<double> start, double lo, double hi,
                                 const NelderMeadOptions& options);

}  // namespace distmatch
