#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace distmatch {

inline constexpr double kDefaultMonotoneTolerance = 1e-9;

/// Ordered probability levels in (0, 1) with a quadrature weight per level.
/// One grid is shared by every quantile function of a dataset.
class ProbabilityGrid {
 public:
  ProbabilityGrid(std::vector<double> probs, std::vector<double> weights);

  /// `points` levels at lo + (hi - lo) * i / (points + 1), each carrying
  /// weight (hi - lo) / points so the weights sum to the covered mass.
  static std::shared_ptr<const ProbabilityGrid> uniform(std::size_t points, double lo = 0.0,
                                                        double hi = 1.0);

  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  std::span<const double> weights() const noexcept { return weights_; }
  double prob(std::size_t i) const { return probs_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }
  /// Total probability mass covered by the weights (<= 1).
  double mass() const noexcept { return mass_; }

  bool operator==(const ProbabilityGrid& other) const noexcept;

 private:
  std::vector<double> probs_;
  std::vector<double> weights_;
  double mass_ = 0.0;
};

using GridPtr = std::shared_ptr<const ProbabilityGrid>;

/// True when both pointers refer to the same grid or to equal grids.
bool same_grid(const GridPtr& a, const GridPtr& b) noexcept;

struct Support {
  double lo = 0.0;
  double hi = 0.0;
};

/// A distribution on the real line stored as its quantile function sampled
/// on a shared probability grid. Immutable; values are nondecreasing and lie
/// inside [support_lo, support_hi].
class QuantileFunction {
 public:
  /// Validates without repair. Throws NonMonotone, SupportViolation,
  /// LengthMismatch.
  QuantileFunction(GridPtr grid, std::vector<double> values, Support support);

  static QuantileFunction point_mass(GridPtr grid, double x);

  const ProbabilityGrid& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  Support support() const noexcept { return support_; }
  double support_lo() const noexcept { return support_.lo; }
  double support_hi() const noexcept { return support_.hi; }

  bool is_point_mass() const noexcept { return point_mass_; }
  /// Grid-weighted mean of the values, normalized by the grid mass.
  double mean() const noexcept;
  /// Value at the grid level closest to probability p.
  double value_near(double p) const noexcept;

  bool operator==(const QuantileFunction& other) const noexcept;

 private:
  GridPtr grid_;
  std::vector<double> values_;
  Support support_;
  bool point_mass_ = false;
};

/// Raw readings of one unit (e.g. CGM glucose values).
struct SampleBatch {
  std::vector<double> samples;
  std::string unit_id;
};

/// Builds a quantile function from per-level values. Order violations no
/// larger than `tol_mono` are repaired with weighted pool-adjacent-violators;
/// larger ones throw NonMonotone.
QuantileFunction make_quantile_function(std::vector<double> values, GridPtr grid, Support support,
                                        double tol_mono = kDefaultMonotoneTolerance);

/// F^-1(q) = min{ y : ecdf(y) >= q }; support is (min sample, max sample).
QuantileFunction empirical_quantile_function(const SampleBatch& batch, GridPtr grid);
QuantileFunction empirical_quantile_function(std::span<const double> samples, GridPtr grid);

/// Quantile function of Normal(mu, sigma^2) truncated to mu +/- truncation * sigma.
QuantileFunction truncated_normal_quantile(double mu, double sigma, GridPtr grid,
                                           double truncation = 3.0);

/// Pool-adjacent-violators fit of a nondecreasing sequence (weighted least squares).
std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights);

}  // namespace distmatch
