#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distmatch/dataset.hpp"
#include "distmatch/matching.hpp"
#include "distmatch/metric.hpp"

namespace distmatch {

enum class Dgp { Linear, Variance, Complex, DistCov, MixtureBeta, PositivityCorner };

std::string_view to_string(Dgp dgp) noexcept;
/// Accepts the names printed by to_string (case-insensitive, '-'/'_' ignored).
std::optional<Dgp> parse_dgp(std::string_view name);

/// Number of covariates each DGP emits (relevant plus irrelevant).
std::size_t dgp_dimension(Dgp dgp) noexcept;
/// Train fraction used by the reference experiments (0.6 for MixtureBeta, else 0.67).
double default_split_ratio(Dgp dgp) noexcept;

struct SimulationSpec {
  Dgp dgp = Dgp::Linear;
  std::size_t n = 1500;
  std::uint64_t seed = 0;
  GridPtr grid;
  double split_ratio = 0.67;
  /// Estimation and diagnostic K.
  std::size_t k = 10;
  OptimizerConfig optimizer;

  /// Throws BadSpec.
  void validate() const;
};

/// A generated dataset plus what only the simulator knows. Unit ids are
/// 0..n-1 and index the truth vectors.
struct SimulatedData {
  Dataset data;
  /// Difference of the unit's true potential-outcome quantile functions.
  std::vector<std::vector<double>> true_cate;
  /// True where the unit sits in a region with no overlap (PositivityCorner).
  std::vector<bool> no_overlap;
};

SimulatedData generate(const SimulationSpec& spec);

struct SimulatedSplit {
  SimulatedData full;
  HonestSplit split;
  std::uint64_t seed_used = 0;
  std::size_t attempts = 1;
  /// Set when the first draw left an arm with fewer than k units in a split.
  std::optional<std::string> warning;
};

/// Generates and splits, redrawing (with a derived seed) until both arms of
/// both splits hold at least spec.k units.
SimulatedSplit generate_split(const SimulationSpec& spec, std::size_t max_attempts = 20);

/// Population ATE curve of a DGP, averaged over `draws` simulated units.
std::vector<double> population_ate(Dgp dgp, const GridPtr& grid, std::size_t draws,
                                   std::uint64_t seed);

struct IntegratedRelativeError {
  double percent = 0.0;
  /// Grid mass skipped because |tau(q)| < 1e-8.
  double skipped_mass = 0.0;
};

/// 100 * sum_q w_q |tau_hat(q) - tau(q)| / |tau(q)|. Throws GridMismatch.
IntegratedRelativeError integrated_relative_error(const EffectCurve& tau_hat,
                                                  const EffectCurve& tau_true);
IntegratedRelativeError integrated_relative_error(const ProbabilityGrid& grid,
                                                  std::span<const double> tau_hat,
                                                  std::span<const double> tau_true);

/// Scalar seed derived from a master seed and a stream index (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

}  // namespace distmatch
