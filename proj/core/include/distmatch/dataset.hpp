#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distmatch/quantile.hpp"

namespace distmatch {

enum class CovariateKind {
  Scalar,            // stored as a point mass
  CategoricalLevel,  // one one-hot coordinate, stored as a point mass at 0 or 1
  Distribution,
};

std::string_view to_string(CovariateKind kind) noexcept;

struct CovariateSpec {
  std::string name;
  CovariateKind kind = CovariateKind::Scalar;
};

struct Schema {
  std::vector<CovariateSpec> covariates;

  std::size_t size() const noexcept { return covariates.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  bool operator==(const Schema&) const = default;
};

bool operator==(const CovariateSpec& a, const CovariateSpec& b) noexcept;

using UnitId = std::int64_t;

struct Unit {
  UnitId id = 0;
  int treatment = 0;
  std::vector<QuantileFunction> covariates;
  QuantileFunction outcome;
};

/// An immutable collection of units sharing one grid and one covariate schema.
class Dataset {
 public:
  /// Throws SchemaMismatch (covariate count), GridMismatch, InvalidArgument
  /// (duplicate id, treatment outside {0,1}).
  Dataset(GridPtr grid, Schema schema, std::vector<Unit> units);

  const GridPtr& grid_ptr() const noexcept { return grid_; }
  const ProbabilityGrid& grid() const noexcept { return *grid_; }
  const Schema& schema() const noexcept { return schema_; }
  std::span<const Unit> units() const noexcept { return units_; }
  const Unit& unit(std::size_t row) const { return units_[row]; }
  std::size_t size() const noexcept { return units_.size(); }
  std::size_t dimension() const noexcept { return schema_.size(); }

  std::size_t arm_size(int treatment) const noexcept;
  /// Row indices of the units in one arm, sorted by unit id.
  std::vector<std::size_t> arm_rows(int treatment) const;
  std::optional<std::size_t> find(UnitId id) const noexcept;

  Dataset subset(std::span<const std::size_t> rows) const;

  /// Throws ArmTooSmall unless both arms hold at least `min_per_arm` units.
  void require_arms(std::size_t min_per_arm, std::string_view context) const;

 private:
  GridPtr grid_;
  Schema schema_;
  std::vector<Unit> units_;
};

/// Checks that `unit` fits `schema` and `grid`; throws SchemaMismatch or
/// GridMismatch.
void validate_unit(const Unit& unit, const Schema& schema, const GridPtr& grid);

struct HonestSplit {
  Dataset train;
  Dataset estimation;
};

/// Seeded shuffle, then the first round(train_fraction * n) units train the
/// metric and the rest estimate effects.
HonestSplit honest_split(const Dataset& data, double train_fraction, std::uint64_t seed);

}  // namespace distmatch
