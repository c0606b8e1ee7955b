#include "distmatch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "distmatch/error.hpp"

namespace distmatch {

std::string_view to_string(CovariateKind kind) noexcept {
  switch (kind) {
    case CovariateKind::Scalar: return "scalar";
    case CovariateKind::CategoricalLevel: return "categorical-level";
    case CovariateKind::Distribution: return "distribution";
  }
  return "unknown";
}

bool operator==(const CovariateSpec& a, const CovariateSpec& b) noexcept {
  return a.name == b.name && a.kind == b.kind;
}

std::optional<std::size_t> Schema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < covariates.size(); ++i) {
    if (covariates[i].name == name) return i;
  }
  return std::nullopt;
}

void validate_unit(const Unit& unit, const Schema& schema, const GridPtr& grid) {
  if (unit.covariates.size() != schema.size()) {
    throw Error(Errc::SchemaMismatch, "unit " + std::to_string(unit.id) + " has " +
                                          std::to_string(unit.covariates.size()) +
                                          " covariates, schema has " +
                                          std::to_string(schema.size()));
  }
  if (unit.treatment != 0 && unit.treatment != 1) {
    throw Error(Errc::InvalidArgument, "unit " + std::to_string(unit.id) +
                                           " has treatment outside {0,1}");
  }
  if (!same_grid(unit.outcome.grid_ptr(), grid)) {
    throw Error(Errc::GridMismatch, "unit " + std::to_string(unit.id) + " outcome grid differs");
  }
  for (const QuantileFunction& x : unit.covariates) {
    if (!same_grid(x.grid_ptr(), grid)) {
      throw Error(Errc::GridMismatch, "unit " + std::to_string(unit.id) + " covariate grid differs");
    }
  }
}

Dataset::Dataset(GridPtr grid, Schema schema, std::vector<Unit> units)
    : grid_(std::move(grid)), schema_(std::move(schema)), units_(std::move(units)) {
  if (!grid_) throw Error(Errc::InvalidArgument, "dataset without a grid");
  std::unordered_set<UnitId> seen;
  seen.reserve(units_.size());
  for (const Unit& u : units_) {
    validate_unit(u, schema_, grid_);
    if (!seen.insert(u.id).second) {
      throw Error(Errc::InvalidArgument, "duplicate unit id " + std::to_string(u.id));
    }
  }
}

std::size_t Dataset::arm_size(int treatment) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      units_.begin(), units_.end(), [&](const Unit& u) { return u.treatment == treatment; }));
}

std::vector<std::size_t> Dataset::arm_rows(int treatment) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (units_[i].treatment == treatment) rows.push_back(i);
  }
  std::sort(rows.begin(), rows.end(),
            [&](std::size_t a, std::size_t b) { return units_[a].id < units_[b].id; });
  return rows;
}

std::optional<std::size_t> Dataset::find(UnitId id) const noexcept {
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (units_[i].id == id) return i;
  }
  return std::nullopt;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Unit> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) picked.push_back(units_.at(r));
  return Dataset(grid_, schema_, std::move(picked));
}

void Dataset::require_arms(std::size_t min_per_arm, std::string_view context) const {
  for (int t : {0, 1}) {
    const std::size_t n = arm_size(t);
    if (n < min_per_arm) {
      throw Error(Errc::ArmTooSmall, std::string(context) + ": arm " + std::to_string(t) +
                                         " has " + std::to_string(n) + " units, need " +
                                         std::to_string(min_per_arm));
    }
  }
}

HonestSplit honest_split(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(Errc::InvalidArgument, "train fraction must lie in (0,1)");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit index draw keeps the permutation identical
  // across standard libraries (std::shuffle is implementation-defined).
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(data.size())));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> est(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(est.begin(), est.end());
  return HonestSplit{data.subset(train), data.subset(est)};
}

}  // namespace distmatch
