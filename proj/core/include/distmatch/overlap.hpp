#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "distmatch/dataset.hpp"
#include "distmatch/matching.hpp"
#include "distmatch/metric.hpp"

namespace distmatch {

/// Mean d_M from `unit` to its k nearest opposite-arm units in `est`.
double cross_arm_diameter(const Unit& unit, const Dataset& est, std::size_t k,
                          const MetricParams& m);
/// Diameters of every row of the index, in row order.
std::vector<double> cross_arm_diameters(const MatchIndex& index, std::size_t k);

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
double quantile_type7(std::span<const double> sorted, double p);

struct OverlapEntry {
  UnitId id = 0;
  double diameter = 0.0;
  bool flagged = false;
};

struct OverlapReport {
  std::vector<OverlapEntry> units;
  double q25 = 0.0;
  double q75 = 0.0;
  /// q75 + 1.5 * (q75 - q25); a unit is flagged iff its diameter exceeds it.
  double d_upper = 0.0;
  double flagged_fraction = 0.0;

  std::vector<bool> flags() const;
};

/// IQR outlier rule over nearest-neighbor diameters. `ids` may be empty, in
/// which case entries are numbered by position. Throws TooFewUnits (< 4).
OverlapReport flag_positivity(std::span<const double> diameters, std::span<const UnitId> ids = {});

/// Flags every estimation unit of the index.
OverlapReport diagnose_overlap(const MatchIndex& index, std::size_t k);

/// Plain table of a query and its opposite-arm matched group.
struct MatchedGroupTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render_text() const;
  std::string render_csv() const;
};

/// Rows: the query, then its k nearest opposite-arm units by ascending
/// distance. Columns: id, every schema covariate (distributions shown as
/// min/median/max), treatment, distance (the query's is shown as an em dash).
MatchedGroupTable matched_group_report(const Unit& unit, const Dataset& est, std::size_t k,
                                       const MetricParams& m);
MatchedGroupTable matched_group_report(const MatchIndex& index, const Unit& unit, std::size_t k);

/// Fraction of positions where flags and truth agree. Throws LengthMismatch.
double classify_accuracy(const std::vector<bool>& flags, const std::vector<bool>& truth);

}  // namespace distmatch
