#include "distmatch/overlap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "distmatch/error.hpp"

namespace distmatch {

double cross_arm_diameter(const Unit& unit, const Dataset& est, std::size_t k,
                          const MetricParams& m) {
  const MatchIndex index(est, m);
  return index.neighbors(unit, 1 - unit.treatment, k).diameter;
}

std::vector<double> cross_arm_diameters(const MatchIndex& index, std::size_t k) {
  std::vector<double> out(index.size());
  for (std::size_t row = 0; row < index.size(); ++row) {
    out[row] = index.neighbors(row, 1 - index.dataset().unit(row).treatment, k).diameter;
  }
  return out;
}

double quantile_type7(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(Errc::EmptySet, "quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<bool> OverlapReport::flags() const {
  std::vector<bool> out;
  out.reserve(units.size());
  for (const OverlapEntry& e : units) out.push_back(e.flagged);
  return out;
}

OverlapReport flag_positivity(std::span<const double> diameters, std::span<const UnitId> ids) {
  if (diameters.size() < 4) {
    throw Error(Errc::TooFewUnits, "need at least 4 diameters, got " +
                                       std::to_string(diameters.size()));
  }
  if (!ids.empty() && ids.size() != diameters.size()) {
    throw Error(Errc::LengthMismatch, "ids and diameters differ in length");
  }
  std::vector<double> sorted(diameters.begin(), diameters.end());
  std::sort(sorted.begin(), sorted.end());

  OverlapReport report;
  report.q25 = quantile_type7(sorted, 0.25);
  report.q75 = quantile_type7(sorted, 0.75);
  report.d_upper = report.q75 + 1.5 * (report.q75 - report.q25);
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < diameters.size(); ++i) {
    OverlapEntry entry;
    entry.id = ids.empty() ? static_cast<UnitId>(i) : ids[i];
    entry.diameter = diameters[i];
    entry.flagged = diameters[i] > report.d_upper;
    flagged += entry.flagged ? 1 : 0;
    report.units.push_back(entry);
  }
  report.flagged_fraction = static_cast<double>(flagged) / static_cast<double>(diameters.size());
  return report;
}

OverlapReport diagnose_overlap(const MatchIndex& index, std::size_t k) {
  const auto diameters = cross_arm_diameters(index, k);
  std::vector<UnitId> ids;
  ids.reserve(index.size());
  for (const Unit& u : index.dataset().units()) ids.push_back(u.id);
  return flag_positivity(diameters, ids);
}

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string describe(const QuantileFunction& x, CovariateKind kind) {
  if (kind != CovariateKind::Distribution || x.is_point_mass()) return format_number(x[0]);
  return format_number(x.support_lo()) + "/" + format_number(x.value_near(0.5)) + "/" +
         format_number(x.support_hi());
}

std::vector<std::string> describe_row(const Unit& u, const Schema& schema) {
  std::vector<std::string> row{std::to_string(u.id)};
  for (std::size_t l = 0; l < schema.size(); ++l) {
    row.push_back(describe(u.covariates[l], schema.covariates[l].kind));
  }
  row.push_back(std::to_string(u.treatment));
  return row;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Display width in code points so the em dash lines up.
std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80 ? 1 : 0;
  return w;
}

}  // namespace

MatchedGroupTable matched_group_report(const MatchIndex& index, const Unit& unit, std::size_t k) {
  const Dataset& data = index.dataset();
  const MatchedGroup group = index.neighbors(unit, 1 - unit.treatment, k);

  MatchedGroupTable table;
  table.header.push_back("id");
  for (const CovariateSpec& c : data.schema().covariates) table.header.push_back(c.name);
  table.header.push_back("treatment");
  table.header.push_back("distance");

  auto query_row = describe_row(unit, data.schema());
  query_row.push_back("—");
  table.rows.push_back(std::move(query_row));
  for (std::size_t r = 0; r < group.neighbor_rows.size(); ++r) {
    auto row = describe_row(data.unit(group.neighbor_rows[r]), data.schema());
    row.push_back(format_number(group.distances[r]));
    table.rows.push_back(std::move(row));
  }
  return table;
}

MatchedGroupTable matched_group_report(const Unit& unit, const Dataset& est, std::size_t k,
                                       const MetricParams& m) {
  return matched_group_report(MatchIndex(est, m), unit, k);
}

std::string MatchedGroupTable::render_text() const {
  std::vector<std::size_t> widths(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) widths[c] = display_width(header[c]);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out << "  ";
      out << std::string(widths[c] - display_width(cells[c]), ' ') << cells[c];
    }
    out << '\n';
  };
  emit(header);
  std::size_t total = 0;
  for (std::size_t w : widths) total += w;
  out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
  for (const auto& row : rows) emit(row);
  return out.str();
}

std::string MatchedGroupTable::render_csv() const {
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << csv_field(cells[c]);
    out << '\n';
  };
  emit(header);
  for (const auto& row : rows) emit(row);
  return out.str();
}

double classify_accuracy(const std::vector<bool>& flags, const std::vector<bool>& truth) {
  if (flags.size() != truth.size()) {
    throw Error(Errc::LengthMismatch, "flags and truth differ in length");
  }
  if (flags.empty()) throw Error(Errc::EmptySet, "no labels to compare");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) agree += flags[i] == truth[i] ? 1 : 0;
  return static_cast<double>(agree) / static_cast<double>(flags.size());
}

}  // namespace distmatch
