#include "distmatch/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "distmatch/error.hpp"
#include "distmatch/normal.hpp"

namespace distmatch {

ProbabilityGrid::ProbabilityGrid(std::vector<double> probs, std::vector<double> weights)
    : probs_(std::move(probs)), weights_(std::move(weights)) {
  if (probs_.empty()) throw Error(Errc::InvalidArgument, "probability grid is empty");
  if (probs_.size() != weights_.size()) {
    throw Error(Errc::LengthMismatch, "grid has " + std::to_string(probs_.size()) +
                                          " levels but " + std::to_string(weights_.size()) +
                                          " weights");
  }
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!(probs_[i] > 0.0 && probs_[i] < 1.0)) {
      throw Error(Errc::InvalidArgument, "grid level outside (0,1) at index " + std::to_string(i));
    }
    if (i > 0 && !(probs_[i] > probs_[i - 1])) {
      throw Error(Errc::InvalidArgument, "grid levels not strictly increasing at index " +
                                             std::to_string(i));
    }
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
      throw Error(Errc::InvalidArgument, "negative grid weight at index " + std::to_string(i));
    }
  }
  mass_ = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (mass_ > 1.0 + 1e-12) throw Error(Errc::InvalidArgument, "grid weights exceed unit mass");
}

std::shared_ptr<const ProbabilityGrid> ProbabilityGrid::uniform(std::size_t points, double lo,
                                                                double hi) {
  if (points == 0) throw Error(Errc::InvalidArgument, "grid needs at least one level");
  if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) {
    throw Error(Errc::InvalidArgument, "grid bounds must satisfy 0 <= lo < hi <= 1");
  }
  std::vector<double> probs(points);
  const double span = hi - lo;
  for (std::size_t i = 0; i < points; ++i) {
    probs[i] = lo + span * static_cast<double>(i + 1) / static_cast<double>(points + 1);
  }
  std::vector<double> weights(points, span / static_cast<double>(points));
  return std::make_shared<const ProbabilityGrid>(std::move(probs), std::move(weights));
}

bool ProbabilityGrid::operator==(const ProbabilityGrid& other) const noexcept {
  return probs_ == other.probs_ && weights_ == other.weights_;
}

bool same_grid(const GridPtr& a, const GridPtr& b) noexcept {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

QuantileFunction::QuantileFunction(GridPtr grid, std::vector<double> values, Support support)
    : grid_(std::move(grid)), values_(std::move(values)), support_(support) {
  if (!grid_) throw Error(Errc::InvalidArgument, "quantile function without a grid");
  if (values_.size() != grid_->size()) {
    throw Error(Errc::LengthMismatch, "expected " + std::to_string(grid_->size()) +
                                          " quantile values, got " +
                                          std::to_string(values_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw Error(Errc::InvalidArgument, "non-finite quantile value at index " + std::to_string(i));
    }
    if (i > 0 && values_[i] < values_[i - 1]) {
      throw Error(Errc::NonMonotone, "quantile values decrease at index " + std::to_string(i));
    }
  }
  if (!(support_.lo <= values_.front() && values_.back() <= support_.hi)) {
    throw Error(Errc::SupportViolation, "quantile values leave the declared support");
  }
  point_mass_ = values_.front() == values_.back();
}

QuantileFunction QuantileFunction::point_mass(GridPtr grid, double x) {
  const std::size_t n = grid ? grid->size() : 0;
  return QuantileFunction(std::move(grid), std::vector<double>(n, x), Support{x, x});
}

double QuantileFunction::mean() const noexcept {
  const auto w = grid_->weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) acc += w[i] * values_[i];
  return acc / grid_->mass();
}

double QuantileFunction::value_near(double p) const noexcept {
  const auto probs = grid_->probs();
  auto it = std::lower_bound(probs.begin(), probs.end(), p);
  std::size_t i = static_cast<std::size_t>(it - probs.begin());
  if (i == probs.size()) return values_.back();
  if (i > 0 && (p - probs[i - 1]) <= (probs[i] - p)) --i;
  return values_[i];
}

bool QuantileFunction::operator==(const QuantileFunction& other) const noexcept {
  return same_grid(grid_, other.grid_) && values_ == other.values_ &&
         support_.lo == other.support_.lo && support_.hi == other.support_.hi;
}

std::vector<double> isotonic_fit(std::span<const double> values, std::span<const double> weights) {
  struct Block {
    double value;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    // zero-weight levels still need a value; give them a tiny weight
    const double w = weights[i] > 0.0 ? weights[i] : 1e-300;
    blocks.push_back({values[i], w, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].value > blocks.back().value) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double total = prev.weight + top.weight;
      prev.value = (prev.value * prev.weight + top.value * top.weight) / total;
      prev.weight = total;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(values.size());
  for (const Block& b : blocks) out.insert(out.end(), b.count, b.value);
  return out;
}

QuantileFunction make_quantile_function(std::vector<double> values, GridPtr grid, Support support,
                                        double tol_mono) {
  if (!grid) throw Error(Errc::InvalidArgument, "quantile function without a grid");
  if (values.size() != grid->size()) {
    throw Error(Errc::LengthMismatch, "expected " + std::to_string(grid->size()) +
                                          " quantile values, got " +
                                          std::to_string(values.size()));
  }
  double worst = 0.0;
  for (std::size_t i = 1; i < values.size(); ++i) worst = std::max(worst, values[i - 1] - values[i]);
  if (worst > tol_mono) {
    throw Error(Errc::NonMonotone, "quantile values decrease by " + std::to_string(worst) +
                                       " (tolerance " + std::to_string(tol_mono) + ")");
  }
  if (worst > 0.0) values = isotonic_fit(values, grid->weights());
  return QuantileFunction(std::move(grid), std::move(values), support);
}

QuantileFunction empirical_quantile_function(std::span<const double> samples, GridPtr grid) {
  if (samples.empty()) throw Error(Errc::EmptyBatch, "no samples to build a quantile function");
  if (!grid) throw Error(Errc::InvalidArgument, "quantile function without a grid");
  std::vector<double> sorted(samples.begin(), samples.end());
  for (double s : sorted) {
    if (!std::isfinite(s)) throw Error(Errc::InvalidArgument, "non-finite sample");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double dn = static_cast<double>(n);

  std::vector<double> values(grid->size());
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const double q = grid->prob(i);
    // smallest k with ecdf(x_(k)) = k / n >= q
    std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(q * dn)));
    k = std::min(k, n);
    while (k > 1 && static_cast<double>(k - 1) / dn >= q) --k;
    while (k < n && static_cast<double>(k) / dn < q) ++k;
    values[i] = sorted[k - 1];
  }
  return QuantileFunction(std::move(grid), std::move(values), Support{sorted.front(), sorted.back()});
}

QuantileFunction empirical_quantile_function(const SampleBatch& batch, GridPtr grid) {
  if (batch.samples.empty()) {
    throw Error(Errc::EmptyBatch, "unit '" + batch.unit_id + "' has no samples");
  }
  return empirical_quantile_function(batch.samples, std::move(grid));
}

QuantileFunction truncated_normal_quantile(double mu, double sigma, GridPtr grid,
                                           double truncation) {
  if (!(sigma > 0.0)) throw Error(Errc::NonPositiveSigma, "sigma must be positive");
  if (!grid) throw Error(Errc::InvalidArgument, "quantile function without a grid");
  const double lo_cdf = normal_cdf(-truncation);
  const double span = normal_cdf(truncation) - lo_cdf;
  std::vector<double> values(grid->size());
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const double z = normal_quantile(lo_cdf + grid->prob(i) * span);
    values[i] = mu + sigma * std::clamp(z, -truncation, truncation);
  }
  // guard against last-bit reversals from the inverse CDF
  for (std::size_t i = 1; i < values.size(); ++i) values[i] = std::max(values[i], values[i - 1]);
  return QuantileFunction(std::move(grid), std::move(values),
                          Support{mu - truncation * sigma, mu + truncation * sigma});
}

}  // namespace distmatch
