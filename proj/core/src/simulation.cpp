#include "distmatch/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include "distmatch/error.hpp"

namespace distmatch {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTruncation = 3.0;
constexpr std::size_t kMixtureDraws = 1001;
// Beta shape parameters must stay positive; alpha is clamped to this floor.
constexpr double kMinAlpha = 0.05;

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Portable uniform on [0, 1) from the top 53 bits.
double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * u01(rng); }
bool bernoulli(std::mt19937_64& rng, double p) { return u01(rng) < p; }

double std_normal(std::mt19937_64& rng) {
  // Box-Muller, one draw per call so the stream layout stays simple.
  const double u1 = 1.0 - u01(rng);
  const double u2 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
double gamma_draw(std::mt19937_64& rng, double shape) {
  if (shape < 1.0) {
    const double u = 1.0 - u01(rng);
    return gamma_draw(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = std_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = 1.0 - u01(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
  }
}

double beta_draw(std::mt19937_64& rng, double a, double b) {
  const double x = gamma_draw(rng, a);
  const double y = gamma_draw(rng, b);
  return x / (x + y);
}

double positive_sigma(double s) { return std::max(std::abs(s), 1e-6); }

// Potential outcomes of one truncated-normal unit.
struct NormalArms {
  double mu0, sigma0, mu1, sigma1;
};

struct DrawnUnit {
  std::vector<double> x;  // scalar covariates (DistCov: slot 0 holds u)
  int treatment = 0;
  bool corner = false;
  NormalArms arms{};
  // MixtureBeta only
  std::vector<double> y0, y1;
};

DrawnUnit draw_unit(Dgp dgp, std::mt19937_64& rng) {
  DrawnUnit d;
  const std::size_t dim = dgp_dimension(dgp);
  d.x.resize(dim);
  switch (dgp) {
    case Dgp::Linear:
    case Dgp::Variance:
    case Dgp::Complex:
    case Dgp::PositivityCorner:
    case Dgp::MixtureBeta:
      for (double& v : d.x) v = uniform(rng, -1.0, 1.0);
      break;
    case Dgp::DistCov:
      d.x[0] = u01(rng);
      for (std::size_t l = 1; l < dim; ++l) d.x[l] = uniform(rng, -1.0, 1.0);
      break;
  }
  const double eps = std_normal(rng);
  const auto& x = d.x;
  switch (dgp) {
    case Dgp::Linear: {
      d.treatment = bernoulli(rng, expit(x[0] + x[1])) ? 1 : 0;
      const double base = 10.0 + x[0] + 2.0 * x[1] + eps;
      d.arms = {base, 1.0, base + 10.0, 1.0};
      break;
    }
    case Dgp::Variance: {
      d.treatment = bernoulli(rng, expit(x[0] + x[1])) ? 1 : 0;
      const double base = 10.0 + x[0] + 2.0 * x[1] + eps;
      d.arms = {base, positive_sigma(base), base, positive_sigma(base + 10.0)};
      break;
    }
    case Dgp::Complex: {
      d.treatment = bernoulli(rng, expit(x[0] + x[1])) ? 1 : 0;
      const double s = std::sin(kPi * x[0] * x[1]);
      const double c = std::cos(kPi * x[0] * x[1]);
      const double m0 = 10.0 * s + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4] + eps;
      const double sigma = positive_sigma(10.0 + x[0] + 2.0 * x[1] + eps);
      d.arms = {m0, sigma, m0 + 7.0 + x[2] * c, sigma};
      break;
    }
    case Dgp::DistCov: {
      const double integral = (x[0] - 1.0) / 2.0;
      d.treatment = bernoulli(rng, expit(integral + x[2])) ? 1 : 0;
      const double s = std::sin(kPi * integral * x[1]);
      const double c = std::cos(kPi * integral * x[1]);
      const double m0 = 10.0 * s + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] + 5.0 * x[4] + eps;
      d.arms = {m0, 1.0, m0 + 7.0 + x[2] * c, 1.0};
      break;
    }
    case Dgp::PositivityCorner: {
      d.corner = x[0] <= -0.5 && x[1] <= -0.5;
      const bool t = bernoulli(rng, expit(-0.5 * x[0] - 0.5 * x[1]));
      d.treatment = d.corner ? 0 : (t ? 1 : 0);
      const double base = 10.0 + x[0] + 2.0 * x[1] + eps;
      d.arms = {base, 1.0, base + 10.0, 1.0};
      break;
    }
    case Dgp::MixtureBeta: {
      d.treatment = bernoulli(rng, expit(x[0] + x[1])) ? 1 : 0;
      const double s = std::sin(kPi * x[0] * x[1]);
      const double c = std::cos(kPi * x[0] * x[1]);
      const double a0 = 5.0 + 10.0 * s * s + 20.0 * (x[2] - 0.5) * (x[2] - 0.5) + 10.0 * x[3] +
                        5.0 * x[4] + eps;
      const double a1 = std::max(a0 + 10.0 * x[2] * c * c, kMinAlpha);
      const double a0c = std::max(a0, kMinAlpha);
      d.y0.resize(kMixtureDraws);
      d.y1.resize(kMixtureDraws);
      for (std::size_t j = 0; j < kMixtureDraws; ++j) {
        const bool z = bernoulli(rng, 0.25);
        d.y0[j] = z ? beta_draw(rng, 2.0 * a0c, 8.0 * a0c) : beta_draw(rng, 8.0 * a0c, 2.0 * a0c);
        d.y1[j] = z ? beta_draw(rng, 8.0 * a1, 2.0 * a1) : beta_draw(rng, 2.0 * a1, 8.0 * a1);
      }
      break;
    }
  }
  return d;
}

std::string normalize(std::string_view name) {
  std::string out;
  for (char ch : name) {
    if (ch == '-' || ch == '_') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

Schema dgp_schema(Dgp dgp) {
  Schema schema;
  for (std::size_t l = 0; l < dgp_dimension(dgp); ++l) {
    CovariateKind kind = (dgp == Dgp::DistCov && l == 0) ? CovariateKind::Distribution
                                                          : CovariateKind::Scalar;
    schema.covariates.push_back({"x" + std::to_string(l), kind});
  }
  return schema;
}

}  // namespace

std::string_view to_string(Dgp dgp) noexcept {
  switch (dgp) {
    case Dgp::Linear: return "Linear";
    case Dgp::Variance: return "Variance";
    case Dgp::Complex: return "Complex";
    case Dgp::DistCov: return "DistCov";
    case Dgp::MixtureBeta: return "MixtureBeta";
    case Dgp::PositivityCorner: return "PositivityCorner";
  }
  return "?";
}

std::optional<Dgp> parse_dgp(std::string_view name) {
  const std::string key = normalize(name);
  for (Dgp d : {Dgp::Linear, Dgp::Variance, Dgp::Complex, Dgp::DistCov, Dgp::MixtureBeta,
                Dgp::PositivityCorner}) {
    if (normalize(to_string(d)) == key) return d;
  }
  return std::nullopt;
}

std::size_t dgp_dimension(Dgp dgp) noexcept {
  switch (dgp) {
    case Dgp::Linear:
    case Dgp::Variance: return 7;
    case Dgp::Complex:
    case Dgp::DistCov:
    case Dgp::MixtureBeta: return 10;
    case Dgp::PositivityCorner: return 2;
  }
  return 0;
}

double default_split_ratio(Dgp dgp) noexcept { return dgp == Dgp::MixtureBeta ? 0.6 : 0.67; }

void SimulationSpec::validate() const {
  if (n < 20) throw Error(Errc::BadSpec, "n must be at least 20");
  if (!grid) throw Error(Errc::BadSpec, "simulation needs a grid");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw Error(Errc::BadSpec, "split_ratio must lie in (0, 1)");
  if (k == 0) throw Error(Errc::BadSpec, "k must be positive");
  if (optimizer.k_train == 0) throw Error(Errc::BadSpec, "k_train must be positive");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SimulatedData generate(const SimulationSpec& spec) {
  spec.validate();
  const GridPtr& grid = spec.grid;
  std::mt19937_64 rng(spec.seed);
  std::vector<Unit> units;
  units.reserve(spec.n);
  std::vector<std::vector<double>> truth;
  truth.reserve(spec.n);
  std::vector<bool> no_overlap;
  no_overlap.reserve(spec.n);

  for (std::size_t i = 0; i < spec.n; ++i) {
    DrawnUnit d = draw_unit(spec.dgp, rng);
    std::vector<QuantileFunction> covariates;
    covariates.reserve(d.x.size());
    for (std::size_t l = 0; l < d.x.size(); ++l) {
      if (spec.dgp == Dgp::DistCov && l == 0) {
        const double hi = d.x[0];
        std::vector<double> v(grid->size());
        for (std::size_t q = 0; q < v.size(); ++q) v[q] = -1.0 + (hi + 1.0) * grid->prob(q);
        covariates.emplace_back(grid, std::move(v), Support{-1.0, hi});
      } else {
        covariates.push_back(QuantileFunction::point_mass(grid, d.x[l]));
      }
    }
    const bool beta = spec.dgp == Dgp::MixtureBeta;
    QuantileFunction f0 =
        beta ? empirical_quantile_function(std::span<const double>(d.y0), grid)
             : truncated_normal_quantile(d.arms.mu0, d.arms.sigma0, grid, kTruncation);
    QuantileFunction f1 =
        beta ? empirical_quantile_function(std::span<const double>(d.y1), grid)
             : truncated_normal_quantile(d.arms.mu1, d.arms.sigma1, grid, kTruncation);
    std::vector<double> tau(grid->size());
    for (std::size_t q = 0; q < tau.size(); ++q) tau[q] = f1[q] - f0[q];
    units.push_back(Unit{static_cast<UnitId>(i), d.treatment, std::move(covariates),
                         d.treatment == 1 ? std::move(f1) : std::move(f0)});
    truth.push_back(std::move(tau));
    no_overlap.push_back(d.corner);
  }
  return SimulatedData{Dataset(grid, dgp_schema(spec.dgp), std::move(units)), std::move(truth),
                       std::move(no_overlap)};
}

SimulatedSplit generate_split(const SimulationSpec& spec, std::size_t max_attempts) {
  spec.validate();
  SimulationSpec attempt = spec;
  for (std::size_t a = 0; a < std::max<std::size_t>(max_attempts, 1); ++a) {
    attempt.seed = a == 0 ? spec.seed : derive_seed(spec.seed, 1000 + a);
    SimulatedData sim = generate(attempt);
    HonestSplit split = honest_split(sim.data, spec.split_ratio, derive_seed(attempt.seed, 1));
    const std::size_t need = std::max(spec.k, spec.optimizer.k_train) + 1;
    const bool ok = split.train.arm_size(0) >= need && split.train.arm_size(1) >= need &&
                    split.estimation.arm_size(0) >= need && split.estimation.arm_size(1) >= need;
    if (ok) {
      SimulatedSplit out{std::move(sim), std::move(split), attempt.seed, a + 1, std::nullopt};
      if (a > 0)
        out.warning = "seed " + std::to_string(spec.seed) + " left an arm too small; redrew " +
                      std::to_string(a) + " time(s)";
      return out;
    }
  }
  throw Error(Errc::BadSpec, "could not draw a split with both arms of size > k");
}

std::vector<double> population_ate(Dgp dgp, const GridPtr& grid, std::size_t draws,
                                   std::uint64_t seed) {
  if (!grid) throw Error(Errc::BadSpec, "population_ate needs a grid");
  if (draws == 0) throw Error(Errc::BadSpec, "population_ate needs at least one draw");
  std::vector<double> acc(grid->size(), 0.0);
  std::mt19937_64 rng(seed);
  if (dgp == Dgp::MixtureBeta) {
    for (std::size_t i = 0; i < draws; ++i) {
      DrawnUnit d = draw_unit(dgp, rng);
      const auto f0 = empirical_quantile_function(std::span<const double>(d.y0), grid);
      const auto f1 = empirical_quantile_function(std::span<const double>(d.y1), grid);
      for (std::size_t q = 0; q < acc.size(); ++q) acc[q] += f1[q] - f0[q];
    }
  } else {
    // Truncated-normal quantiles are mu + sigma * z(q) with a fixed z(q).
    const auto z = truncated_normal_quantile(0.0, 1.0, grid, kTruncation);
    double dmu = 0.0;
    double dsigma = 0.0;
    for (std::size_t i = 0; i < draws; ++i) {
      DrawnUnit d = draw_unit(dgp, rng);
      dmu += d.arms.mu1 - d.arms.mu0;
      dsigma += d.arms.sigma1 - d.arms.sigma0;
    }
    for (std::size_t q = 0; q < acc.size(); ++q) acc[q] = dmu + dsigma * z[q];
  }
  for (double& v : acc) v /= static_cast<double>(draws);
  return acc;
}

IntegratedRelativeError integrated_relative_error(const ProbabilityGrid& grid,
                                                  std::span<const double> tau_hat,
                                                  std::span<const double> tau_true) {
  if (tau_hat.size() != grid.size() || tau_true.size() != grid.size())
    throw Error(Errc::GridMismatch, "effect curves do not match the grid");
  IntegratedRelativeError out;
  for (std::size_t q = 0; q < grid.size(); ++q) {
    if (std::abs(tau_true[q]) < 1e-8) {
      out.skipped_mass += grid.weight(q);
      continue;
    }
    out.percent += grid.weight(q) * std::abs((tau_hat[q] - tau_true[q]) / tau_true[q]);
  }
  out.percent *= 100.0;
  return out;
}

IntegratedRelativeError integrated_relative_error(const EffectCurve& tau_hat,
                                                  const EffectCurve& tau_true) {
  if (!tau_hat.grid || !tau_true.grid || !same_grid(tau_hat.grid, tau_true.grid))
    throw Error(Errc::GridMismatch, "effect curves live on different grids");
  return integrated_relative_error(*tau_hat.grid, tau_hat.tau, tau_true.tau);
}

}  // namespace distmatch
