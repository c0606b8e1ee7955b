#include "distmatch/benchmark.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <sstream>

#include "distmatch/baselines.hpp"
#include "distmatch/error.hpp"
#include "distmatch/inference.hpp"
#include "distmatch/overlap.hpp"
#include "distmatch/parallel.hpp"

namespace distmatch {
namespace {

std::string lower(std::string_view s) {
  std::string out;
  for (char ch : s) {
    if (ch == '-') ch = '_';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

struct Replicate {
  std::vector<BenchmarkRow> rows;
  std::optional<std::string> warning;
};

void push(Replicate& rep, std::size_t r, std::uint64_t seed, std::string method,
          std::string metric, double value) {
  rep.rows.push_back(BenchmarkRow{r, seed, std::move(method), std::move(metric), value});
}

// Mean IRE and mean integrated absolute error of matching CATEs over the
// estimation units.
struct CateScores {
  double ire = 0.0;
  double skipped = 0.0;
  double abs_error = 0.0;
};

CateScores score_matching(const SimulatedSplit& sim, const MetricParams& params, std::size_t k) {
  const Dataset& est = sim.split.estimation;
  const MatchIndex index(est, params);
  const ProbabilityGrid& grid = est.grid();
  CateScores s;
  for (std::size_t row = 0; row < est.size(); ++row) {
    const EffectCurve hat = estimate_cate(index, row, k);
    const auto& truth = sim.full.true_cate[static_cast<std::size_t>(est.unit(row).id)];
    const auto ire = integrated_relative_error(grid, hat.tau, truth);
    s.ire += ire.percent;
    s.skipped += ire.skipped_mass;
    for (std::size_t q = 0; q < grid.size(); ++q)
      s.abs_error += grid.weight(q) * std::abs(hat.tau[q] - truth[q]);
  }
  const double n = static_cast<double>(est.size());
  s.ire /= n;
  s.skipped /= n;
  s.abs_error /= n;
  return s;
}

CateScores score_linear(const SimulatedSplit& sim) {
  const Dataset& est = sim.split.estimation;
  const ProbabilityGrid& grid = est.grid();
  const auto curves = baseline_lr_cate(sim.full.data, est);
  CateScores s;
  for (std::size_t row = 0; row < est.size(); ++row) {
    const auto& truth = sim.full.true_cate[static_cast<std::size_t>(est.unit(row).id)];
    const auto ire = integrated_relative_error(grid, curves[row].tau, truth);
    s.ire += ire.percent;
    s.skipped += ire.skipped_mass;
    for (std::size_t q = 0; q < grid.size(); ++q)
      s.abs_error += grid.weight(q) * std::abs(curves[row].tau[q] - truth[q]);
  }
  const double n = static_cast<double>(est.size());
  s.ire /= n;
  s.skipped /= n;
  s.abs_error /= n;
  return s;
}

Replicate run_replicate(const BenchmarkConfig& config, std::size_t r,
                        const std::vector<double>& population) {
  const std::uint64_t seed = derive_seed(config.spec.seed, r);
  SimulationSpec spec = config.spec;
  spec.seed = seed;
  if (config.kind == BenchmarkKind::KSensitivity) {
    spec.k = *std::max_element(config.k_values.begin(), config.k_values.end());
    if (config.refit_per_k) spec.optimizer.k_train = spec.k;
  }
  const SimulatedSplit sim = generate_split(spec);
  Replicate rep;
  rep.warning = sim.warning;

  OptimizerConfig opt = config.spec.optimizer;
  opt.seed = derive_seed(sim.seed_used, 2);
  opt.threads = 1;

  switch (config.kind) {
    case BenchmarkKind::Cate: {
      const FitResult fit = fit_metric(sim.split.train, opt);
      const CateScores m = score_matching(sim, fit.params, config.spec.k);
      push(rep, r, seed, "matching", "ire", m.ire);
      push(rep, r, seed, "matching", "ire_skipped_mass", m.skipped);
      push(rep, r, seed, "matching", "abs_error", m.abs_error);
      push(rep, r, seed, "matching", "train_loss", fit.loss);
      const CateScores lr = score_linear(sim);
      push(rep, r, seed, "lr", "ire", lr.ire);
      push(rep, r, seed, "lr", "ire_skipped_mass", lr.skipped);
      push(rep, r, seed, "lr", "abs_error", lr.abs_error);
      break;
    }
    case BenchmarkKind::Positivity: {
      const FitResult fit = fit_metric(sim.split.train, opt);
      const Dataset& est = config.diagnose_full_sample ? sim.full.data : sim.split.estimation;
      const MatchIndex index(est, fit.params);
      const OverlapReport report = diagnose_overlap(index, config.spec.k);
      std::vector<bool> truth;
      truth.reserve(est.size());
      for (const Unit& u : est.units())
        truth.push_back(sim.full.no_overlap[static_cast<std::size_t>(u.id)]);
      push(rep, r, seed, "matching", "accuracy", classify_accuracy(report.flags(), truth));
      push(rep, r, seed, "matching", "flagged_fraction", report.flagged_fraction);
      const auto lin = baseline_linear_propensity_flags(est);
      push(rep, r, seed, "linear_ps", "accuracy", classify_accuracy(lin, truth));
      break;
    }
    case BenchmarkKind::Coverage: {
      const FitResult fit = fit_metric(sim.split.train, opt);
      const MatchIndex index(sim.split.estimation, fit.params);
      InferenceOptions io;
      io.k = config.spec.k;
      io.j = config.j;
      io.level = config.level;
      io.bias_correct = true;
      const InferenceReport plain = infer_ate(index, io);
      const InferenceReport corrected = confidence_band(plain, config.level, true);
      const ProbabilityGrid& grid = sim.split.estimation.grid();
      auto score = [&](const InferenceReport& report, const std::string& suffix) {
        std::size_t covered = 0;
        double abs_error = 0.0;
        const auto& center = report.center();
        for (std::size_t q = 0; q < population.size(); ++q) {
          if (report.ci_lo[q] <= population[q] && population[q] <= report.ci_hi[q]) ++covered;
          abs_error += grid.weight(q) * std::abs(center[q] - population[q]);
        }
        push(rep, r, seed, "matching", "coverage" + suffix,
             static_cast<double>(covered) / static_cast<double>(population.size()));
        push(rep, r, seed, "matching", "ate_abs_error" + suffix, abs_error);
      };
      score(plain, "");
      score(corrected, "_bcm");
      break;
    }
    case BenchmarkKind::KSensitivity: {
      std::optional<FitResult> shared;
      if (!config.refit_per_k) shared = fit_metric(sim.split.train, opt);
      for (std::size_t k : config.k_values) {
        MetricParams params;
        if (shared) {
          params = shared->params;
        } else {
          OptimizerConfig ok = opt;
          ok.k_train = k;
          params = fit_metric(sim.split.train, ok).params;
        }
        const CateScores m = score_matching(sim, params, k);
        push(rep, r, seed, "matching_k" + std::to_string(k), "ire", m.ire);
      }
      break;
    }
  }
  return rep;
}

double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return quantile_type7(v, p);
}

}  // namespace

std::string_view to_string(BenchmarkKind kind) noexcept {
  switch (kind) {
    case BenchmarkKind::Cate: return "cate";
    case BenchmarkKind::Positivity: return "positivity";
    case BenchmarkKind::Coverage: return "coverage";
    case BenchmarkKind::KSensitivity: return "k_sensitivity";
  }
  return "?";
}

std::optional<BenchmarkKind> parse_benchmark_kind(std::string_view name) {
  const std::string key = lower(name);
  for (BenchmarkKind k : {BenchmarkKind::Cate, BenchmarkKind::Positivity, BenchmarkKind::Coverage,
                          BenchmarkKind::KSensitivity}) {
    if (to_string(k) == key) return k;
  }
  return std::nullopt;
}

std::vector<MetricSummary> BenchmarkResult::summaries() const {
  std::vector<std::pair<std::string, std::string>> keys;
  for (const auto& row : rows) {
    std::pair<std::string, std::string> key{row.method, row.metric};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(std::move(key));
  }
  std::vector<MetricSummary> out;
  for (const auto& [method, metric] : keys) out.push_back(*summary(method, metric));
  return out;
}

std::vector<double> BenchmarkResult::values(std::string_view method,
                                            std::string_view metric) const {
  std::vector<double> v;
  for (const auto& row : rows)
    if (row.method == method && row.metric == metric) v.push_back(row.value);
  return v;
}

std::optional<MetricSummary> BenchmarkResult::summary(std::string_view method,
                                                      std::string_view metric) const {
  const auto v = values(method, metric);
  if (v.empty()) return std::nullopt;
  MetricSummary s;
  s.method = method;
  s.metric = metric;
  s.count = v.size();
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  s.median = type7(v, 0.5);
  s.q25 = type7(v, 0.25);
  s.q75 = type7(v, 0.75);
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

std::string BenchmarkResult::rows_csv() const {
  std::ostringstream out;
  out << "replicate,seed,method,metric,value\n";
  for (const auto& row : rows) {
    out << row.replicate << ',' << row.seed << ',' << row.method << ',' << row.metric << ','
        << format_double(row.value) << '\n';
  }
  return out.str();
}

std::string BenchmarkResult::timing_csv() const {
  std::ostringstream out;
  out << "replicate,seconds\n";
  for (std::size_t r = 0; r < seconds.size(); ++r) out << r << ',' << format_double(seconds[r]) << '\n';
  return out.str();
}

std::string BenchmarkResult::summary_text() const {
  std::ostringstream out;
  out << "benchmark " << to_string(config.kind) << "  dgp " << to_string(config.spec.dgp)
      << "  n " << config.spec.n << "  replicates " << config.replicates << "  seed "
      << config.spec.seed << '\n';
  out << "method,metric,count,mean,median,q25,q75,min,max\n";
  for (const auto& s : summaries()) {
    out << s.method << ',' << s.metric << ',' << s.count << ',' << format_short(s.mean) << ','
        << format_short(s.median) << ',' << format_short(s.q25) << ',' << format_short(s.q75)
        << ',' << format_short(s.min) << ',' << format_short(s.max) << '\n';
  }
  for (const auto& w : warnings) out << "warning: " << w << '\n';
  return out.str();
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  if (config.replicates == 0) throw Error(Errc::BadSpec, "replicates must be at least 1");
  if (config.kind == BenchmarkKind::KSensitivity && config.k_values.empty())
    throw Error(Errc::BadSpec, "k_sensitivity needs at least one K");
  config.spec.validate();

  std::vector<double> population;
  if (config.kind == BenchmarkKind::Coverage) {
    population = population_ate(config.spec.dgp, config.spec.grid, config.population_draws,
                                derive_seed(config.spec.seed, 0xC0FFEE));
  }

  std::vector<Replicate> reps(config.replicates);
  std::vector<double> seconds(config.replicates, 0.0);
  parallel_for(config.replicates, config.threads, [&](std::size_t r) {
    const auto start = std::chrono::steady_clock::now();
    reps[r] = run_replicate(config, r, population);
    seconds[r] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  BenchmarkResult result;
  result.config = config;
  result.seconds = std::move(seconds);
  for (auto& rep : reps) {
    for (auto& row : rep.rows) result.rows.push_back(std::move(row));
    if (rep.warning) result.warnings.push_back(*rep.warning);
  }
  return result;
}

}  // namespace distmatch
