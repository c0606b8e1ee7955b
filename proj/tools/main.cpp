#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cli/commands.hpp"
#include "distmatch/error.hpp"
#include "distmatch/version.hpp"

namespace {

using distmatch::cli::RunConfig;

// One line on stderr that scripts can split on spaces and '='.
void report_error(std::string_view code, const std::string& message) {
  std::string escaped;
  for (char ch : message) {
    if (ch == '"' || ch == '\\') escaped.push_back('\\');
    escaped.push_back(ch == '\n' ? ' ' : ch);
  }
  std::cerr << "error code=" << code << " message=\"" << escaped << "\"\n";
}

void add_common(CLI::App* app, RunConfig& c) {
  app->add_option("--out,-o", c.out, "Output directory")->envname("DISTMATCH_OUT");
  app->add_option("--seed", c.seed, "Seed for splits, optimizer starts and simulation")
      ->envname("DISTMATCH_SEED");
  app->add_option("--threads", c.threads, "Worker threads (0 = all cores)")
      ->envname("DISTMATCH_THREADS");
  auto* q = app->add_option("--q", c.grid.points, "Number of quantile levels")
                ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
                ->envname("DISTMATCH_Q");
  auto* trim = app->add_option_function<std::vector<double>>(
                      "--trim",
                      [&c](const std::vector<double>& v) {
                        c.grid.lo = v[0];
                        c.grid.hi = v[1];
                      },
                      "Keep only levels between LO and HI, e.g. --trim 0.025 0.975")
                   ->expected(2)
                   ->check(CLI::Range(0.0, 1.0));
  app->callback([&c, q, trim] { c.grid_given = c.grid_given || q->count() > 0 || trim->count() > 0; });
}

void add_data(CLI::App* app, RunConfig& c) {
  app->add_option("--data,-d", c.data, "Line-delimited unit records")
      ->required()
      ->check(CLI::ExistingFile)
      ->envname("DISTMATCH_DATA");
  app->add_option("--schema", c.schema, "Schema file when the data has no header line")
      ->check(CLI::ExistingFile)
      ->envname("DISTMATCH_SCHEMA");
  app->add_option("--split-ratio", c.split_ratio, "Fraction of units used to learn the metric")
      ->check(CLI::Range(0.05, 0.95))
      ->envname("DISTMATCH_SPLIT_RATIO");
}

void add_fit_options(CLI::App* app, RunConfig& c) {
  app->add_option("--k-train", c.k_train, "Neighbors used by the training loss")
      ->check(CLI::Range(std::size_t{1}, std::size_t{10000}))
      ->envname("DISTMATCH_K_TRAIN");
  app->add_option("--c", c.c, "Weight-norm regularization strength")
      ->check(CLI::NonNegativeNumber)
      ->envname("DISTMATCH_C");
  app->add_option("--starts", c.starts, "Optimizer starts")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000}))
      ->envname("DISTMATCH_STARTS");
  app->add_option("--budget", c.budget, "Loss evaluations per start, per covariate")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000000}))
      ->envname("DISTMATCH_BUDGET");
  app->add_option("--restarts", c.restarts, "Simplex rebuilds per start after convergence")
      ->check(CLI::Range(std::size_t{0}, std::size_t{100}))
      ->envname("DISTMATCH_RESTARTS");
}

void add_model(CLI::App* app, RunConfig& c) {
  app->add_option("--model", c.model, "model.json from a previous fit (skips fitting)")
      ->check(CLI::ExistingFile)
      ->envname("DISTMATCH_MODEL");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributional matching: learn a covariate metric, estimate quantile "
               "treatment effects, diagnose overlap, run simulations"};
  app.set_version_flag("--version", std::string(distmatch::kVersion));
  app.require_subcommand(1);
  RunConfig c;

  auto* fit = app.add_subcommand("fit", "Learn covariate weights on the training split");
  add_common(fit, c);
  add_data(fit, c);
  add_fit_options(fit, c);

  auto* est = app.add_subcommand("estimate", "ATE with confidence bands, plus subgroup effects");
  add_common(est, c);
  add_data(est, c);
  add_fit_options(est, c);
  add_model(est, c);
  est->add_option("--k-est", c.k_est, "Neighbors per matched group")
      ->check(CLI::Range(std::size_t{1}, std::size_t{10000}))
      ->envname("DISTMATCH_K_EST");
  est->add_option("--j", c.j, "Same-arm neighbors in the variance proxy")
      ->check(CLI::Range(std::size_t{1}, std::size_t{10000}))
      ->envname("DISTMATCH_J");
  est->add_option("--level", c.level, "Confidence level")
      ->check(CLI::Range(0.5, 0.9999))
      ->envname("DISTMATCH_LEVEL");
  est->add_flag("--bias-correct", c.bias_correct, "Also report the regression-adjusted ATE");
  est->add_flag("--center-on-bcm", c.center_on_bcm, "Center bands on the adjusted ATE");
  est->add_option("--subgroup", c.subgroups, "Filter such as \"age > 55\" (repeatable)");

  auto* diag = app.add_subcommand("diagnose", "Flag units whose matched groups are too wide");
  add_common(diag, c);
  add_data(diag, c);
  add_fit_options(diag, c);
  add_model(diag, c);
  diag->add_option("--k-diag", c.k_diag, "Opposite-arm neighbors behind each diameter")
      ->check(CLI::Range(std::size_t{1}, std::size_t{10000}))
      ->envname("DISTMATCH_K_DIAG");
  diag->add_option("--max-groups", c.max_groups, "Matched-group tables to print");

  auto* sim = app.add_subcommand("simulate", "Run a seeded simulation benchmark");
  add_common(sim, c);
  add_fit_options(sim, c);
  sim->add_option("--kind", c.kind, "cate | positivity | coverage | k_sensitivity")
      ->envname("DISTMATCH_KIND");
  sim->add_option("--dgp", c.dgp,
                  "Linear | Variance | Complex | DistCov | MixtureBeta | PositivityCorner")
      ->envname("DISTMATCH_DGP");
  sim->add_option("--n", c.n, "Units per replicate")->check(CLI::Range(std::size_t{20}, std::size_t{1000000}));
  sim->add_option("--replicates", c.replicates, "Replicates")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}))
      ->envname("DISTMATCH_REPLICATES");
  sim->add_option("--split-ratio", c.split_ratio, "Train fraction")->check(CLI::Range(0.05, 0.95));
  sim->add_option("--k-est", c.k_est, "Estimation and diagnostic neighbors");
  sim->add_option("--k-values", c.k_values, "K values for k_sensitivity");
  sim->add_option("--j", c.j, "Same-arm neighbors in the variance proxy");
  sim->add_option("--level", c.level, "Confidence level")->check(CLI::Range(0.5, 0.9999));
  sim->add_flag("--diagnose-estimation-only", c.diagnose_estimation_only,
                "Positivity: flag only the estimation split instead of every unit");
  sim->add_flag("--timing", c.timing, "Also write per-replicate wall-clock timing.csv");

  auto* gen = app.add_subcommand("generate", "Write a simulated dataset and its ground truth");
  add_common(gen, c);
  gen->add_option("--dgp", c.dgp, "Data-generating process")->envname("DISTMATCH_DGP");
  gen->add_option("--n", c.n, "Units")->check(CLI::Range(std::size_t{20}, std::size_t{1000000}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) report_error("UsageError", e.what());
    return app.exit(e);
  }
  for (auto* sub : app.get_subcommands()) c.command = sub->get_name();

  try {
    const auto output = distmatch::cli::run_command(c);
    distmatch::cli::write_outputs(c, output);
    for (const auto& w : output.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << c.out.string() << '\n';
  } catch (const distmatch::Error& e) {
    std::string msg = e.what();
    const std::string prefix = std::string(distmatch::to_string(e.code())) + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    report_error(distmatch::to_string(e.code()), msg);
    return 2;
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return 3;
  }
  return 0;
}
