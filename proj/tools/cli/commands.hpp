#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "distmatch/dataset.hpp"
#include "io.hpp"

namespace distmatch::cli {

/// Every option any subcommand accepts. Echoed into each run's manifest.
struct RunConfig {
  std::string command;
  std::filesystem::path data;
  std::filesystem::path schema;
  std::filesystem::path model;
  std::filesystem::path out = "out";

  GridSpec grid;
  /// False when --q/--trim were left at their defaults and a file header
  /// grid should win.
  bool grid_given = false;

  double split_ratio = 0.67;
  std::uint64_t seed = 0;
  std::size_t k_train = 10;
  std::size_t k_est = 10;
  std::size_t k_diag = 10;
  std::size_t j = 2;
  double c = 0.001;
  std::size_t starts = 5;
  std::size_t budget = 500;
  std::size_t restarts = 1;
  std::size_t threads = 1;

  double level = 0.95;
  bool bias_correct = false;
  bool center_on_bcm = false;
  std::vector<std::string> subgroups;
  std::size_t max_groups = 20;

  std::string kind = "cate";
  std::string dgp = "Linear";
  std::size_t n = 1500;
  std::size_t replicates = 1;
  std::vector<std::size_t> k_values{2, 5, 10};
  bool diagnose_estimation_only = false;
  bool timing = false;

  /// Stable JSON rendering (keys in declaration order).
  std::string to_json() const;
};

struct Artifact {
  std::string name;
  std::string contents;
};

/// Files a command produced, plus the inputs it read (for the manifest).
struct RunOutput {
  std::vector<Artifact> artifacts;
  std::vector<std::filesystem::path> inputs;
  /// Non-fatal notes for stderr (e.g. redrawn simulation seeds).
  std::vector<std::string> warnings;
};

RunOutput cmd_fit(const RunConfig& config);
RunOutput cmd_estimate(const RunConfig& config);
RunOutput cmd_diagnose(const RunConfig& config);
RunOutput cmd_simulate(const RunConfig& config);
RunOutput cmd_generate(const RunConfig& config);

/// Dispatches on config.command.
RunOutput run_command(const RunConfig& config);

/// Writes every artifact and manifest.json into config.out atomically.
void write_outputs(const RunConfig& config, const RunOutput& output);

/// Parses filters such as "age > 55" or "sex == F && bmi <= 30" against the
/// expanded dataset schema. Throws InvalidArgument.
std::function<bool(const Unit&)> parse_subgroup(const std::string& expr, const Schema& schema);

}  // namespace distmatch::cli
