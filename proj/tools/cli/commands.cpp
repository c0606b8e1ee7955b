#include "commands.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>

#include "distmatch/benchmark.hpp"
#include "distmatch/error.hpp"
#include "distmatch/inference.hpp"
#include "distmatch/matching.hpp"
#include "distmatch/metric.hpp"
#include "distmatch/overlap.hpp"
#include "distmatch/simulation.hpp"
#include "distmatch/version.hpp"
#include "json.hpp"

namespace distmatch::cli {
namespace {

using json = nlohmann::ordered_json;

IngestResult load(const RunConfig& config) {
  if (config.data.empty()) throw Error(Errc::InvalidArgument, "--data is required");
  std::optional<InputSchema> schema;
  if (!config.schema.empty()) schema = load_schema_file(config.schema);
  std::optional<GridSpec> grid;
  if (config.grid_given) grid = config.grid;
  return ingest(config.data, schema, grid);
}

OptimizerConfig optimizer_of(const RunConfig& config) {
  OptimizerConfig opt;
  opt.c = config.c;
  opt.k_train = config.k_train;
  opt.starts = config.starts;
  opt.budget_per_dimension = config.budget;
  opt.max_restarts = config.restarts;
  opt.seed = derive_seed(config.seed, 2);
  opt.threads = config.threads;
  return opt;
}

struct Model {
  MetricParams params;
  double split_ratio = 0.67;
  std::uint64_t seed = 0;
};

std::string model_json(const Model& model, const Schema& schema, const FitResult* fit) {
  json names = json::array();
  for (const auto& c : schema.covariates) names.push_back(c.name);
  json j{{"covariates", names},
         {"weights", model.params.weights},
         {"c", model.params.c},
         {"split_ratio", model.split_ratio},
         {"seed", model.seed}};
  if (fit) {
    j["loss"] = fit->loss;
    j["initial_loss"] = fit->initial_loss;
    j["evaluations"] = fit->evaluations;
    j["budget_exhausted"] = fit->budget_exhausted;
  }
  return j.dump(2) + "\n";
}

Model read_model(const std::filesystem::path& path, const Schema& schema) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  Model m;
  try {
    const auto names = j.at("covariates").get<std::vector<std::string>>();
    if (names.size() != schema.size())
      throw Error(Errc::SchemaError, "model covariates do not match the data schema");
    for (std::size_t l = 0; l < names.size(); ++l) {
      if (names[l] != schema.covariates[l].name)
        throw Error(Errc::SchemaError, "model covariate '" + names[l] + "' does not match '" +
                                           schema.covariates[l].name + "'");
    }
    m.params.weights = j.at("weights").get<std::vector<double>>();
    m.params.c = j.value("c", 0.001);
    m.split_ratio = j.at("split_ratio").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
  m.params.validate();
  return m;
}

struct Prepared {
  IngestResult input;
  HonestSplit split;
  Model model;
  std::optional<FitResult> fit;
};

// Loads the data, splits it and either reads --model or fits a metric.
Prepared prepare(const RunConfig& config, RunOutput& out) {
  IngestResult input = load(config);
  out.inputs.push_back(config.data);
  if (!config.schema.empty()) out.inputs.push_back(config.schema);
  Model model;
  std::optional<FitResult> fit;
  if (!config.model.empty()) {
    model = read_model(config.model, input.data.schema());
    out.inputs.push_back(config.model);
  } else {
    model.split_ratio = config.split_ratio;
    model.seed = config.seed;
  }
  HonestSplit split = honest_split(input.data, model.split_ratio, model.seed);
  if (config.model.empty()) {
    fit = fit_metric(split.train, optimizer_of(config));
    model.params = fit->params;
    if (fit->budget_exhausted)
      out.warnings.push_back("optimizer budget exhausted; best-so-far weights returned");
  }
  return Prepared{std::move(input), std::move(split), std::move(model), std::move(fit)};
}

std::string curve_csv(const ProbabilityGrid& grid, const std::vector<std::string>& header,
                      const std::vector<const std::vector<double>*>& columns) {
  std::ostringstream s;
  s << "q";
  for (const auto& h : header) s << ',' << h;
  s << '\n';
  for (std::size_t q = 0; q < grid.size(); ++q) {
    s << format_number(grid.prob(q));
    for (const auto* col : columns) s << ',' << format_number((*col)[q]);
    s << '\n';
  }
  return s.str();
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::function<bool(const Unit&)> parse_condition(const std::string& text, const Schema& schema) {
  static const char* ops[] = {">=", "<=", "==", "!=", ">", "<"};
  std::size_t at = std::string::npos;
  std::string op;
  for (const char* candidate : ops) {
    const auto p = text.find(candidate);
    if (p != std::string::npos && (at == std::string::npos || p < at ||
                                   (p == at && std::string(candidate).size() > op.size()))) {
      at = p;
      op = candidate;
    }
  }
  if (at == std::string::npos)
    throw Error(Errc::InvalidArgument, "subgroup condition '" + text + "' has no comparison");
  const std::string name = trim(text.substr(0, at));
  const std::string value = trim(text.substr(at + op.size()));
  if (name.empty() || value.empty())
    throw Error(Errc::InvalidArgument, "subgroup condition '" + text + "' is incomplete");

  if (const auto level = schema.index_of(name + "=" + value)) {
    if (op != "==" && op != "!=")
      throw Error(Errc::InvalidArgument, "categorical '" + name + "' supports only == and !=");
    const std::size_t l = *level;
    const bool equal = op == "==";
    return [l, equal](const Unit& u) { return (u.covariates[l][0] == 1.0) == equal; };
  }
  const auto index = schema.index_of(name);
  if (!index) throw Error(Errc::InvalidArgument, "subgroup refers to unknown covariate '" + name + "'");
  if (schema.covariates[*index].kind != CovariateKind::Scalar)
    throw Error(Errc::InvalidArgument, "subgroup filters apply to scalar covariates only");
  double threshold = 0.0;
  try {
    std::size_t used = 0;
    threshold = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
  } catch (const std::exception&) {
    throw Error(Errc::InvalidArgument, "subgroup value '" + value + "' is not a number");
  }
  const std::size_t l = *index;
  return [l, op, threshold](const Unit& u) {
    const double x = u.covariates[l][0];
    if (op == ">") return x > threshold;
    if (op == ">=") return x >= threshold;
    if (op == "<") return x < threshold;
    if (op == "<=") return x <= threshold;
    if (op == "==") return x == threshold;
    return x != threshold;
  };
}

SimulationSpec sim_spec(const RunConfig& config) {
  const auto dgp = parse_dgp(config.dgp);
  if (!dgp) throw Error(Errc::InvalidArgument, "unknown dgp '" + config.dgp + "'");
  SimulationSpec spec;
  spec.dgp = *dgp;
  spec.n = config.n;
  spec.seed = config.seed;
  spec.grid = config.grid.make();
  spec.split_ratio = config.split_ratio;
  spec.k = config.k_est;
  spec.optimizer = optimizer_of(config);
  spec.optimizer.threads = 1;
  return spec;
}

}  // namespace

std::function<bool(const Unit&)> parse_subgroup(const std::string& expr, const Schema& schema) {
  std::vector<std::function<bool(const Unit&)>> parts;
  std::size_t pos = 0;
  while (true) {
    const auto amp = expr.find("&&", pos);
    parts.push_back(parse_condition(expr.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos), schema));
    if (amp == std::string::npos) break;
    pos = amp + 2;
  }
  return [parts](const Unit& u) {
    return std::all_of(parts.begin(), parts.end(), [&](const auto& p) { return p(u); });
  };
}

std::string RunConfig::to_json() const {
  json doc{{"command", command},
         {"data", data.string()},
         {"schema", schema.string()},
         {"model", model.string()},
         {"out", out.string()},
         {"grid", {{"points", grid.points}, {"lo", grid.lo}, {"hi", grid.hi}, {"given", grid_given}}},
         {"split_ratio", split_ratio},
         {"seed", seed},
         {"k_train", k_train},
         {"k_est", k_est},
         {"k_diag", k_diag},
         {"j", j},
         {"c", c},
         {"starts", starts},
         {"budget", budget},
         {"restarts", restarts},
         {"threads", threads},
         {"level", level},
         {"bias_correct", bias_correct},
         {"center_on_bcm", center_on_bcm},
         {"subgroups", subgroups},
         {"max_groups", max_groups},
         {"kind", kind},
         {"dgp", dgp},
         {"n", n},
         {"replicates", replicates},
         {"k_values", k_values},
         {"diagnose_estimation_only", diagnose_estimation_only},
         {"timing", timing}};
  return doc.dump(2);
}

RunOutput cmd_fit(const RunConfig& config) {
  RunOutput out;
  Prepared p = prepare(config, out);
  if (!p.fit) throw Error(Errc::InvalidArgument, "fit does not take --model");
  const Schema& schema = p.input.data.schema();
  std::ostringstream weights;
  weights << "covariate,weight\n";
  for (std::size_t l = 0; l < schema.size(); ++l)
    weights << schema.covariates[l].name << ',' << format_number(p.model.params.weights[l]) << '\n';
  std::ostringstream trace;
  trace << "start,evaluation,loss\n";
  for (const auto& t : p.fit->trace)
    trace << t.start << ',' << t.evaluation << ',' << format_number(t.loss) << '\n';
  std::ostringstream split;
  split << "id,set\n";
  for (const Unit& u : p.split.train.units()) split << u.id << ",train\n";
  for (const Unit& u : p.split.estimation.units()) split << u.id << ",estimation\n";
  out.artifacts.push_back({"model.json", model_json(p.model, schema, &*p.fit)});
  out.artifacts.push_back({"weights.csv", weights.str()});
  out.artifacts.push_back({"trace.csv", trace.str()});
  out.artifacts.push_back({"split.csv", split.str()});
  return out;
}

RunOutput cmd_estimate(const RunConfig& config) {
  RunOutput out;
  Prepared p = prepare(config, out);
  const Dataset& est = p.split.estimation;
  const MatchIndex index(est, p.model.params);
  InferenceOptions io;
  io.k = config.k_est;
  io.j = config.j;
  io.level = config.level;
  io.bias_correct = config.bias_correct || config.center_on_bcm;
  io.center_on_bcm = config.center_on_bcm;
  const InferenceReport report = infer_ate(index, io);
  if (report.tau_bcm) {
    out.artifacts.push_back({"ate.csv", curve_csv(est.grid(), {"tau", "tau_bcm", "var", "lo", "hi"},
                                                  {&report.tau_hat, &*report.tau_bcm,
                                                   &report.variance_hat, &report.ci_lo,
                                                   &report.ci_hi})});
  } else {
    out.artifacts.push_back({"ate.csv", curve_csv(est.grid(), {"tau", "var", "lo", "hi"},
                                                  {&report.tau_hat, &report.variance_hat,
                                                   &report.ci_lo, &report.ci_hi})});
  }
  std::ostringstream index_csv;
  index_csv << "subgroup,expression,n\n";
  for (std::size_t s = 0; s < config.subgroups.size(); ++s) {
    const auto member = parse_subgroup(config.subgroups[s], est.schema());
    const EffectCurve curve = subgroup_cate(index, config.k_est, member);
    index_csv << s << ",\"" << config.subgroups[s] << "\"," << curve.n_used << '\n';
    out.artifacts.push_back(
        {"subgroup_" + std::to_string(s) + ".csv", curve_csv(est.grid(), {"tau"}, {&curve.tau})});
  }
  if (!config.subgroups.empty()) out.artifacts.push_back({"subgroups.csv", index_csv.str()});
  if (p.fit) out.artifacts.push_back({"model.json", model_json(p.model, est.schema(), &*p.fit)});
  return out;
}

RunOutput cmd_diagnose(const RunConfig& config) {
  RunOutput out;
  Prepared p = prepare(config, out);
  const Dataset& est = p.split.estimation;
  const MatchIndex index(est, p.model.params);
  const OverlapReport report = diagnose_overlap(index, config.k_diag);
  std::ostringstream units;
  units << "id,treatment,diameter,flagged\n";
  for (std::size_t r = 0; r < report.units.size(); ++r) {
    const auto& e = report.units[r];
    units << e.id << ',' << est.unit(r).treatment << ',' << format_number(e.diameter) << ','
          << (e.flagged ? 1 : 0) << '\n';
  }
  std::ostringstream summary;
  summary << "key,value\n"
          << "units," << report.units.size() << '\n'
          << "q25," << format_number(report.q25) << '\n'
          << "q75," << format_number(report.q75) << '\n'
          << "d_upper," << format_number(report.d_upper) << '\n'
          << "flagged_fraction," << format_number(report.flagged_fraction) << '\n';
  std::string groups;
  std::size_t shown = 0;
  for (std::size_t r = 0; r < report.units.size() && shown < config.max_groups; ++r) {
    if (!report.units[r].flagged) continue;
    groups += "unit " + std::to_string(report.units[r].id) + "\n";
    groups += matched_group_report(index, est.unit(r), config.k_diag).render_text();
    groups += "\n";
    ++shown;
  }
  out.artifacts.push_back({"overlap.csv", units.str()});
  out.artifacts.push_back({"overlap_summary.csv", summary.str()});
  out.artifacts.push_back({"matched_groups.txt", groups});
  if (p.fit) out.artifacts.push_back({"model.json", model_json(p.model, est.schema(), &*p.fit)});
  return out;
}

RunOutput cmd_simulate(const RunConfig& config) {
  const auto kind = parse_benchmark_kind(config.kind);
  if (!kind) throw Error(Errc::InvalidArgument, "unknown benchmark kind '" + config.kind + "'");
  BenchmarkConfig bc;
  bc.kind = *kind;
  bc.spec = sim_spec(config);
  bc.replicates = config.replicates;
  bc.threads = config.threads;
  bc.k_values = config.k_values;
  bc.diagnose_full_sample = !config.diagnose_estimation_only;
  bc.j = config.j;
  bc.level = config.level;
  const BenchmarkResult result = run_benchmark(bc);
  RunOutput out;
  out.artifacts.push_back({"replicates.csv", result.rows_csv()});
  out.artifacts.push_back({"summary.txt", result.summary_text()});
  if (config.timing) out.artifacts.push_back({"timing.csv", result.timing_csv()});
  out.warnings = result.warnings;
  return out;
}

RunOutput cmd_generate(const RunConfig& config) {
  const SimulationSpec spec = sim_spec(config);
  const SimulatedData sim = generate(spec);
  RunOutput out;
  out.artifacts.push_back(
      {"data.jsonl", serialize(sim.data, input_schema_of(sim.data.schema()), config.grid)});
  std::ostringstream truth;
  truth << "id,no_overlap";
  for (double q : sim.data.grid().probs()) truth << ",tau_" << format_number(q);
  truth << '\n';
  for (const Unit& u : sim.data.units()) {
    const auto i = static_cast<std::size_t>(u.id);
    truth << u.id << ',' << (sim.no_overlap[i] ? 1 : 0);
    for (double v : sim.true_cate[i]) truth << ',' << format_number(v);
    truth << '\n';
  }
  out.artifacts.push_back({"truth.csv", truth.str()});
  return out;
}

RunOutput run_command(const RunConfig& config) {
  if (config.command == "fit") return cmd_fit(config);
  if (config.command == "estimate") return cmd_estimate(config);
  if (config.command == "diagnose") return cmd_diagnose(config);
  if (config.command == "simulate") return cmd_simulate(config);
  if (config.command == "generate") return cmd_generate(config);
  throw Error(Errc::InvalidArgument, "unknown command '" + config.command + "'");
}

void write_outputs(const RunConfig& config, const RunOutput& output) {
  json inputs = json::array();
  for (const auto& path : output.inputs)
    inputs.push_back({{"path", path.string()}, {"fnv1a64", fnv1a_hex(read_file(path))}});
  json outputs = json::array();
  for (const auto& a : output.artifacts) {
    write_atomic(config.out / a.name, a.contents);
    if (a.name != "timing.csv") outputs.push_back({{"file", a.name}, {"fnv1a64", fnv1a_hex(a.contents)}});
  }
  json manifest{{"tool", "distmatch"},
                {"version", kVersion},
                {"command", config.command},
                {"seed", config.seed},
                {"config", json::parse(config.to_json())},
                {"inputs", std::move(inputs)},
                {"outputs", std::move(outputs)}};
  write_atomic(config.out / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace distmatch::cli
