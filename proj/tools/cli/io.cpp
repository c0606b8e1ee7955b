#include "io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"

#include "distmatch/error.hpp"

namespace distmatch::cli {
namespace {

using json = nlohmann::ordered_json;

std::string_view kind_name(InputCovariate::Kind kind) {
  switch (kind) {
    case InputCovariate::Kind::Scalar: return "scalar";
    case InputCovariate::Kind::Categorical: return "categorical";
    case InputCovariate::Kind::Distribution: return "distribution";
  }
  return "?";
}

InputSchema schema_from_json(const json& j) {
  if (!j.is_object() || !j.contains("covariates") || !j["covariates"].is_array())
    throw Error(Errc::SchemaError, "schema needs a \"covariates\" array");
  InputSchema schema;
  for (const auto& c : j["covariates"]) {
    if (!c.is_object() || !c.contains("name") || !c["name"].is_string())
      throw Error(Errc::SchemaError, "every covariate needs a string \"name\"");
    InputCovariate cov;
    cov.name = c["name"].get<std::string>();
    const std::string kind = c.value("kind", std::string("scalar"));
    if (kind == "scalar") {
      cov.kind = InputCovariate::Kind::Scalar;
    } else if (kind == "categorical") {
      cov.kind = InputCovariate::Kind::Categorical;
      if (!c.contains("levels") || !c["levels"].is_array() || c["levels"].empty())
        throw Error(Errc::SchemaError, "categorical covariate '" + cov.name + "' needs levels");
      for (const auto& level : c["levels"]) {
        if (!level.is_string())
          throw Error(Errc::SchemaError, "levels of '" + cov.name + "' must be strings");
        cov.levels.push_back(level.get<std::string>());
      }
    } else if (kind == "distribution") {
      cov.kind = InputCovariate::Kind::Distribution;
    } else {
      throw Error(Errc::SchemaError, "unknown covariate kind '" + kind + "'");
    }
    for (const auto& prior : schema.covariates) {
      if (prior.name == cov.name)
        throw Error(Errc::SchemaError, "covariate '" + cov.name + "' declared twice");
    }
    schema.covariates.push_back(std::move(cov));
  }
  if (schema.covariates.empty()) throw Error(Errc::SchemaError, "schema has no covariates");
  return schema;
}

json schema_to_json(const InputSchema& schema) {
  json covs = json::array();
  for (const auto& c : schema.covariates) {
    json entry{{"name", c.name}, {"kind", kind_name(c.kind)}};
    if (c.kind == InputCovariate::Kind::Categorical) entry["levels"] = c.levels;
    covs.push_back(std::move(entry));
  }
  return json{{"covariates", std::move(covs)}};
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  try {
    g.points = j.at("points").get<std::size_t>();
    g.lo = j.value("lo", 0.0);
    g.hi = j.value("hi", 1.0);
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("bad grid header: ") + e.what());
  }
  return g;
}

double number(const json& j, const std::string& what) {
  if (!j.is_number()) throw Error(Errc::SchemaError, what + " must be a number");
  return j.get<double>();
}

std::vector<double> numbers(const json& j, const std::string& what) {
  if (!j.is_array()) throw Error(Errc::SchemaError, what + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(number(v, what));
  return out;
}

QuantileFunction distribution_value(const json& j, const GridPtr& grid, const std::string& what) {
  if (!j.is_object()) throw Error(Errc::SchemaError, what + " must be an object");
  if (j.contains("samples")) {
    const auto samples = numbers(j["samples"], what + ".samples");
    return empirical_quantile_function(std::span<const double>(samples), grid);
  }
  if (j.contains("quantiles")) {
    auto values = numbers(j["quantiles"], what + ".quantiles");
    if (values.size() != grid->size()) {
      throw Error(Errc::GridMismatch, what + " has " + std::to_string(values.size()) +
                                          " quantiles, grid has " + std::to_string(grid->size()));
    }
    Support support{values.empty() ? 0.0 : values.front(), values.empty() ? 0.0 : values.back()};
    if (j.contains("support")) {
      const auto s = numbers(j["support"], what + ".support");
      if (s.size() != 2) throw Error(Errc::SchemaError, what + ".support needs [lo, hi]");
      support = {s[0], s[1]};
    }
    return make_quantile_function(std::move(values), grid, support);
  }
  throw Error(Errc::SchemaError, what + " needs \"samples\" or \"quantiles\"");
}

Unit parse_unit(const json& rec, const InputSchema& schema, const GridPtr& grid) {
  if (!rec.is_object()) throw Error(Errc::SchemaError, "record must be an object");
  if (!rec.contains("id") || !rec["id"].is_number_integer())
    throw Error(Errc::SchemaError, "record needs an integer \"id\"");
  if (!rec.contains("treatment") || !rec["treatment"].is_number_integer())
    throw Error(Errc::SchemaError, "record needs an integer \"treatment\"");
  if (!rec.contains("covariates") || !rec["covariates"].is_object())
    throw Error(Errc::SchemaError, "record needs a \"covariates\" object");
  if (!rec.contains("outcome")) throw Error(Errc::SchemaError, "record needs an \"outcome\"");
  const json& covs = rec["covariates"];
  for (const auto& [key, value] : covs.items()) {
    bool known = false;
    for (const auto& c : schema.covariates) known = known || c.name == key;
    if (!known) throw Error(Errc::SchemaError, "covariate '" + key + "' is not in the schema");
  }
  std::vector<QuantileFunction> values;
  for (const auto& c : schema.covariates) {
    if (!covs.contains(c.name)) throw Error(Errc::SchemaError, "missing covariate '" + c.name + "'");
    const json& v = covs[c.name];
    switch (c.kind) {
      case InputCovariate::Kind::Scalar:
        values.push_back(QuantileFunction::point_mass(grid, number(v, c.name)));
        break;
      case InputCovariate::Kind::Categorical: {
        if (!v.is_string()) throw Error(Errc::SchemaError, c.name + " must be a level name");
        const auto level = v.get<std::string>();
        bool found = false;
        for (const auto& l : c.levels) {
          found = found || l == level;
          values.push_back(QuantileFunction::point_mass(grid, l == level ? 1.0 : 0.0));
        }
        if (!found) throw Error(Errc::SchemaError, "unknown level '" + level + "' for " + c.name);
        break;
      }
      case InputCovariate::Kind::Distribution:
        values.push_back(distribution_value(v, grid, c.name));
        break;
    }
  }
  const auto treatment = rec["treatment"].get<std::int64_t>();
  if (treatment != 0 && treatment != 1) throw Error(Errc::SchemaError, "treatment must be 0 or 1");
  return Unit{rec["id"].get<UnitId>(), static_cast<int>(treatment), std::move(values),
              distribution_value(rec["outcome"], grid, "outcome")};
}

json quantiles_json(const QuantileFunction& f) {
  return json{{"quantiles", std::vector<double>(f.values().begin(), f.values().end())},
              {"support", {f.support_lo(), f.support_hi()}}};
}

}  // namespace

Schema InputSchema::expanded() const {
  Schema out;
  for (const auto& c : covariates) {
    switch (c.kind) {
      case InputCovariate::Kind::Scalar:
        out.covariates.push_back({c.name, CovariateKind::Scalar});
        break;
      case InputCovariate::Kind::Categorical:
        for (const auto& l : c.levels) out.covariates.push_back({c.name + "=" + l, CovariateKind::CategoricalLevel});
        break;
      case InputCovariate::Kind::Distribution:
        out.covariates.push_back({c.name, CovariateKind::Distribution});
        break;
    }
  }
  return out;
}

InputSchema input_schema_of(const Schema& schema) {
  InputSchema out;
  for (const auto& c : schema.covariates) {
    if (c.kind == CovariateKind::CategoricalLevel) {
      const auto eq = c.name.find('=');
      const std::string base = c.name.substr(0, eq);
      const std::string level = eq == std::string::npos ? c.name : c.name.substr(eq + 1);
      if (!out.covariates.empty() && out.covariates.back().kind == InputCovariate::Kind::Categorical &&
          out.covariates.back().name == base) {
        out.covariates.back().levels.push_back(level);
      } else {
        out.covariates.push_back({base, InputCovariate::Kind::Categorical, {level}});
      }
    } else {
      out.covariates.push_back({c.name, c.kind == CovariateKind::Distribution
                                            ? InputCovariate::Kind::Distribution
                                            : InputCovariate::Kind::Scalar,
                                {}});
    }
  }
  return out;
}

InputSchema parse_schema(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("schema: ") + e.what());
  }
  if (j.contains("schema")) return schema_from_json(j["schema"]);
  return schema_from_json(j);
}

InputSchema load_schema_file(const std::filesystem::path& path) {
  return parse_schema(read_file(path));
}

GridPtr GridSpec::make() const {
  if (points == 0) throw Error(Errc::InvalidArgument, "grid needs at least one point");
  if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
    throw Error(Errc::InvalidArgument, "grid bounds must satisfy 0 <= lo < hi <= 1");
  return ProbabilityGrid::uniform(points, lo, hi);
}

IngestResult ingest_text(std::string_view text, const std::optional<InputSchema>& schema,
                         const std::optional<GridSpec>& grid) {
  std::optional<InputSchema> active = schema;
  std::optional<GridSpec> header_grid;
  GridPtr grid_ptr;
  std::vector<Unit> units;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool first_record = true;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ", column " +
                                        std::to_string(e.byte) + ": " + e.what());
    }
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
      if (first_record && rec.is_object() && rec.contains("schema") && !rec.contains("id")) {
        first_record = false;
        if (!active) active = schema_from_json(rec["schema"]);
        if (rec.contains("grid")) header_grid = grid_from_json(rec["grid"]);
        continue;
      }
      first_record = false;
      if (!active) throw Error(Errc::SchemaError, "no schema header and no --schema given");
      if (!grid_ptr) grid_ptr = (grid ? *grid : header_grid.value_or(GridSpec{})).make();
      units.push_back(parse_unit(rec, *active, grid_ptr));
    } catch (const Error& e) {
      std::string msg = e.what();
      const std::string prefix = std::string(to_string(e.code())) + ": ";
      if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
      throw Error(e.code(), where + msg);
    }
    if (end == text.size()) break;
  }
  if (!active) throw Error(Errc::SchemaError, "no schema header and no --schema given");
  if (!grid_ptr) grid_ptr = (grid ? *grid : header_grid.value_or(GridSpec{})).make();
  return IngestResult{Dataset(grid_ptr, active->expanded(), std::move(units)), *active, header_grid};
}

IngestResult ingest(const std::filesystem::path& path, const std::optional<InputSchema>& schema,
                    const std::optional<GridSpec>& grid) {
  return ingest_text(read_file(path), schema, grid);
}

std::string serialize(const Dataset& data, const InputSchema& schema, const GridSpec& grid) {
  std::string out;
  json header{{"schema", schema_to_json(schema)},
              {"grid", {{"points", grid.points}, {"lo", grid.lo}, {"hi", grid.hi}}}};
  out += header.dump();
  out += '\n';
  for (const Unit& u : data.units()) {
    json covs = json::object();
    std::size_t at = 0;
    for (const auto& c : schema.covariates) {
      switch (c.kind) {
        case InputCovariate::Kind::Scalar:
          covs[c.name] = u.covariates[at++][0];
          break;
        case InputCovariate::Kind::Categorical: {
          std::string level;
          for (const auto& l : c.levels) {
            if (u.covariates[at++][0] == 1.0) level = l;
          }
          covs[c.name] = level;
          break;
        }
        case InputCovariate::Kind::Distribution:
          covs[c.name] = quantiles_json(u.covariates[at++]);
          break;
      }
    }
    json rec{{"id", u.id}, {"treatment", u.treatment}, {"covariates", std::move(covs)},
             {"outcome", quantiles_json(u.outcome)}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void write_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(Errc::Io, "cannot write " + tmp.string());
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw Error(Errc::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace distmatch::cli
