#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "distmatch/dataset.hpp"

namespace distmatch::cli {

/// Covariate as written in input files. Categorical covariates expand to one
/// CategoricalLevel coordinate per level when a Dataset is built.
struct InputCovariate {
  enum class Kind { Scalar, Categorical, Distribution };
  std::string name;
  Kind kind = Kind::Scalar;
  std::vector<std::string> levels;
};

struct InputSchema {
  std::vector<InputCovariate> covariates;

  /// Dataset schema with categorical covariates expanded ("sex=F", "sex=M").
  Schema expanded() const;
};

/// Reads the JSON object form used by header lines and --schema files:
/// {"covariates": [{"name": "age", "kind": "scalar"}, ...]}. Throws SchemaError.
InputSchema parse_schema(std::string_view json_text);
InputSchema load_schema_file(const std::filesystem::path& path);

struct GridSpec {
  std::size_t points = 99;
  double lo = 0.0;
  double hi = 1.0;
  GridPtr make() const;
  bool operator==(const GridSpec&) const = default;
};

struct IngestResult {
  Dataset data;
  InputSchema schema;
  /// Grid recorded in the file header, if any.
  std::optional<GridSpec> header_grid;
};

/// Line-delimited records, one unit per line. The first line may be a header
/// {"schema": {...}, "grid": {...}}; otherwise `schema` must be given.
/// Outcomes and distributional covariates take {"samples": [...]} (turned
/// into empirical quantile functions) or {"quantiles": [...], "support":
/// [lo, hi]} of exactly Q values. Throws ParseError (with line and column),
/// SchemaError, GridMismatch.
IngestResult ingest(const std::filesystem::path& path, const std::optional<InputSchema>& schema,
                    const std::optional<GridSpec>& grid);
IngestResult ingest_text(std::string_view text, const std::optional<InputSchema>& schema,
                         const std::optional<GridSpec>& grid);

/// Header plus one precomputed-quantile record per unit; ingest_text of the
/// result reproduces `data` exactly.
std::string serialize(const Dataset& data, const InputSchema& schema, const GridSpec& grid);

/// Inverse of InputSchema::expanded for datasets built in code.
InputSchema input_schema_of(const Schema& schema);

/// Writes via a sibling temporary file and a rename.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace distmatch::cli
