#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace distmatch {

enum class Errc {
  InvalidArgument,
  NonMonotone,
  SupportViolation,
  LengthMismatch,
  EmptyBatch,
  EmptySet,
  GridMismatch,
  NonPositiveSigma,
  SchemaMismatch,
  PoolTooSmall,
  ArmTooSmall,
  InternalIdentityViolation,
  TooFewUnits,
  BadLevel,
  ModelNotFitted,
  BadSpec,
  DegenerateDesign,
  ParseError,
  SchemaError,
  Io,
};

std::string_view to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so the
// CLI can print a machine-parsable error line.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace distmatch
