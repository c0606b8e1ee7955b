#include "distmatch/error.hpp"

namespace distmatch {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NonMonotone: return "NonMonotone";
    case Errc::SupportViolation: return "SupportViolation";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::EmptySet: return "EmptySet";
    case Errc::GridMismatch: return "GridMismatch";
    case Errc::NonPositiveSigma: return "NonPositiveSigma";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::PoolTooSmall: return "PoolTooSmall";
    case Errc::ArmTooSmall: return "ArmTooSmall";
    case Errc::InternalIdentityViolation: return "InternalIdentityViolation";
    case Errc::TooFewUnits: return "TooFewUnits";
    case Errc::BadLevel: return "BadLevel";
    case Errc::ModelNotFitted: return "ModelNotFitted";
    case Errc::BadSpec: return "BadSpec";
    case Errc::DegenerateDesign: return "DegenerateDesign";
    case Errc::ParseError: return "ParseError";
    case Errc::SchemaError: return "SchemaError";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace distmatch
