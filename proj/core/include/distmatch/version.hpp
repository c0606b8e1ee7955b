#pragma once

namespace distmatch {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace distmatch
