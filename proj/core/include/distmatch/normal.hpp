#pragma once

namespace distmatch {

/// Standard normal CDF.
double normal_cdf(double x) noexcept;

/// Standard normal quantile (Wichura's AS241, about 16 significant digits).
/// Returns -inf / +inf at p = 0 / 1 and NaN outside [0, 1].
double normal_quantile(double p) noexcept;

}  // namespace distmatch
