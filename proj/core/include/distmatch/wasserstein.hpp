#pragma once

#include <span>

#include "distmatch/quantile.hpp"

namespace distmatch {

enum class WassersteinOrder { One, Two, Infinity };

/// 1-D Wasserstein distance computed on the shared grid:
///   W1   = sum_q w_q |a(q) - b(q)|
///   W2   = sqrt(sum_q w_q (a(q) - b(q))^2)
///   Winf = max_q |a(q) - b(q)|
/// Throws GridMismatch when the operands live on different grids.
double wasserstein_distance(const QuantileFunction& a, const QuantileFunction& b,
                            WassersteinOrder order);

/// W2^2 without the square root; the building block of the covariate metric.
double squared_w2(const QuantileFunction& a, const QuantileFunction& b);

/// Wasserstein barycenter: the levelwise mean of the members' quantile values.
/// Throws EmptySet or GridMismatch.
QuantileFunction barycenter(std::span<const QuantileFunction> members);
QuantileFunction barycenter(std::span<const QuantileFunction* const> members);

}  // namespace distmatch
