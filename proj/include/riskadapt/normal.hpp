#pragma once

namespace riskadapt {

/// Standard normal CDF, evaluated through the complementary error function.
double normal_cdf(double x);

/// Standard normal quantile function for p in (0, 1).
///
/// Rational approximation (Acklam) followed by one Halley refinement step
/// against normal_cdf; absolute error is below 1e-14 on (1e-300, 1 - 1e-16).
/// Returns -inf / +inf at p = 0 / 1.
double normal_quantile(double p);

}  // namespace riskadapt
