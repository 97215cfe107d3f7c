#pragma once

namespace shiftmoment::normal {

/// Standard normal density.
double pdf(double z);

/// Standard normal CDF, computed from erfc for accuracy in both tails.
double cdf(double z);

/// Inverse standard normal CDF for p in (0,1). Acklam's rational
/// approximation followed by one Halley step against cdf().
double quantile(double p);

}  // namespace shiftmoment::normal
