#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Composite Simpson on [0, x]; deliberately independent of erf/erfc.
inline double normal_cdf(double x) {
  const int panels = 20000;
  const double h = x / panels;
  double s = normal_pdf(0.0) + normal_pdf(x);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * normal_pdf(i * h);
  return 0.5 + s * h / 3.0;
}

inline double simpson(const std::function<double(double)>& f, double a, double b, int panels = 20000) {
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

inline double truncated_normal_mean(double lo, double hi, double mu, double sigma) {
  const double a = (lo - mu) / sigma, b = (hi - mu) / sigma;
  return mu + sigma * (normal_pdf(a) - normal_pdf(b)) / (normal_cdf(b) - normal_cdf(a));
}

inline double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return d;
}

inline double poly_cdf(double a, double x) {
  const double c2 = -24.0 / 5.0 - 1.5 * a, c1 = a / 2.0 + 24.0 / 5.0;
  return a * std::pow(x, 4) / 4.0 + c2 * std::pow(x, 3) / 3.0 + c1 * x * x / 2.0 + x / 5.0;
}

}  // namespace oracle
