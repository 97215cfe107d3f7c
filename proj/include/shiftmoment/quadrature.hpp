#pragma once

#include <cstddef>
#include <memory>
#include <vector>

namespace shiftmoment {

/// Gauss-Legendre rule mapped onto [0, 1].
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Cached n-point rule on [0, 1]; thread-safe.
std::shared_ptr<const QuadratureRule> gauss_legendre(std::size_t n);

/// Integrates fn over [0,1] with an n-point rule.
template <typename Fn>
double integrate_unit(Fn&& fn, std::size_t n) {
  const auto rule = gauss_legendre(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += rule->weights[i] * fn(rule->nodes[i]);
  return acc;
}

/// Integrates fn over [a,b] using `panels` equal panels of an n-point rule.
template <typename Fn>
double integrate_composite(Fn&& fn, double a, double b, std::size_t panels, std::size_t n) {
  const auto rule = gauss_legendre(n);
  const double h = (b - a) / static_cast<double>(panels);
  double acc = 0.0;
  for (std::size_t p = 0; p < panels; ++p) {
    const double lo = a + h * static_cast<double>(p);
    for (std::size_t i = 0; i < n; ++i) acc += h * rule->weights[i] * fn(lo + h * rule->nodes[i]);
  }
  return acc;
}

}  // namespace shiftmoment
