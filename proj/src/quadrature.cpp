#include "shiftmoment/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "shiftmoment/errors.hpp"

namespace shiftmoment {

namespace {

// Newton iteration on P_n from the Chebyshev-like initial guess; nodes come in
// symmetric pairs so only half are solved for.
QuadratureRule build_rule(std::size_t n) {
  QuadratureRule rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const std::size_t half = (n + 1) / 2;
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < half; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (nd + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        const double jd = static_cast<double>(j);
        p1 = ((2.0 * jd - 1.0) * z * p2 - (jd - 1.0) * p3) / jd;
      }
      dp = nd * (z * p1 - p2) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) {
        // one more evaluation of dp at the converged node
        p1 = 1.0;
        p2 = 0.0;
        for (std::size_t j = 1; j <= n; ++j) {
          const double p3 = p2;
          p2 = p1;
          const double jd = static_cast<double>(j);
          p1 = ((2.0 * jd - 1.0) * z * p2 - (jd - 1.0) * p3) / jd;
        }
        dp = nd * (z * p1 - p2) / (z * z - 1.0);
        break;
      }
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    // map [-1,1] -> [0,1]
    rule.nodes[i] = 0.5 * (1.0 - z);
    rule.nodes[n - 1 - i] = 0.5 * (1.0 + z);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  return rule;
}

}  // namespace

std::shared_ptr<const QuadratureRule> gauss_legendre(std::size_t n) {
  if (n == 0) throw ConfigError("gauss_legendre: node count must be positive");
  static std::mutex mu;
  static std::map<std::size_t, std::shared_ptr<const QuadratureRule>> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  auto rule = std::make_shared<const QuadratureRule>(build_rule(n));
  cache.emplace(n, rule);
  return rule;
}

}  // namespace shiftmoment
