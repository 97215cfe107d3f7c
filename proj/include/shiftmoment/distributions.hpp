#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "shiftmoment/points.hpp"
#include "shiftmoment/random.hpp"

namespace shiftmoment {

struct Uniform {};

/// Normal(mu, sigma) restricted to [lo, hi] ⊆ [0,1] and renormalized.
struct TruncatedNormal {
  double lo = 0.0;
  double hi = 1.0;
  double mu = 0.5;
  double sigma = 1.0;
};

/// p(x; a) = a x^3 + (-24/5 - 3a/2) x^2 + (a/2 + 24/5) x + 1/5 on [0,1].
struct PolyFamily {
  double a = 0.0;
};

/// Piecewise-linear density through `values` on a uniform grid over [0,1].
struct Tabulated {
  std::vector<double> values;
};

using DensityKind = std::variant<Uniform, TruncatedNormal, PolyFamily, Tabulated>;

/// One-dimensional density on [0,1] with the precomputed state its CDF and
/// quantile need.
class AxisDensity {
 public:
  explicit AxisDensity(DensityKind kind);

  const DensityKind& kind() const { return kind_; }

  double pdf(double x) const;
  double cdf(double x) const;
  double quantile(double u) const;

 private:
  DensityKind kind_;
  // TruncatedNormal
  double cdf_lo_ = 0.0;
  double mass_ = 1.0;
  // PolyFamily: monotone cubic inverse-CDF knots
  std::vector<double> knot_u_;
  std::vector<double> knot_x_;
  std::vector<double> knot_slope_;
  // Tabulated: renormalized values and cumulative mass at grid points
  std::vector<double> cum_;
};

/// Axis-product density on [0,1]^d. Immutable after construction.
class DensitySpec {
 public:
  static DensitySpec uniform(std::size_t dim = 1);
  static DensitySpec truncated_normal(double lo, double hi, double mu, double sigma);
  static DensitySpec poly_family(double a);
  static DensitySpec tabulated(std::vector<double> values);
  static DensitySpec product(const std::vector<DensitySpec>& factors);

  std::size_t dim() const { return axes_.size(); }
  const std::vector<AxisDensity>& axes() const { return axes_; }

  /// Density at x; throws DomainError outside [0,1]^d.
  double pdf(std::span<const double> x) const;
  double pdf(double x) const { return pdf(std::span<const double>(&x, 1)); }

  /// n i.i.d. draws by per-axis inverse CDF.
  PointSet sample(std::size_t n, Rng& rng) const;

 private:
  explicit DensitySpec(std::vector<AxisDensity> axes) : axes_(std::move(axes)) {}
  std::vector<AxisDensity> axes_;
};

/// A (source, target) pair. Both densities must share a dimension.
class SourceTargetPair {
 public:
  SourceTargetPair(DensitySpec source, DensitySpec target);

  const DensitySpec& source() const { return source_; }
  const DensitySpec& target() const { return target_; }

 private:
  DensitySpec source_;
  DensitySpec target_;
};

/// target.pdf(x) / source.pdf(x); DegeneratePairError if the source vanishes.
double likelihood_ratio(const SourceTargetPair& pair, std::span<const double> x);
inline double likelihood_ratio(const SourceTargetPair& pair, double x) {
  return likelihood_ratio(pair, std::span<const double>(&x, 1));
}

/// Grid size per axis used by the sup/inf searches.
inline constexpr std::size_t kExtremumGrid = 100000;

/// Diagnostic B: sup of the likelihood ratio over [0,1]^d. Grid search per
/// axis, then golden-section refinement around the grid argmax.
double sup_ratio(const SourceTargetPair& pair);

struct DensityBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Diagnostics (b_, b̄): inf and sup of the density by the same search.
DensityBounds density_bounds(const DensitySpec& spec);

/// P(w(X) > threshold) for X drawn from `measure_source ? source : target`,
/// by composite Gauss-Legendre quadrature. One-dimensional pairs only.
double exceedance_probability(const SourceTargetPair& pair, double threshold, bool measure_source = false);

nlohmann::json to_json(const DensitySpec& spec);
DensitySpec density_from_json(const nlohmann::json& j);

}  // namespace shiftmoment
