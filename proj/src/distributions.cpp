#include "shiftmoment/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "shiftmoment/errors.hpp"
#include "shiftmoment/normal.hpp"
#include "shiftmoment/quadrature.hpp"

namespace shiftmoment {

namespace {

constexpr std::size_t kPolyKnots = 4096;
constexpr std::size_t kPolyPositivityGrid = 100000;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double poly_pdf(double a, double x) {
  const double c3 = a;
  const double c2 = -24.0 / 5.0 - 1.5 * a;
  const double c1 = 0.5 * a + 24.0 / 5.0;
  return ((c3 * x + c2) * x + c1) * x + 0.2;
}

double poly_cdf(double a, double x) {
  const double c3 = a;
  const double c2 = -24.0 / 5.0 - 1.5 * a;
  const double c1 = 0.5 * a + 24.0 / 5.0;
  return (((c3 / 4.0 * x + c2 / 3.0) * x + c1 / 2.0) * x + 0.2) * x;
}

double golden_section(const std::function<double(double)>& fn, double lo, double hi, bool maximize,
                      double tol = 1e-8) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double sign = maximize ? 1.0 : -1.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = sign * fn(c);
  double fd = sign * fn(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = sign * fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = sign * fn(d);
    }
  }
  const double x = 0.5 * (a + b);
  return fn(x);
}

// Grid search over [0,1] followed by golden-section refinement in the two
// cells adjacent to the grid extremum.
double extremum_on_unit(const std::function<double(double)>& fn, bool maximize) {
  const std::size_t n = kExtremumGrid;
  double best = maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(n - 1);
    const double v = fn(x);
    if (maximize ? v > best : v < best) {
      best = v;
      best_k = k;
    }
  }
  const double h = 1.0 / static_cast<double>(n - 1);
  const double lo = std::max(0.0, static_cast<double>(best_k) * h - h);
  const double hi = std::min(1.0, static_cast<double>(best_k) * h + h);
  const double refined = golden_section(fn, lo, hi, maximize);
  return maximize ? std::max(best, refined) : std::min(best, refined);
}

void validate(const TruncatedNormal& t) {
  if (!(t.lo < t.hi)) throw ConfigError("tnorm: requires lo < hi");
  if (!(t.sigma > 0.0)) throw ConfigError("tnorm: requires sigma > 0");
  if (t.lo < 0.0 || t.hi > 1.0) throw ConfigError("tnorm: [lo, hi] must lie inside [0, 1]");
  if (!std::isfinite(t.mu)) throw ConfigError("tnorm: mu must be finite");
}

}  // namespace

AxisDensity::AxisDensity(DensityKind kind) : kind_(std::move(kind)) {
  std::visit(overloaded{
                 [](const Uniform&) {},
                 [this](const TruncatedNormal& t) {
                   validate(t);
                   cdf_lo_ = normal::cdf((t.lo - t.mu) / t.sigma);
                   mass_ = normal::cdf((t.hi - t.mu) / t.sigma) - cdf_lo_;
                   if (!(mass_ > 0.0)) throw ConfigError("tnorm: interval carries no normal mass");
                 },
                 [this](const PolyFamily& p) {
                   if (!std::isfinite(p.a)) throw ConfigError("poly: a must be finite");
                   for (std::size_t k = 0; k < kPolyPositivityGrid; ++k) {
                     const double x = static_cast<double>(k) / static_cast<double>(kPolyPositivityGrid - 1);
                     if (!(poly_pdf(p.a, x) > 0.0)) throw ConfigError("poly: density not positive on [0,1]");
                   }
                   const std::size_t n = kPolyKnots + 1;
                   knot_u_.resize(n);
                   knot_x_.resize(n);
                   knot_slope_.resize(n);
                   for (std::size_t k = 0; k < n; ++k) {
                     const double x = static_cast<double>(k) / static_cast<double>(kPolyKnots);
                     knot_x_[k] = x;
                     knot_u_[k] = poly_cdf(p.a, x);
                     knot_slope_[k] = 1.0 / poly_pdf(p.a, x);
                   }
                   knot_u_.front() = 0.0;
                   knot_u_.back() = 1.0;
                   // Fritsch-Carlson limiter keeps the Hermite inverse monotone.
                   for (std::size_t k = 0; k + 1 < n; ++k) {
                     const double delta = (knot_x_[k + 1] - knot_x_[k]) / (knot_u_[k + 1] - knot_u_[k]);
                     const double al = knot_slope_[k] / delta;
                     const double be = knot_slope_[k + 1] / delta;
                     const double s = al * al + be * be;
                     if (s > 9.0) {
                       const double tau = 3.0 / std::sqrt(s);
                       knot_slope_[k] = tau * al * delta;
                       knot_slope_[k + 1] = tau * be * delta;
                     }
                   }
                 },
                 [this](Tabulated& t) {
                   if (t.values.size() < 2) throw ConfigError("tabulated: need at least two grid values");
                   for (double v : t.values) {
                     if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("tabulated: values must be finite and >= 0");
                   }
                   const double h = 1.0 / static_cast<double>(t.values.size() - 1);
                   double total = 0.0;
                   for (std::size_t k = 0; k + 1 < t.values.size(); ++k) total += 0.5 * h * (t.values[k] + t.values[k + 1]);
                   if (!(total > 0.0)) throw ConfigError("tabulated: zero total mass");
                   for (double& v : t.values) v /= total;
                   cum_.assign(t.values.size(), 0.0);
                   for (std::size_t k = 0; k + 1 < t.values.size(); ++k) {
                     cum_[k + 1] = cum_[k] + 0.5 * h * (t.values[k] + t.values[k + 1]);
                   }
                 },
             },
             kind_);
}

double AxisDensity::pdf(double x) const {
  return std::visit(overloaded{
                        [](const Uniform&) { return 1.0; },
                        [this, x](const TruncatedNormal& t) {
                          if (x < t.lo || x > t.hi) return 0.0;
                          return normal::pdf((x - t.mu) / t.sigma) / (t.sigma * mass_);
                        },
                        [x](const PolyFamily& p) { return poly_pdf(p.a, x); },
                        [x](const Tabulated& t) {
                          const double pos = x * static_cast<double>(t.values.size() - 1);
                          const auto k = std::min(static_cast<std::size_t>(pos), t.values.size() - 2);
                          const double frac = pos - static_cast<double>(k);
                          return t.values[k] + frac * (t.values[k + 1] - t.values[k]);
                        },
                    },
                    kind_);
}

double AxisDensity::cdf(double x) const {
  x = std::clamp(x, 0.0, 1.0);
  return std::visit(overloaded{
                        [x](const Uniform&) { return x; },
                        [this, x](const TruncatedNormal& t) {
                          if (x <= t.lo) return 0.0;
                          if (x >= t.hi) return 1.0;
                          return (normal::cdf((x - t.mu) / t.sigma) - cdf_lo_) / mass_;
                        },
                        [x](const PolyFamily& p) { return poly_cdf(p.a, x); },
                        [this, x](const Tabulated& t) {
                          const double h = 1.0 / static_cast<double>(t.values.size() - 1);
                          const double pos = x / h;
                          const auto k = std::min(static_cast<std::size_t>(pos), t.values.size() - 2);
                          const double s = x - static_cast<double>(k) * h;
                          const double slope = (t.values[k + 1] - t.values[k]) / h;
                          return cum_[k] + t.values[k] * s + 0.5 * slope * s * s;
                        },
                    },
                    kind_);
}

double AxisDensity::quantile(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  return std::visit(overloaded{
                        [u](const Uniform&) { return u; },
                        [this, u](const TruncatedNormal& t) {
                          const double z = normal::quantile(cdf_lo_ + u * mass_);
                          return std::clamp(t.mu + t.sigma * z, t.lo, t.hi);
                        },
                        [this, u](const PolyFamily&) {
                          auto it = std::upper_bound(knot_u_.begin(), knot_u_.end(), u);
                          std::size_t k = it == knot_u_.begin() ? 0 : static_cast<std::size_t>(it - knot_u_.begin()) - 1;
                          k = std::min(k, knot_u_.size() - 2);
                          const double du = knot_u_[k + 1] - knot_u_[k];
                          const double s = (u - knot_u_[k]) / du;
                          const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
                          const double h10 = s * (1.0 - s) * (1.0 - s);
                          const double h01 = s * s * (3.0 - 2.0 * s);
                          const double h11 = s * s * (s - 1.0);
                          const double x = h00 * knot_x_[k] + h10 * du * knot_slope_[k] + h01 * knot_x_[k + 1] +
                                           h11 * du * knot_slope_[k + 1];
                          return std::clamp(x, 0.0, 1.0);
                        },
                        [this, u](const Tabulated& t) {
                          auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
                          std::size_t k = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
                          k = std::min(k, cum_.size() - 2);
                          const double h = 1.0 / static_cast<double>(t.values.size() - 1);
                          const double v0 = t.values[k];
                          const double slope = (t.values[k + 1] - v0) / h;
                          const double r = u - cum_[k];
                          // solve v0 s + slope s^2 / 2 = r for s in [0, h]
                          double s;
                          if (std::abs(slope) < 1e-14) {
                            s = v0 > 0.0 ? r / v0 : 0.0;
                          } else {
                            const double disc = std::max(0.0, v0 * v0 + 2.0 * slope * r);
                            s = 2.0 * r / (v0 + std::sqrt(disc));
                          }
                          return std::clamp(static_cast<double>(k) * h + std::clamp(s, 0.0, h), 0.0, 1.0);
                        },
                    },
                    kind_);
}

DensitySpec DensitySpec::uniform(std::size_t dim) {
  if (dim == 0) throw ConfigError("uniform: dim must be positive");
  return DensitySpec(std::vector<AxisDensity>(dim, AxisDensity(Uniform{})));
}

DensitySpec DensitySpec::truncated_normal(double lo, double hi, double mu, double sigma) {
  return DensitySpec({AxisDensity(TruncatedNormal{lo, hi, mu, sigma})});
}

DensitySpec DensitySpec::poly_family(double a) { return DensitySpec({AxisDensity(PolyFamily{a})}); }

DensitySpec DensitySpec::tabulated(std::vector<double> values) {
  return DensitySpec({AxisDensity(Tabulated{std::move(values)})});
}

DensitySpec DensitySpec::product(const std::vector<DensitySpec>& factors) {
  if (factors.empty()) throw ConfigError("product: no factors");
  std::vector<AxisDensity> axes;
  for (const auto& f : factors) axes.insert(axes.end(), f.axes_.begin(), f.axes_.end());
  return DensitySpec(std::move(axes));
}

double DensitySpec::pdf(std::span<const double> x) const {
  if (x.size() != axes_.size()) throw DomainError("pdf: point dimension does not match density");
  require_in_unit_cube(x, "pdf");
  double p = 1.0;
  for (std::size_t j = 0; j < axes_.size(); ++j) p *= axes_[j].pdf(x[j]);
  return p;
}

PointSet DensitySpec::sample(std::size_t n, Rng& rng) const {
  PointSet out(axes_.size());
  out.reserve(n);
  std::vector<double> x(axes_.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < axes_.size(); ++j) x[j] = axes_[j].quantile(rng.uniform());
    out.push_back(x);
  }
  return out;
}

SourceTargetPair::SourceTargetPair(DensitySpec source, DensitySpec target)
    : source_(std::move(source)), target_(std::move(target)) {
  if (source_.dim() != target_.dim()) throw ConfigError("pair: source and target dimensions differ");
}

double likelihood_ratio(const SourceTargetPair& pair, std::span<const double> x) {
  const double s = pair.source().pdf(x);
  if (!(s > 0.0)) throw DegeneratePairError("likelihood_ratio: source density is zero at query point");
  return pair.target().pdf(x) / s;
}

double sup_ratio(const SourceTargetPair& pair) {
  // The ratio of axis products factorizes, so the sup is the product of the
  // per-axis sups.
  double b = 1.0;
  for (std::size_t j = 0; j < pair.source().dim(); ++j) {
    const auto& s = pair.source().axes()[j];
    const auto& t = pair.target().axes()[j];
    auto ratio = [&](double x) {
      const double ps = s.pdf(x);
      if (!(ps > 0.0)) throw DegeneratePairError("sup_ratio: source density vanishes on the grid");
      return t.pdf(x) / ps;
    };
    b *= extremum_on_unit(ratio, true);
  }
  return b;
}

DensityBounds density_bounds(const DensitySpec& spec) {
  DensityBounds out{1.0, 1.0};
  for (const auto& axis : spec.axes()) {
    auto fn = [&](double x) { return axis.pdf(x); };
    out.lower *= extremum_on_unit(fn, false);
    out.upper *= extremum_on_unit(fn, true);
  }
  return out;
}

double exceedance_probability(const SourceTargetPair& pair, double threshold, bool measure_source) {
  if (pair.source().dim() != 1) throw ConfigError("exceedance_probability: one-dimensional pairs only");
  const auto& s = pair.source().axes()[0];
  const auto& t = pair.target().axes()[0];
  auto excess = [&](double x) { return t.pdf(x) / s.pdf(x) - threshold; };
  const auto& measure = measure_source ? s : t;

  // Bracket sign changes of w - T on a fine grid, bisect each crossing, then
  // integrate the measure over the segments where w > T.
  const std::size_t n = 20000;
  std::vector<double> cuts{0.0};
  double prev = excess(0.0);
  for (std::size_t k = 1; k < n; ++k) {
    const double x = static_cast<double>(k) / static_cast<double>(n - 1);
    const double cur = excess(x);
    if ((prev > 0.0) != (cur > 0.0)) {
      double a = static_cast<double>(k - 1) / static_cast<double>(n - 1);
      double b = x;
      const bool a_pos = prev > 0.0;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (a + b);
        if ((excess(mid) > 0.0) == a_pos) a = mid;
        else b = mid;
      }
      cuts.push_back(0.5 * (a + b));
    }
    prev = cur;
  }
  cuts.push_back(1.0);

  double p = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = cuts[i];
    const double b = cuts[i + 1];
    if (!(b > a)) continue;
    if (excess(0.5 * (a + b)) > 0.0) {
      p += integrate_composite([&](double x) { return measure.pdf(x); }, a, b, 64, 16);
    }
  }
  return p;
}

nlohmann::json to_json(const DensitySpec& spec) {
  auto axis_json = [](const AxisDensity& a) {
    return std::visit(overloaded{
                          [](const Uniform&) { return nlohmann::json{{"kind", "uniform"}}; },
                          [](const TruncatedNormal& t) {
                            return nlohmann::json{{"kind", "tnorm"}, {"lo", t.lo}, {"hi", t.hi}, {"mu", t.mu}, {"sigma", t.sigma}};
                          },
                          [](const PolyFamily& p) { return nlohmann::json{{"kind", "poly"}, {"a", p.a}}; },
                          [](const Tabulated& t) { return nlohmann::json{{"kind", "tabulated"}, {"values", t.values}}; },
                      },
                      a.kind());
  };
  if (spec.dim() == 1) return axis_json(spec.axes()[0]);
  bool all_uniform = std::all_of(spec.axes().begin(), spec.axes().end(),
                                 [](const AxisDensity& a) { return std::holds_alternative<Uniform>(a.kind()); });
  if (all_uniform) return {{"kind", "uniform"}, {"dim", spec.dim()}};
  nlohmann::json axes = nlohmann::json::array();
  for (const auto& a : spec.axes()) axes.push_back(axis_json(a));
  return {{"kind", "product"}, {"axes", axes}};
}

DensitySpec density_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("density: missing field 'kind'");
  auto num = [&](const char* field) {
    if (!j.contains(field) || !j.at(field).is_number()) throw ConfigError(std::string("density: missing numeric field '") + field + "'");
    return j.at(field).get<double>();
  };
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "uniform") {
    const std::size_t dim = j.contains("dim") ? j.at("dim").get<std::size_t>() : 1;
    return DensitySpec::uniform(dim);
  }
  if (kind == "tnorm") {
    const double lo = j.contains("lo") ? num("lo") : 0.0;
    const double hi = j.contains("hi") ? num("hi") : 1.0;
    return DensitySpec::truncated_normal(lo, hi, num("mu"), num("sigma"));
  }
  if (kind == "poly") return DensitySpec::poly_family(num("a"));
  if (kind == "tabulated") {
    if (!j.contains("values") || !j.at("values").is_array()) throw ConfigError("density: missing array field 'values'");
    return DensitySpec::tabulated(j.at("values").get<std::vector<double>>());
  }
  if (kind == "product") {
    if (!j.contains("axes") || !j.at("axes").is_array()) throw ConfigError("density: missing array field 'axes'");
    std::vector<DensitySpec> factors;
    for (const auto& a : j.at("axes")) factors.push_back(density_from_json(a));
    return DensitySpec::product(factors);
  }
  throw ConfigError("density: unknown kind '" + kind + "'");
}

}  // namespace shiftmoment
