#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "shiftmoment/points.hpp"

namespace shiftmoment {

/// Unlabeled covariates S' = {x'_i} drawn from the target.
struct UnlabeledDataset {
  PointSet xs{1};
  std::size_t size() const { return xs.size(); }
};

inline constexpr double kPropensityClip = 1e-6;

struct PropensityOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double l2_penalty = 1e-6;
};

/// Logistic model of P(Z = 1 | x), Z = 1 for target membership, on
/// total-degree polynomial features with an intercept.
class PropensityModel {
 public:
  PropensityModel(std::size_t dim, int degree, std::vector<double> coefficients, std::size_t source_count,
                  std::size_t target_count, bool converged, int iterations);

  /// Clipped propensity e(x) in [1e-6, 1 - 1e-6].
  double propensity(std::span<const double> x) const;

  std::size_t dim() const { return dim_; }
  int degree() const { return degree_; }
  const std::vector<double>& coefficients() const { return coef_; }
  std::size_t source_count() const { return n_; }
  std::size_t target_count() const { return m_; }
  bool converged() const { return converged_; }
  int iterations() const { return iterations_; }

 private:
  std::size_t dim_;
  int degree_;
  std::vector<double> coef_;
  std::size_t n_;
  std::size_t m_;
  bool converged_;
  int iterations_;
  std::vector<std::vector<int>> exponents_;
};

/// Fits the source-vs-target classifier by damped Newton iterations on the
/// L2-penalized mean log-loss. Source rows are labeled 0, target rows 1.
/// Deterministic in its inputs, so it takes no random stream.
PropensityModel fit_propensity(const UnlabeledDataset& source_xs, const UnlabeledDataset& target_xs, int feature_degree,
                               const PropensityOptions& options = {});

/// w = e / (1 - e) * n / m after clipping e.
double ratio_from_propensity(double e, std::size_t source_count, std::size_t target_count);

/// Plug-in likelihood-ratio estimate at x.
double ratio_at(const PropensityModel& model, std::span<const double> x);
inline double ratio_at(const PropensityModel& model, double x) {
  return ratio_at(model, std::span<const double>(&x, 1));
}

/// min(w, threshold); threshold must be positive.
double truncate(double w, double threshold);

struct RateParameters {
  double n = 1.0;      // sample size
  double s = 1.0;      // smoothness
  double p = 2.0;      // integrability
  double q = 1.0;      // moment order
  double d = 1.0;      // dimension
};

/// r(n) = n^max{-q(s/d - 1/p) - 1, -1/2 - s/d}.
double theoretical_rate(const RateParameters& params);

/// Threshold rule T = r(n)^(-1/(alpha+1)) with unit constant.
double suggest_threshold(const RateParameters& params, double alpha);

nlohmann::json to_json(const PropensityModel& model);
PropensityModel propensity_from_json(const nlohmann::json& j);

}  // namespace shiftmoment
