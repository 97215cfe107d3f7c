#include "shiftmoment/ratio_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "shiftmoment/errors.hpp"
#include "shiftmoment/regressors.hpp"

namespace shiftmoment {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// log(1 + exp(t)) without overflow
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

}  // namespace

PropensityModel::PropensityModel(std::size_t dim, int degree, std::vector<double> coefficients, std::size_t source_count,
                                 std::size_t target_count, bool converged, int iterations)
    : dim_(dim),
      degree_(degree),
      coef_(std::move(coefficients)),
      n_(source_count),
      m_(target_count),
      converged_(converged),
      iterations_(iterations),
      exponents_(monomial_exponents(dim, degree, false)) {
  if (coef_.size() != exponents_.size()) throw ConfigError("propensity: coefficient count does not match degree");
  if (n_ == 0 || m_ == 0) throw ConfigError("propensity: sample counts must be positive");
}

double PropensityModel::propensity(std::span<const double> x) const {
  std::vector<double> row(exponents_.size());
  eval_monomials(exponents_, x, row);
  double t = 0.0;
  for (std::size_t k = 0; k < row.size(); ++k) t += coef_[k] * row[k];
  return std::clamp(sigmoid(t), kPropensityClip, 1.0 - kPropensityClip);
}

PropensityModel fit_propensity(const UnlabeledDataset& source_xs, const UnlabeledDataset& target_xs, int feature_degree,
                               const PropensityOptions& options) {
  if (source_xs.size() == 0 || target_xs.size() == 0) throw ConfigError("fit_propensity: both samples must be nonempty");
  if (source_xs.xs.dim() != target_xs.xs.dim()) throw ConfigError("fit_propensity: dimension mismatch");
  if (feature_degree < 0 || feature_degree > kMaxPolynomialDegree) throw ConfigError("fit_propensity: degree must be in [0, 6]");

  const std::size_t dim = source_xs.xs.dim();
  const auto exps = monomial_exponents(dim, feature_degree, false);
  const auto n = static_cast<Eigen::Index>(source_xs.size());
  const auto m = static_cast<Eigen::Index>(target_xs.size());
  const auto p = static_cast<Eigen::Index>(exps.size());

  Eigen::MatrixXd X(n + m, p);
  Eigen::VectorXd z(n + m);
  std::vector<double> row(exps.size());
  for (Eigen::Index i = 0; i < n + m; ++i) {
    const bool target = i >= n;
    const auto x = target ? target_xs.xs[static_cast<std::size_t>(i - n)] : source_xs.xs[static_cast<std::size_t>(i)];
    eval_monomials(exps, x, row);
    for (Eigen::Index k = 0; k < p; ++k) X(i, k) = row[static_cast<std::size_t>(k)];
    z(i) = target ? 1.0 : 0.0;
  }

  const double total = static_cast<double>(n + m);
  const double lambda = options.l2_penalty;
  Eigen::VectorXd penalty_mask = Eigen::VectorXd::Ones(p);
  penalty_mask(0) = 0.0;  // intercept unpenalized

  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) loss += softplus(eta(i)) - z(i) * eta(i);
    return loss / total + 0.5 * lambda * beta.cwiseProduct(penalty_mask).squaredNorm();
  };

  // start from the intercept matching the class balance
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  beta(0) = std::log(static_cast<double>(m) / static_cast<double>(n));
  double f = objective(beta);
  Eigen::VectorXd best = beta;
  double best_grad = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu(eta.size());
    Eigen::VectorXd wts(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu(i) = sigmoid(eta(i));
      wts(i) = mu(i) * (1.0 - mu(i));
    }
    Eigen::VectorXd grad = X.transpose() * (mu - z) / total + lambda * beta.cwiseProduct(penalty_mask);
    const double gnorm = grad.norm();
    if (gnorm < best_grad) {
      best_grad = gnorm;
      best = beta;
    }
    if (gnorm < options.gradient_tolerance) {
      converged = true;
      break;
    }
    Eigen::MatrixXd hess = X.transpose() * wts.asDiagonal() * X / total;
    for (Eigen::Index k = 0; k < p; ++k) hess(k, k) += lambda * penalty_mask(k) + 1e-12;
    const Eigen::VectorXd step = hess.ldlt().solve(grad);

    // backtracking on the objective
    double t = 1.0;
    Eigen::VectorXd next = beta - step;
    double fn = objective(next);
    while (!(fn <= f) && t > 1e-10) {
      t *= 0.5;
      next = beta - t * step;
      fn = objective(next);
    }
    if (!(fn <= f)) break;  // no descent possible; keep best iterate
    beta = next;
    f = fn;
  }
  if (!converged) beta = best;
  return PropensityModel(dim, feature_degree, std::vector<double>(beta.data(), beta.data() + beta.size()),
                         static_cast<std::size_t>(n), static_cast<std::size_t>(m), converged, it);
}

double ratio_from_propensity(double e, std::size_t source_count, std::size_t target_count) {
  e = std::clamp(e, kPropensityClip, 1.0 - kPropensityClip);
  return e / (1.0 - e) * (static_cast<double>(source_count) / static_cast<double>(target_count));
}

double ratio_at(const PropensityModel& model, std::span<const double> x) {
  return ratio_from_propensity(model.propensity(x), model.source_count(), model.target_count());
}

double truncate(double w, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("truncate: threshold must be positive");
  return std::min(w, threshold);
}

double theoretical_rate(const RateParameters& r) {
  if (!(r.n >= 1.0 && r.s > 0.0 && r.p > 0.0 && r.q > 0.0 && r.d > 0.0)) {
    throw ConfigError("theoretical_rate: parameters must be positive and n >= 1");
  }
  const double exponent = std::max(-r.q * (r.s / r.d - 1.0 / r.p) - 1.0, -0.5 - r.s / r.d);
  return std::pow(r.n, exponent);
}

double suggest_threshold(const RateParameters& params, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("suggest_threshold: alpha must be positive");
  return std::pow(theoretical_rate(params), -1.0 / (alpha + 1.0));
}

nlohmann::json to_json(const PropensityModel& model) {
  return {{"dim", model.dim()},
          {"degree", model.degree()},
          {"coefficients", model.coefficients()},
          {"n", model.source_count()},
          {"m", model.target_count()},
          {"converged", model.converged()},
          {"iterations", model.iterations()}};
}

PropensityModel propensity_from_json(const nlohmann::json& j) {
  for (const char* f : {"degree", "coefficients", "n", "m"}) {
    if (!j.contains(f)) throw ConfigError(std::string("propensity: missing field '") + f + "'");
  }
  return PropensityModel(j.value("dim", std::size_t{1}), j.at("degree").get<int>(),
                         j.at("coefficients").get<std::vector<double>>(), j.at("n").get<std::size_t>(),
                         j.at("m").get<std::size_t>(), j.value("converged", true), j.value("iterations", 0));
}

}  // namespace shiftmoment
