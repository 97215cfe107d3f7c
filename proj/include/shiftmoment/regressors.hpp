#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "shiftmoment/points.hpp"
#include "shiftmoment/random.hpp"

namespace shiftmoment {

/// Labeled sample S = {(x_i, y_i)} drawn from the source.
struct LabeledDataset {
  PointSet xs{1};
  std::vector<double> ys;

  std::size_t size() const { return ys.size(); }
  std::size_t dim() const { return xs.dim(); }

  /// Throws if lengths disagree or any point leaves [0,1]^d.
  void validate() const;

  LabeledDataset subset(std::span<const std::size_t> idx) const;
};

inline constexpr int kMaxPolynomialDegree = 6;

struct LinearSpec {
  int degree = 1;
};

struct MlsSpec {
  int degree = 2;
  double bandwidth_factor = 2.5;
};

struct ForestSpec {
  int trees = 200;
  int min_leaf = 5;
};

using RegressorSpec = std::variant<LinearSpec, MlsSpec, ForestSpec>;

void validate(const RegressorSpec& spec);
std::string regressor_label(const RegressorSpec& spec);
nlohmann::json to_json(const RegressorSpec& spec);
RegressorSpec regressor_from_json(const nlohmann::json& j);

struct RegressorDiagnostics {
  std::size_t training_size = 0;
  /// Linear: normal equations were singular and the minimum-norm solution was used.
  bool rank_deficient = false;
  /// MLS only.
  double covering_radius = 0.0;
  double bandwidth = 0.0;
};

/// Interface behind FittedRegressor. Implementations are immutable after
/// construction and predict() is reentrant.
class RegressionModel {
 public:
  virtual ~RegressionModel() = default;
  virtual double predict(std::span<const double> x) const = 0;
  virtual RegressorDiagnostics diagnostics() const = 0;
  /// Number of predictions that had to widen their support (MLS).
  virtual std::size_t widened_predictions() const { return 0; }
};

/// A trained point-prediction model over [0,1]^d. Cheap to copy; copies share
/// the fitted state.
class FittedRegressor {
 public:
  explicit FittedRegressor(std::shared_ptr<const RegressionModel> model) : model_(std::move(model)) {}

  /// Wraps an arbitrary function, e.g. a known oracle or a forced constant.
  static FittedRegressor from_function(std::function<double(std::span<const double>)> fn, std::size_t training_size = 0);

  double predict(std::span<const double> x) const;
  double predict(double x) const { return predict(std::span<const double>(&x, 1)); }

  RegressorDiagnostics diagnostics() const { return model_->diagnostics(); }
  std::size_t widened_predictions() const { return model_->widened_predictions(); }
  const RegressionModel& model() const { return *model_; }

 private:
  std::shared_ptr<const RegressionModel> model_;
};

/// Trains the model described by `spec`. The random stream is consumed by the
/// forest (bootstrap draws) and ignored by the deterministic fits.
FittedRegressor fit(const RegressorSpec& spec, const LabeledDataset& data, Rng& rng);

/// Largest distance from a probe-grid point of [0,1]^d to its nearest data
/// point. probe_grid_size = 0 picks the default (2048 per axis for d = 1).
double covering_radius(const PointSet& points, std::size_t probe_grid_size = 0);

/// Wendland-type compactly supported weight (1 - r)^4_+ (4r + 1) for r = dist/h.
double wendland_weight(double r);

/// Exponent tuples of a polynomial basis in `dim` variables: every monomial of
/// total degree <= degree, or (tensor) every per-axis degree <= degree.
std::vector<std::vector<int>> monomial_exponents(std::size_t dim, int degree, bool tensor);

/// Evaluates the monomials in `exponents` at x into `out`.
void eval_monomials(const std::vector<std::vector<int>>& exponents, std::span<const double> x, std::span<double> out);

}  // namespace shiftmoment
