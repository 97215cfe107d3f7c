#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "shiftmoment/distributions.hpp"
#include "shiftmoment/random.hpp"
#include "shiftmoment/ratio_estimation.hpp"
#include "shiftmoment/regressors.hpp"

namespace shiftmoment {

struct QuadratureIntegration {
  std::size_t nodes = 256;
};

struct MonteCarloIntegration {
  std::size_t draws = 100000;
};

using TargetIntegration = std::variant<QuadratureIntegration, MonteCarloIntegration>;

/// 256-node quadrature for d = 1, 10^5 target draws otherwise.
TargetIntegration default_integration(std::size_t dim);

struct EstimatorConfig {
  int q = 2;
  double split_fraction = 0.5;
  /// Truncation threshold T; empty means no truncation.
  std::optional<double> threshold;
  TargetIntegration target_integration = QuadratureIntegration{};
  RegressorSpec regressor = ForestSpec{};

  void validate() const;
};

enum class EstimatorKind { MonteCarlo, OneStage, TwoStage, TwoStageTruncated, PlugIn };

std::string to_string(EstimatorKind kind);

struct MomentDiagnostics {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  /// Share of S2 points whose weight exceeds the threshold.
  double truncation_fraction = 0.0;
  std::optional<double> threshold_used;
  double first_stage_term = 0.0;
  double calibration_term = 0.0;
};

struct MomentEstimate {
  EstimatorKind kind = EstimatorKind::TwoStage;
  double value = 0.0;
  MomentDiagnostics diagnostics;
};

nlohmann::json to_json(const MomentEstimate& e);

/// Trains the first-stage model on a subsample. The default is fit() with
/// the config's RegressorSpec; tests inject exact or degenerate models here.
using FirstStageFitter = std::function<FittedRegressor(const LabeledDataset&, Rng&)>;

FirstStageFitter spec_fitter(const RegressorSpec& spec);

/// Likelihood-ratio weight used in the calibration term.
using WeightFunction = std::function<double(std::span<const double>)>;

struct SplitResult {
  LabeledDataset first;   // S1, trains the model
  LabeledDataset second;  // S2, calibrates
};

/// Uniformly random partition with |S1| = round(fraction * n).
SplitResult split(const LabeledDataset& data, double fraction, Rng& rng);

/// Target expectation of model(x)^q by Gauss-Legendre quadrature against the
/// target pdf, or by averaging over target draws.
double target_moment_of_model(const FittedRegressor& model, const DensitySpec& target, int q,
                              const TargetIntegration& method, Rng& rng);

/// (1/n) sum w_i y_i^q.
MomentEstimate estimate_mc(const LabeledDataset& data, std::span<const double> weights, int q);

/// Fit on all of S; report the target moment of the fitted model.
MomentEstimate estimate_one_stage(const LabeledDataset& data, const DensitySpec& target, const EstimatorConfig& config,
                                  Rng& rng);
MomentEstimate estimate_one_stage(const LabeledDataset& data, const DensitySpec& target, const EstimatorConfig& config,
                                  const FirstStageFitter& fitter, Rng& rng);

/// Two-stage calibrated estimator with the known ratio; truncated when the
/// config carries a threshold.
MomentEstimate estimate_two_stage_known(const LabeledDataset& data, const SourceTargetPair& pair,
                                        const EstimatorConfig& config, Rng& rng);
MomentEstimate estimate_two_stage_known(const LabeledDataset& data, const SourceTargetPair& pair,
                                        const EstimatorConfig& config, const FirstStageFitter& fitter, Rng& rng);

/// Doubly-robust plug-in estimator: unlabeled target average of the model
/// plus truncated estimated-ratio calibration. Requires a threshold.
MomentEstimate estimate_two_stage_plugin(const LabeledDataset& labeled, const UnlabeledDataset& unlabeled,
                                         const EstimatorConfig& config, const PropensityModel& ratio_model, Rng& rng);
MomentEstimate estimate_two_stage_plugin(const LabeledDataset& labeled, const UnlabeledDataset& unlabeled,
                                         const EstimatorConfig& config, const WeightFunction& weight,
                                         const FirstStageFitter& fitter, Rng& rng);

/// Integer power by repeated multiplication.
inline double ipow(double x, int q) {
  double r = 1.0;
  for (int k = 0; k < q; ++k) r *= x;
  return r;
}

}  // namespace shiftmoment
