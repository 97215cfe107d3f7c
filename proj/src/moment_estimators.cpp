#include "shiftmoment/moment_estimators.hpp"

#include <cmath>
#include <numeric>

#include "shiftmoment/errors.hpp"
#include "shiftmoment/quadrature.hpp"

namespace shiftmoment {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct Calibration {
  double term = 0.0;
  double truncation_fraction = 0.0;
};

// (1/|S2|) sum tau(w(x_i)) (y_i^q - fhat(x_i)^q)
Calibration calibrate(const LabeledDataset& s2, const FittedRegressor& model, const WeightFunction& weight, int q,
                      const std::optional<double>& threshold) {
  double acc = 0.0;
  std::size_t above = 0;
  for (std::size_t i = 0; i < s2.size(); ++i) {
    const auto x = s2.xs[i];
    double w = weight(x);
    if (threshold) {
      if (w > *threshold) ++above;
      w = truncate(w, *threshold);
    }
    acc += w * (ipow(s2.ys[i], q) - ipow(model.predict(x), q));
  }
  const double n2 = static_cast<double>(s2.size());
  return {acc / n2, static_cast<double>(above) / n2};
}

}  // namespace

TargetIntegration default_integration(std::size_t dim) {
  if (dim == 1) return QuadratureIntegration{256};
  return MonteCarloIntegration{100000};
}

void EstimatorConfig::validate() const {
  if (q < 1) throw ConfigError("q must be >= 1");
  if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split_fraction must be in (0, 1)");
  if (threshold && !(*threshold > 0.0)) throw ConfigError("threshold must be positive");
  std::visit(overloaded{
                 [](const QuadratureIntegration& m) {
                   if (m.nodes < 16) throw ConfigError("target_integration.nodes must be >= 16");
                 },
                 [](const MonteCarloIntegration& m) {
                   if (m.draws < 1) throw ConfigError("target_integration.draws must be >= 1");
                 },
             },
             target_integration);
  shiftmoment::validate(regressor);
}

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::MonteCarlo: return "mc";
    case EstimatorKind::OneStage: return "one_stage";
    case EstimatorKind::TwoStage: return "two_stage";
    case EstimatorKind::TwoStageTruncated: return "two_stage_trunc";
    case EstimatorKind::PlugIn: return "plugin";
  }
  return "unknown";
}

nlohmann::json to_json(const MomentEstimate& e) {
  const auto& d = e.diagnostics;
  nlohmann::json diag = {{"n1", d.n1},
                         {"n2", d.n2},
                         {"truncation_fraction", d.truncation_fraction},
                         {"threshold_used", d.threshold_used ? nlohmann::json(*d.threshold_used) : nlohmann::json(nullptr)},
                         {"first_stage_term", d.first_stage_term},
                         {"calibration_term", d.calibration_term}};
  return {{"kind", to_string(e.kind)}, {"value", e.value}, {"diagnostics", diag}};
}

FirstStageFitter spec_fitter(const RegressorSpec& spec) {
  return [spec](const LabeledDataset& data, Rng& rng) { return fit(spec, data, rng); };
}

SplitResult split(const LabeledDataset& data, double fraction, Rng& rng) {
  const std::size_t n = data.size();
  if (n < 2) throw ConfigError("split: need at least 2 labeled points");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split: fraction must be in (0, 1)");
  const auto n1 = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n1 == 0 || n1 >= n) throw ConfigError("split: fraction leaves one side empty");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm.begin(), perm.end(), rng);
  const std::span<const std::size_t> all(perm);
  return {data.subset(all.first(n1)), data.subset(all.subspan(n1))};
}

double target_moment_of_model(const FittedRegressor& model, const DensitySpec& target, int q,
                              const TargetIntegration& method, Rng& rng) {
  return std::visit(
      overloaded{
          [&](const QuadratureIntegration& m) {
            const auto rule = gauss_legendre(m.nodes);
            const std::size_t d = target.dim();
            std::size_t total = 1;
            for (std::size_t j = 0; j < d; ++j) total *= m.nodes;
            std::vector<double> x(d);
            double acc = 0.0;
            for (std::size_t flat = 0; flat < total; ++flat) {
              std::size_t rem = flat;
              double w = 1.0;
              for (std::size_t j = 0; j < d; ++j) {
                const std::size_t k = rem % m.nodes;
                rem /= m.nodes;
                x[j] = rule->nodes[k];
                w *= rule->weights[k];
              }
              acc += w * ipow(model.predict(x), q) * target.pdf(x);
            }
            return acc;
          },
          [&](const MonteCarloIntegration& m) {
            const auto xs = target.sample(m.draws, rng);
            double acc = 0.0;
            for (std::size_t i = 0; i < xs.size(); ++i) acc += ipow(model.predict(xs[i]), q);
            return acc / static_cast<double>(xs.size());
          },
      },
      method);
}

MomentEstimate estimate_mc(const LabeledDataset& data, std::span<const double> weights, int q) {
  if (weights.size() != data.size()) throw ConfigError("estimate_mc: weights and data differ in length");
  if (data.size() == 0) throw ConfigError("estimate_mc: empty data");
  if (q < 1) throw ConfigError("q must be >= 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw ConfigError("estimate_mc: weights must be nonnegative");
    acc += weights[i] * ipow(data.ys[i], q);
  }
  MomentEstimate out;
  out.kind = EstimatorKind::MonteCarlo;
  out.value = acc / static_cast<double>(data.size());
  out.diagnostics.n2 = data.size();
  out.diagnostics.calibration_term = out.value;
  return out;
}

MomentEstimate estimate_one_stage(const LabeledDataset& data, const DensitySpec& target, const EstimatorConfig& config,
                                  Rng& rng) {
  return estimate_one_stage(data, target, config, spec_fitter(config.regressor), rng);
}

MomentEstimate estimate_one_stage(const LabeledDataset& data, const DensitySpec& target, const EstimatorConfig& config,
                                  const FirstStageFitter& fitter, Rng& rng) {
  config.validate();
  if (data.size() == 0) throw ConfigError("estimate_one_stage: empty data");
  const auto model = fitter(data, rng);
  MomentEstimate out;
  out.kind = EstimatorKind::OneStage;
  out.diagnostics.n1 = data.size();
  out.diagnostics.first_stage_term = target_moment_of_model(model, target, config.q, config.target_integration, rng);
  out.value = out.diagnostics.first_stage_term;
  return out;
}

MomentEstimate estimate_two_stage_known(const LabeledDataset& data, const SourceTargetPair& pair,
                                        const EstimatorConfig& config, Rng& rng) {
  return estimate_two_stage_known(data, pair, config, spec_fitter(config.regressor), rng);
}

MomentEstimate estimate_two_stage_known(const LabeledDataset& data, const SourceTargetPair& pair,
                                        const EstimatorConfig& config, const FirstStageFitter& fitter, Rng& rng) {
  config.validate();
  data.validate();
  auto [s1, s2] = split(data, config.split_fraction, rng);
  const auto model = fitter(s1, rng);
  const WeightFunction weight = [&pair](std::span<const double> x) { return likelihood_ratio(pair, x); };

  MomentEstimate out;
  out.kind = config.threshold ? EstimatorKind::TwoStageTruncated : EstimatorKind::TwoStage;
  auto& d = out.diagnostics;
  d.n1 = s1.size();
  d.n2 = s2.size();
  d.threshold_used = config.threshold;
  d.first_stage_term = target_moment_of_model(model, pair.target(), config.q, config.target_integration, rng);
  const auto cal = calibrate(s2, model, weight, config.q, config.threshold);
  d.calibration_term = cal.term;
  d.truncation_fraction = cal.truncation_fraction;
  out.value = d.first_stage_term + d.calibration_term;
  return out;
}

MomentEstimate estimate_two_stage_plugin(const LabeledDataset& labeled, const UnlabeledDataset& unlabeled,
                                         const EstimatorConfig& config, const PropensityModel& ratio_model, Rng& rng) {
  const WeightFunction weight = [&ratio_model](std::span<const double> x) { return ratio_at(ratio_model, x); };
  return estimate_two_stage_plugin(labeled, unlabeled, config, weight, spec_fitter(config.regressor), rng);
}

MomentEstimate estimate_two_stage_plugin(const LabeledDataset& labeled, const UnlabeledDataset& unlabeled,
                                         const EstimatorConfig& config, const WeightFunction& weight,
                                         const FirstStageFitter& fitter, Rng& rng) {
  config.validate();
  if (!config.threshold) throw ConfigError("threshold: the plug-in estimator requires a truncation threshold");
  if (unlabeled.size() == 0) throw ConfigError("estimate_two_stage_plugin: unlabeled sample is empty");
  if (unlabeled.xs.dim() != labeled.dim()) throw ConfigError("estimate_two_stage_plugin: dimension mismatch");
  labeled.validate();
  auto [s1, s2] = split(labeled, config.split_fraction, rng);
  const auto model = fitter(s1, rng);

  MomentEstimate out;
  out.kind = EstimatorKind::PlugIn;
  auto& d = out.diagnostics;
  d.n1 = s1.size();
  d.n2 = s2.size();
  d.threshold_used = config.threshold;
  double acc = 0.0;
  for (std::size_t i = 0; i < unlabeled.size(); ++i) acc += ipow(model.predict(unlabeled.xs[i]), config.q);
  d.first_stage_term = acc / static_cast<double>(unlabeled.size());
  const auto cal = calibrate(s2, model, weight, config.q, config.threshold);
  d.calibration_term = cal.term;
  d.truncation_fraction = cal.truncation_fraction;
  out.value = d.first_stage_term + d.calibration_term;
  return out;
}

}  // namespace shiftmoment
