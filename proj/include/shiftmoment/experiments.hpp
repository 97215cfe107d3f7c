#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "shiftmoment/distributions.hpp"
#include "shiftmoment/moment_estimators.hpp"
#include "shiftmoment/regressors.hpp"

namespace shiftmoment {

enum class Study { ShiftIntensity, SamplingStrategy, FunctionClass, MethodComparison, TruncationStudy, CsvProtocol };

std::string to_string(Study study);
Study study_from_string(const std::string& s);

enum class ThresholdRule { None, HalfB, ThreeQuarterB, Theory };

std::string to_string(ThresholdRule rule);
ThresholdRule threshold_rule_from_string(const std::string& s);

/// f(x; k) = 1 + x^2 + sin(k x) / 5.
struct SinFamily {
  double k = 16.0;
};

/// Piecewise-linear function through values on a uniform grid over [0,1].
struct TabulatedFunction {
  std::vector<double> values;
};

class TestFunction {
 public:
  TestFunction(SinFamily f) : kind_(f) {}
  TestFunction(TabulatedFunction f);

  double operator()(double x) const;
  double operator()(std::span<const double> x) const { return (*this)(x[0]); }

 private:
  std::variant<SinFamily, TabulatedFunction> kind_;
};

/// Ground truth E_target[f(X)^q] by 2048-node Gauss-Legendre quadrature.
double truth_oracle(const TestFunction& f, const DensitySpec& target, int q);

struct ExperimentSpec {
  Study study = Study::ShiftIntensity;
  int repetitions = 100;
  std::size_t n = 200;
  std::size_t m = 2000;
  std::uint64_t base_seed = 20250101;
  int q = 2;
  /// Empty means the study default (forest for the synthetic studies,
  /// degree-1 linear for the method comparison and CSV protocol).
  std::optional<RegressorSpec> regressor;

  std::vector<double> mu_list;
  std::vector<double> a_list;
  std::vector<double> k_list;
  std::vector<double> error_targets;

  /// Rule applied when `threshold` is empty.
  ThresholdRule threshold_rule = ThresholdRule::None;
  std::optional<double> threshold;
  double alpha = 1.0;
  double smoothness = 1.0;
  double integrability = 2.0;

  std::size_t sweep_start = 10;
  std::size_t sweep_step = 10;
  std::size_t sweep_cap = 5000;

  std::string csv_path;
  std::vector<double> beta;
  int propensity_degree = 3;

  /// Worker threads; 0 = SHIFTMOMENT_THREADS or hardware concurrency.
  std::size_t threads = 0;

  /// Study defaults (parameter lists, threshold rule, sizes).
  static ExperimentSpec defaults(Study study);

  void validate() const;
  RegressorSpec effective_regressor() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);
/// Reads fields present in `j` on top of the study defaults.
ExperimentSpec experiment_from_json(const nlohmann::json& j);

struct TrialRecord {
  std::string study;
  double param = 0.0;
  std::string method;
  int rep = 0;
  double estimate = 0.0;
  double truth = 0.0;
  double abs_error = 0.0;
};

struct ExperimentResult {
  std::vector<TrialRecord> records;
  /// Per-parameter diagnostics (B, b bounds, truth, threshold) and run notes.
  nlohmann::json metadata;
};

struct RequiredSampleSize {
  double k = 0.0;
  double error_target = 0.0;
  std::size_t required_n = 0;
  double median_error = 0.0;
  bool capped = false;
};

struct FunctionClassResult {
  std::vector<RequiredSampleSize> rows;
  nlohmann::json metadata;
};

ExperimentResult run_shift_intensity(const ExperimentSpec& spec);
ExperimentResult run_sampling_strategy(const ExperimentSpec& spec);
FunctionClassResult run_function_class(const ExperimentSpec& spec);
ExperimentResult run_method_comparison(const ExperimentSpec& spec);
ExperimentResult run_truncation_study(const ExperimentSpec& spec);
ExperimentResult run_csv_protocol(const ExperimentSpec& spec);

/// Threshold for a given rule and sup ratio B; empty for ThresholdRule::None.
std::optional<double> resolve_threshold(const ExperimentSpec& spec, double sup_ratio_value, std::size_t n);

/// Worker count after applying the SHIFTMOMENT_THREADS fallback.
std::size_t resolve_threads(std::size_t requested);

// Summary statistics used for the per-parameter report lines.
double median(std::vector<double> values);
double quantile(std::vector<double> values, double p);
double interquartile_range(const std::vector<double>& values);

/// Absolute errors for one (param, method) cell, ordered by rep.
std::vector<double> errors_for(const std::vector<TrialRecord>& records, double param, const std::string& method);

}  // namespace shiftmoment
