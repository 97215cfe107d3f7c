#include "shiftmoment/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <thread>

#include "shiftmoment/csv.hpp"
#include "shiftmoment/errors.hpp"
#include "shiftmoment/parallel.hpp"
#include "shiftmoment/quadrature.hpp"
#include "shiftmoment/ratio_estimation.hpp"

namespace shiftmoment {

namespace {

constexpr double kSourceMu = 0.2;
constexpr double kSigma = 0.3;
constexpr std::size_t kTruthNodes = 2048;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::uint64_t study_id(Study s) { return static_cast<std::uint64_t>(s) + 1; }

LabeledDataset draw_labeled(const DensitySpec& source, const TestFunction& f, std::size_t n, Rng& rng) {
  LabeledDataset data{source.sample(n, rng), {}};
  data.ys.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.ys.push_back(f(data.xs[i]));
  return data;
}

EstimatorConfig base_config(const ExperimentSpec& spec, std::optional<double> threshold) {
  EstimatorConfig cfg;
  cfg.q = spec.q;
  cfg.threshold = threshold;
  cfg.target_integration = default_integration(1);
  cfg.regressor = spec.effective_regressor();
  return cfg;
}

TrialRecord make_record(Study study, double param, const std::string& method, int rep, double estimate, double truth) {
  return {to_string(study), param, method, rep, estimate, truth, std::abs(estimate - truth)};
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

nlohmann::json base_metadata(const ExperimentSpec& spec) {
  return {{"spec", to_json(spec)},
          {"library_version", SHIFTMOMENT_VERSION},
          {"regressor", to_json(spec.effective_regressor())},
          {"notes", nlohmann::json::array()}};
}

// Shared driver for the shift and sampling studies: one two-stage estimate
// per (parameter, rep) with the known ratio.
ExperimentResult run_known_ratio_study(const ExperimentSpec& spec, const std::vector<double>& params,
                                       const std::function<SourceTargetPair(double)>& make_pair) {
  const auto start = std::chrono::steady_clock::now();
  const TestFunction f(SinFamily{16.0});
  ExperimentResult result;
  result.metadata = base_metadata(spec);
  result.metadata["notes"].push_back("n = " + std::to_string(spec.n) + " labeled source draws per replication");
  result.metadata["parameters"] = nlohmann::json::array();
  const auto reps = static_cast<std::size_t>(spec.repetitions);
  result.records.resize(params.size() * reps);
  const auto threads = resolve_threads(spec.threads);

  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto pair = make_pair(params[p]);
    const double truth = truth_oracle(f, pair.target(), spec.q);
    const double b = sup_ratio(pair);
    const auto bounds = density_bounds(pair.source());
    const auto threshold = resolve_threshold(spec, b, spec.n);
    const auto cfg = base_config(spec, threshold);
    const std::string method = threshold ? "two_stage_trunc" : "two_stage";
    parallel_for(reps, threads, [&](std::size_t r) {
      auto rng = Rng::derive(spec.base_seed, {study_id(spec.study), p, r});
      const auto data = draw_labeled(pair.source(), f, spec.n, rng);
      const auto est = estimate_two_stage_known(data, pair, cfg, rng);
      result.records[p * reps + r] = make_record(spec.study, params[p], method, static_cast<int>(r), est.value, truth);
    });
    result.metadata["parameters"].push_back({{"param", params[p]},
                                             {"B", b},
                                             {"b_upper", bounds.upper},
                                             {"b_lower", bounds.lower},
                                             {"truth", truth},
                                             {"threshold", optional_json(threshold)}});
  }
  result.metadata["wall_time_seconds"] = elapsed_seconds(start);
  return result;
}

SourceTargetPair tnorm_pair(double mu) {
  return SourceTargetPair(DensitySpec::truncated_normal(0.0, 1.0, kSourceMu, kSigma),
                          DensitySpec::truncated_normal(0.0, 1.0, mu, kSigma));
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Study study) {
  switch (study) {
    case Study::ShiftIntensity: return "shift";
    case Study::SamplingStrategy: return "sampling";
    case Study::FunctionClass: return "function_class";
    case Study::MethodComparison: return "compare";
    case Study::TruncationStudy: return "truncation";
    case Study::CsvProtocol: return "csv";
  }
  return "unknown";
}

Study study_from_string(const std::string& s) {
  if (s == "shift" || s == "shift_intensity") return Study::ShiftIntensity;
  if (s == "sampling" || s == "sampling_strategy") return Study::SamplingStrategy;
  if (s == "function_class" || s == "function-class") return Study::FunctionClass;
  if (s == "compare" || s == "method_comparison") return Study::MethodComparison;
  if (s == "truncation" || s == "truncation_study") return Study::TruncationStudy;
  if (s == "csv" || s == "csv_protocol") return Study::CsvProtocol;
  throw ConfigError("study: unknown study '" + s + "'");
}

std::string to_string(ThresholdRule rule) {
  switch (rule) {
    case ThresholdRule::None: return "none";
    case ThresholdRule::HalfB: return "halfB";
    case ThresholdRule::ThreeQuarterB: return "threeQuarterB";
    case ThresholdRule::Theory: return "theory";
  }
  return "none";
}

ThresholdRule threshold_rule_from_string(const std::string& s) {
  if (s == "none") return ThresholdRule::None;
  if (s == "halfB") return ThresholdRule::HalfB;
  if (s == "threeQuarterB") return ThresholdRule::ThreeQuarterB;
  if (s == "theory") return ThresholdRule::Theory;
  throw ConfigError("threshold_rule: expected one of none, halfB, threeQuarterB, theory; got '" + s + "'");
}

TestFunction::TestFunction(TabulatedFunction f) : kind_(std::move(f)) {
  const auto& v = std::get<TabulatedFunction>(kind_).values;
  if (v.size() < 2) throw ConfigError("tabulated function: need at least two values");
  for (double x : v) {
    if (!std::isfinite(x)) throw ConfigError("tabulated function: values must be finite");
  }
}

double TestFunction::operator()(double x) const {
  return std::visit(overloaded{
                        [x](const SinFamily& s) { return 1.0 + x * x + std::sin(s.k * x) / 5.0; },
                        [x](const TabulatedFunction& t) {
                          const double pos = std::clamp(x, 0.0, 1.0) * static_cast<double>(t.values.size() - 1);
                          const auto k = std::min(static_cast<std::size_t>(pos), t.values.size() - 2);
                          const double frac = pos - static_cast<double>(k);
                          return t.values[k] + frac * (t.values[k + 1] - t.values[k]);
                        },
                    },
                    kind_);
}

double truth_oracle(const TestFunction& f, const DensitySpec& target, int q) {
  if (target.dim() != 1) throw ConfigError("truth_oracle: one-dimensional targets only");
  if (q < 1) throw ConfigError("q must be >= 1");
  return integrate_unit([&](double x) { return ipow(f(x), q) * target.pdf(x); }, kTruthNodes);
}

ExperimentSpec ExperimentSpec::defaults(Study study) {
  ExperimentSpec s;
  s.study = study;
  switch (study) {
    case Study::ShiftIntensity:
      s.mu_list = {0.2, 0.4, 0.6, 0.8};
      break;
    case Study::SamplingStrategy:
      s.a_list = {0.0, 3.0, 7.0, 10.0};
      break;
    case Study::FunctionClass:
      s.k_list = {4.0, 16.0, 32.0, 64.0};
      s.error_targets = {0.1, 0.05, 0.01, 0.001};
      break;
    case Study::MethodComparison:
      s.mu_list = {0.2, 0.4, 0.6};
      s.threshold_rule = ThresholdRule::ThreeQuarterB;
      break;
    case Study::TruncationStudy:
      s.mu_list = {0.4, 0.6, 0.8};
      s.threshold_rule = ThresholdRule::HalfB;
      break;
    case Study::CsvProtocol:
      s.threshold_rule = ThresholdRule::ThreeQuarterB;
      break;
  }
  return s;
}

void ExperimentSpec::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
  if (q < 1) throw ConfigError("q must be >= 1");
  if (threshold && !(*threshold > 0.0)) throw ConfigError("threshold must be positive");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (regressor) shiftmoment::validate(*regressor);
  auto nonempty = [](const std::vector<double>& v, const char* name) {
    if (v.empty()) throw ConfigError(std::string(name) + " must be nonempty");
  };
  switch (study) {
    case Study::ShiftIntensity:
    case Study::MethodComparison:
    case Study::TruncationStudy:
      nonempty(mu_list, "mu_list");
      for (double mu : mu_list) {
        if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu_list entries must lie in [0, 1]");
      }
      if (n < 2) throw ConfigError("n must be >= 2");
      break;
    case Study::SamplingStrategy:
      nonempty(a_list, "a_list");
      if (n < 2) throw ConfigError("n must be >= 2");
      break;
    case Study::FunctionClass:
      nonempty(k_list, "k_list");
      nonempty(error_targets, "error_targets");
      if (sweep_start < 2 || sweep_step < 1 || sweep_cap < sweep_start) throw ConfigError("sweep_start/sweep_step/sweep_cap inconsistent");
      break;
    case Study::CsvProtocol:
      if (csv_path.empty()) throw ConfigError("data: CSV path is required for the csv protocol");
      break;
  }
}

RegressorSpec ExperimentSpec::effective_regressor() const {
  if (regressor) return *regressor;
  if (study == Study::MethodComparison || study == Study::CsvProtocol) return LinearSpec{1};
  return ForestSpec{};
}

nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json j = {{"study", to_string(s.study)},
                      {"repetitions", s.repetitions},
                      {"n", s.n},
                      {"m", s.m},
                      {"base_seed", s.base_seed},
                      {"q", s.q},
                      {"regressor", s.regressor ? to_json(*s.regressor) : nlohmann::json(nullptr)},
                      {"mu_list", s.mu_list},
                      {"a_list", s.a_list},
                      {"k_list", s.k_list},
                      {"error_targets", s.error_targets},
                      {"threshold_rule", to_string(s.threshold_rule)},
                      {"threshold", optional_json(s.threshold)},
                      {"alpha", s.alpha},
                      {"smoothness", s.smoothness},
                      {"integrability", s.integrability},
                      {"sweep_start", s.sweep_start},
                      {"sweep_step", s.sweep_step},
                      {"sweep_cap", s.sweep_cap},
                      {"csv_path", s.csv_path},
                      {"beta", s.beta},
                      {"propensity_degree", s.propensity_degree}};
  return j;
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  if (!j.contains("study")) throw ConfigError("config: missing field 'study'");
  auto s = ExperimentSpec::defaults(study_from_string(j.at("study").get<std::string>()));
  try {
    if (j.contains("repetitions")) s.repetitions = j.at("repetitions").get<int>();
    if (j.contains("n")) s.n = j.at("n").get<std::size_t>();
    if (j.contains("m")) s.m = j.at("m").get<std::size_t>();
    if (j.contains("base_seed")) s.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("q")) s.q = j.at("q").get<int>();
    if (j.contains("regressor") && !j.at("regressor").is_null()) s.regressor = regressor_from_json(j.at("regressor"));
    if (j.contains("mu_list")) s.mu_list = j.at("mu_list").get<std::vector<double>>();
    if (j.contains("a_list")) s.a_list = j.at("a_list").get<std::vector<double>>();
    if (j.contains("k_list")) s.k_list = j.at("k_list").get<std::vector<double>>();
    if (j.contains("error_targets")) s.error_targets = j.at("error_targets").get<std::vector<double>>();
    if (j.contains("threshold_rule")) s.threshold_rule = threshold_rule_from_string(j.at("threshold_rule").get<std::string>());
    if (j.contains("threshold") && !j.at("threshold").is_null()) s.threshold = j.at("threshold").get<double>();
    if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
    if (j.contains("smoothness")) s.smoothness = j.at("smoothness").get<double>();
    if (j.contains("integrability")) s.integrability = j.at("integrability").get<double>();
    if (j.contains("sweep_start")) s.sweep_start = j.at("sweep_start").get<std::size_t>();
    if (j.contains("sweep_step")) s.sweep_step = j.at("sweep_step").get<std::size_t>();
    if (j.contains("sweep_cap")) s.sweep_cap = j.at("sweep_cap").get<std::size_t>();
    if (j.contains("csv_path")) s.csv_path = j.at("csv_path").get<std::string>();
    if (j.contains("beta")) s.beta = j.at("beta").get<std::vector<double>>();
    if (j.contains("propensity_degree")) s.propensity_degree = j.at("propensity_degree").get<int>();
    if (j.contains("threads")) s.threads = j.at("threads").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return s;
}

std::optional<double> resolve_threshold(const ExperimentSpec& spec, double b, std::size_t n) {
  if (spec.threshold) return spec.threshold;
  switch (spec.threshold_rule) {
    case ThresholdRule::None: return std::nullopt;
    case ThresholdRule::HalfB: return 0.5 * b;
    case ThresholdRule::ThreeQuarterB: return 0.75 * b;
    case ThresholdRule::Theory:
      return suggest_threshold({static_cast<double>(n), spec.smoothness, spec.integrability, static_cast<double>(spec.q), 1.0},
                               spec.alpha);
  }
  return std::nullopt;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SHIFTMOMENT_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double interquartile_range(const std::vector<double>& values) { return quantile(values, 0.75) - quantile(values, 0.25); }

std::vector<double> errors_for(const std::vector<TrialRecord>& records, double param, const std::string& method) {
  std::vector<const TrialRecord*> cell;
  for (const auto& r : records) {
    if (r.param == param && r.method == method) cell.push_back(&r);
  }
  std::sort(cell.begin(), cell.end(), [](const auto* a, const auto* b) { return a->rep < b->rep; });
  std::vector<double> out;
  out.reserve(cell.size());
  for (const auto* r : cell) out.push_back(r->abs_error);
  return out;
}

// ---------------------------------------------------------------------------

ExperimentResult run_shift_intensity(const ExperimentSpec& spec) {
  spec.validate();
  return run_known_ratio_study(spec, spec.mu_list, tnorm_pair);
}

ExperimentResult run_sampling_strategy(const ExperimentSpec& spec) {
  spec.validate();
  return run_known_ratio_study(spec, spec.a_list, [](double a) {
    return SourceTargetPair(DensitySpec::poly_family(a), DensitySpec::uniform());
  });
}

FunctionClassResult run_function_class(const ExperimentSpec& spec) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  const SourceTargetPair pair(DensitySpec::uniform(), DensitySpec::truncated_normal(0.0, 1.0, 0.6, 0.6));
  const double b = sup_ratio(pair);
  const auto threads = resolve_threads(spec.threads);
  const auto reps = static_cast<std::size_t>(spec.repetitions);
  const double smallest_target = *std::min_element(spec.error_targets.begin(), spec.error_targets.end());

  FunctionClassResult result;
  result.metadata = base_metadata(spec);
  result.metadata["B"] = b;
  result.metadata["sweeps"] = nlohmann::json::array();

  for (std::size_t ki = 0; ki < spec.k_list.size(); ++ki) {
    const double k = spec.k_list[ki];
    const TestFunction f(SinFamily{k});
    const double truth = truth_oracle(f, pair.target(), spec.q);
    std::vector<std::pair<std::size_t, double>> curve;
    std::vector<double> errors(reps);
    for (std::size_t n = spec.sweep_start; n <= spec.sweep_cap; n += spec.sweep_step) {
      const auto threshold = resolve_threshold(spec, b, n);
      const auto cfg = base_config(spec, threshold);
      parallel_for(reps, threads, [&](std::size_t r) {
        auto rng = Rng::derive(spec.base_seed, {study_id(spec.study), ki, n, r});
        const auto data = draw_labeled(pair.source(), f, n, rng);
        errors[r] = std::abs(estimate_two_stage_known(data, pair, cfg, rng).value - truth);
      });
      curve.emplace_back(n, median(errors));
      if (curve.back().second < smallest_target) break;
    }
    const bool capped = curve.back().second >= smallest_target;
    for (double target : spec.error_targets) {
      auto best = curve.begin();
      for (auto it = curve.begin(); it != curve.end(); ++it) {
        if (std::abs(it->second - target) < std::abs(best->second - target)) best = it;
      }
      result.rows.push_back({k, target, best->first, best->second, capped});
    }
    nlohmann::json sweep = {{"k", k}, {"truth", truth}, {"capped", capped}, {"n", nlohmann::json::array()},
                            {"median_error", nlohmann::json::array()}};
    for (const auto& [n, e] : curve) {
      sweep["n"].push_back(n);
      sweep["median_error"].push_back(e);
    }
    result.metadata["sweeps"].push_back(sweep);
  }
  result.metadata["wall_time_seconds"] = elapsed_seconds(start);
  return result;
}

ExperimentResult run_method_comparison(const ExperimentSpec& spec) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  const TestFunction f(SinFamily{16.0});
  ExperimentResult result;
  result.metadata = base_metadata(spec);
  result.metadata["parameters"] = nlohmann::json::array();
  const auto reps = static_cast<std::size_t>(spec.repetitions);
  const auto threads = resolve_threads(spec.threads);
  static const std::vector<std::string> methods = {"mc", "one_stage", "two_stage_trunc"};
  result.records.resize(spec.mu_list.size() * reps * methods.size());

  for (std::size_t p = 0; p < spec.mu_list.size(); ++p) {
    const double mu = spec.mu_list[p];
    const auto pair = tnorm_pair(mu);
    const double truth = truth_oracle(f, pair.target(), spec.q);
    const double b = sup_ratio(pair);
    const auto threshold = resolve_threshold(spec, b, spec.n);
    const auto one_stage_cfg = base_config(spec, std::nullopt);
    const auto two_stage_cfg = base_config(spec, threshold);
    parallel_for(reps, threads, [&](std::size_t r) {
      auto rng = Rng::derive(spec.base_seed, {study_id(spec.study), p, r});
      const auto data = draw_labeled(pair.source(), f, spec.n, rng);
      std::vector<double> w(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) w[i] = likelihood_ratio(pair, data.xs[i]);
      const double mc = estimate_mc(data, w, spec.q).value;
      const double one = estimate_one_stage(data, pair.target(), one_stage_cfg, rng).value;
      const double two = estimate_two_stage_known(data, pair, two_stage_cfg, rng).value;
      const std::size_t base = (p * reps + r) * methods.size();
      const int rep = static_cast<int>(r);
      result.records[base + 0] = make_record(spec.study, mu, methods[0], rep, mc, truth);
      result.records[base + 1] = make_record(spec.study, mu, methods[1], rep, one, truth);
      result.records[base + 2] =
          make_record(spec.study, mu, threshold ? methods[2] : to_string(EstimatorKind::TwoStage), rep, two, truth);
    });
    result.metadata["parameters"].push_back(
        {{"param", mu}, {"B", b}, {"truth", truth}, {"threshold", optional_json(threshold)}});
  }
  result.metadata["wall_time_seconds"] = elapsed_seconds(start);
  return result;
}

ExperimentResult run_truncation_study(const ExperimentSpec& spec) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  const TestFunction f(SinFamily{16.0});
  ExperimentResult result;
  result.metadata = base_metadata(spec);
  result.metadata["parameters"] = nlohmann::json::array();
  const auto reps = static_cast<std::size_t>(spec.repetitions);
  const auto threads = resolve_threads(spec.threads);
  result.records.resize(spec.mu_list.size() * reps * 2);

  for (std::size_t p = 0; p < spec.mu_list.size(); ++p) {
    const double mu = spec.mu_list[p];
    const auto pair = tnorm_pair(mu);
    const double truth = truth_oracle(f, pair.target(), spec.q);
    const double b = sup_ratio(pair);
    auto threshold = resolve_threshold(spec, b, spec.n);
    if (!threshold) threshold = 0.5 * b;
    const auto plain_cfg = base_config(spec, std::nullopt);
    const auto trunc_cfg = base_config(spec, threshold);
    parallel_for(reps, threads, [&](std::size_t r) {
      auto rng = Rng::derive(spec.base_seed, {study_id(spec.study), p, r});
      const auto data = draw_labeled(pair.source(), f, spec.n, rng);
      // identical split and first-stage fit for both estimators
      Rng plain_rng = rng;
      Rng trunc_rng = rng;
      const double plain = estimate_two_stage_known(data, pair, plain_cfg, plain_rng).value;
      const double trunc = estimate_two_stage_known(data, pair, trunc_cfg, trunc_rng).value;
      const int rep = static_cast<int>(r);
      result.records[(p * reps + r) * 2 + 0] = make_record(spec.study, mu, "two_stage", rep, plain, truth);
      result.records[(p * reps + r) * 2 + 1] = make_record(spec.study, mu, "two_stage_trunc", rep, trunc, truth);
    });
    result.metadata["parameters"].push_back({{"param", mu},
                                             {"B", b},
                                             {"truth", truth},
                                             {"threshold", *threshold},
                                             {"exceedance_probability", exceedance_probability(pair, *threshold)}});
  }
  result.metadata["wall_time_seconds"] = elapsed_seconds(start);
  return result;
}

ExperimentResult run_csv_protocol(const ExperimentSpec& spec) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto table = read_numeric_csv(spec.csv_path);
  if (table.header.size() < 2) throw InputError(spec.csv_path + ": need at least one feature column and a response column");
  if (table.rows.size() < 10) {
    throw InputError(spec.csv_path + ": need at least 10 data rows, found " + std::to_string(table.rows.size()));
  }
  const std::size_t d = table.header.size() - 1;
  std::vector<double> beta = spec.beta;
  if (beta.empty()) {
    beta.assign(d, 0.0);
    beta.front() = d == 1 ? 1.0 : -1.0;
    if (d > 1) beta.back() = 1.0;
  }
  if (beta.size() != d) {
    throw ConfigError("beta: expected " + std::to_string(d) + " entries (one per feature column), got " +
                      std::to_string(beta.size()));
  }

  const auto scaler = FeatureScaler::fit(table.rows, d);
  const auto all = to_labeled(table, scaler);
  const std::size_t total = all.size();
  const auto n_train = static_cast<std::size_t>(std::llround(0.5 * static_cast<double>(total)));
  const auto n_test = static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(total)));
  const std::size_t n_cls = total - n_train - n_test;

  ExperimentResult result;
  result.metadata = base_metadata(spec);
  result.metadata["rows"] = total;
  result.metadata["features"] = d;
  result.metadata["beta"] = beta;
  result.metadata["split_sizes"] = {{"train", n_train}, {"test", n_test}, {"cls", n_cls}};
  result.metadata["notes"].push_back("features min-max scaled to [0,1] before tilting and fitting");

  const auto reps = static_cast<std::size_t>(spec.repetitions);
  const auto threads = resolve_threads(spec.threads);
  static const std::vector<std::string> methods = {"mc", "one_stage", "plugin"};
  result.records.resize(reps * methods.size());
  std::vector<double> thresholds(reps);
  const auto regressor = spec.effective_regressor();

  parallel_for(reps, threads, [&](std::size_t r) {
    auto rng = Rng::derive(spec.base_seed, {study_id(spec.study), 0, r});
    std::vector<std::size_t> perm(total);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(perm.begin(), perm.end(), rng);
    const std::span<const std::size_t> idx(perm);
    const auto train = all.subset(idx.first(n_train));
    const auto test = all.subset(idx.subspan(n_train, n_test));
    const auto cls = all.subset(idx.subspan(n_train + n_test));

    // tilted resample of the test split
    std::vector<double> cum(test.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += test.xs[i][j] * beta[j];
      acc += std::exp(dot);
      cum[i] = acc;
    }
    std::vector<std::size_t> picks(test.size());
    for (auto& pick : picks) {
      const double u = rng.uniform() * acc;
      pick = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      pick = std::min(pick, test.size() - 1);
    }
    const auto shifted = test.subset(picks);
    double truth = 0.0;
    for (double y : shifted.ys) truth += ipow(y, spec.q);
    truth /= static_cast<double>(shifted.size());

    UnlabeledDataset pooled{train.xs};
    for (std::size_t i = 0; i < cls.size(); ++i) pooled.xs.push_back(cls.xs[i]);
    const UnlabeledDataset shifted_x{shifted.xs};
    const auto ratio_model = fit_propensity(pooled, shifted_x, spec.propensity_degree);

    std::vector<double> w(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) w[i] = ratio_at(ratio_model, train.xs[i]);
    const double mc = estimate_mc(train, w, spec.q).value;

    const auto model = fit(regressor, train, rng);
    double one = 0.0;
    for (std::size_t i = 0; i < shifted.size(); ++i) one += ipow(model.predict(shifted.xs[i]), spec.q);
    one /= static_cast<double>(shifted.size());

    const double b_hat = *std::max_element(w.begin(), w.end());
    auto threshold = resolve_threshold(spec, b_hat, train.size());
    if (!threshold) threshold = b_hat;
    thresholds[r] = *threshold;
    EstimatorConfig cfg;
    cfg.q = spec.q;
    cfg.threshold = threshold;
    cfg.regressor = regressor;
    const double plug = estimate_two_stage_plugin(train, shifted_x, cfg, ratio_model, rng).value;

    const int rep = static_cast<int>(r);
    result.records[r * 3 + 0] = make_record(spec.study, 0.0, methods[0], rep, mc, truth);
    result.records[r * 3 + 1] = make_record(spec.study, 0.0, methods[1], rep, one, truth);
    result.records[r * 3 + 2] = make_record(spec.study, 0.0, methods[2], rep, plug, truth);
  });
  result.metadata["threshold_median"] = median(thresholds);
  result.metadata["wall_time_seconds"] = elapsed_seconds(start);
  return result;
}

}  // namespace shiftmoment
