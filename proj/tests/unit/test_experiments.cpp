#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "shiftmoment/distributions.hpp"
#include "shiftmoment/errors.hpp"
#include "shiftmoment/experiments.hpp"

using namespace shiftmoment;
namespace fs = std::filesystem;

namespace {

ExperimentSpec small(Study study, int reps = 6) {
  auto spec = ExperimentSpec::defaults(study);
  spec.repetitions = reps;
  spec.n = 60;
  spec.threads = 2;
  if (study != Study::MethodComparison && study != Study::CsvProtocol) spec.regressor = ForestSpec{10, 5};
  return spec;
}

fs::path synthetic_csv(const std::string& name, std::size_t rows, double constant = std::nan("")) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  out << "x1,x2,y\n";
  Rng rng(17);
  for (std::size_t i = 0; i < rows; ++i) {
    const double a = rng.uniform(), b = 4 * rng.uniform() - 2;
    const double y = std::isnan(constant) ? 1 + a * a + std::sin(16 * a) / 5 + 0.1 * b : constant;
    out << a << ',' << b << ',' << y << '\n';
  }
  return path;
}

}  // namespace

TEST_CASE("truth oracle examples") {
  CHECK(std::abs(truth_oracle(TestFunction(TabulatedFunction{{1, 1}}), DensitySpec::truncated_normal(0, 1, 0.4, 0.3), 5) -
                 1.0) < 1e-12);
  CHECK(std::abs(truth_oracle(TestFunction(TabulatedFunction{{0, 1}}), DensitySpec::uniform(), 2) - 1.0 / 3.0) < 1e-10);
  // frozen reference, cross-checked with 30-digit mpmath quadrature
  const double frozen = truth_oracle(TestFunction(SinFamily{16}), DensitySpec::truncated_normal(0, 1, 0.4, 0.3), 2);
  CHECK(frozen == doctest::Approx(1.649692784965).epsilon(1e-11));
}

TEST_CASE("test function values") {
  const TestFunction f(SinFamily{4});
  CHECK(f(0.5) == doctest::Approx(1.25 + std::sin(2.0) / 5));
  const TestFunction t(TabulatedFunction{{0, 2, 1}});
  CHECK(t(0.25) == doctest::Approx(1.0));
  CHECK(t(0.75) == doctest::Approx(1.5));
}

TEST_CASE("shift study row counts and truths") {
  const auto spec = small(Study::ShiftIntensity);
  const auto res = run_shift_intensity(spec);
  CHECK(res.records.size() == 4 * 6);
  for (const auto& r : res.records) {
    CHECK(r.abs_error == std::abs(r.estimate - r.truth));
    const auto pair = SourceTargetPair(DensitySpec::truncated_normal(0, 1, 0.2, 0.3),
                                       DensitySpec::truncated_normal(0, 1, r.param, 0.3));
    CHECK(r.truth == truth_oracle(TestFunction(SinFamily{16}), pair.target(), 2));
  }
  CHECK(res.metadata.contains("parameters"));
}

TEST_CASE("sampling study logs b bounds") {
  const auto res = run_sampling_strategy(small(Study::SamplingStrategy));
  CHECK(res.records.size() == 4 * 6);
  const double expected[] = {1.40, 1.43, 1.53, 1.64};
  const auto& params = res.metadata.at("parameters");
  REQUIRE(params.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(params[i].at("b_upper").get<double>() - expected[i]) <= 1e-2);
}

TEST_CASE("method comparison and truncation row counts") {
  CHECK(run_method_comparison(small(Study::MethodComparison)).records.size() == 3 * 3 * 6);
  const auto tr = run_truncation_study(small(Study::TruncationStudy));
  CHECK(tr.records.size() == 3 * 2 * 6);
}

TEST_CASE("truncated and untruncated coincide when T exceeds every weight") {
  auto spec = small(Study::TruncationStudy, 4);
  spec.mu_list = {0.4};
  spec.threshold = 100.0;
  const auto tr = run_truncation_study(spec);
  const auto a = errors_for(tr.records, 0.4, "two_stage");
  const auto b = errors_for(tr.records, 0.4, "two_stage_trunc");
  CHECK(a == b);
}

TEST_CASE("function class output shape and monotone targets") {
  auto spec = small(Study::FunctionClass, 5);
  spec.k_list = {4, 16};
  spec.error_targets = {0.1, 0.05};
  spec.sweep_cap = 400;
  const auto res = run_function_class(spec);
  CHECK(res.rows.size() == 4);
  CHECK(res.rows[0].required_n <= res.rows[1].required_n);
}

TEST_CASE("results are identical for any thread count") {
  auto spec = small(Study::ShiftIntensity, 5);
  spec.threads = 1;
  const auto a = run_shift_intensity(spec);
  spec.threads = 4;
  const auto b = run_shift_intensity(spec);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].estimate == b.records[i].estimate);
}

TEST_CASE("csv protocol: constant response is recovered exactly") {
  auto spec = small(Study::CsvProtocol, 4);
  spec.csv_path = synthetic_csv("shiftmoment_const.csv", 80, 1.5).string();
  const auto res = run_csv_protocol(spec);
  CHECK(res.records.size() == 3 * 4);
  for (const auto& r : res.records) {
    CHECK(r.truth == doctest::Approx(2.25));
    if (r.method != "mc") CHECK(r.abs_error <= 1e-9);
  }
}

TEST_CASE("csv protocol: plug-in beats weighted MC on a synthetic table") {
  auto spec = ExperimentSpec::defaults(Study::CsvProtocol);
  spec.csv_path = synthetic_csv("shiftmoment_synth.csv", 1000).string();
  spec.regressor = LinearSpec{3};
  spec.beta = {3.0, 0.0};
  const auto res = run_csv_protocol(spec);
  CHECK(median(errors_for(res.records, 0, "plugin")) < median(errors_for(res.records, 0, "mc")));
}

TEST_CASE("csv protocol input errors") {
  auto spec = small(Study::CsvProtocol, 2);
  spec.csv_path = synthetic_csv("shiftmoment_tiny.csv", 5).string();
  CHECK_THROWS_AS(run_csv_protocol(spec), InputError);
  spec.csv_path = (fs::temp_directory_path() / "shiftmoment_missing.csv").string();
  CHECK_THROWS_AS(run_csv_protocol(spec), InputError);
  spec.csv_path = synthetic_csv("shiftmoment_ok.csv", 40).string();
  spec.beta = {1.0};
  CHECK_THROWS_AS(run_csv_protocol(spec), ConfigError);
}

TEST_CASE("spec validation and JSON round trip") {
  auto spec = ExperimentSpec::defaults(Study::ShiftIntensity);
  spec.repetitions = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = ExperimentSpec::defaults(Study::ShiftIntensity);
  spec.mu_list.clear();
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = ExperimentSpec::defaults(Study::MethodComparison);
  spec.n = 321;
  const auto back = experiment_from_json(to_json(spec));
  CHECK(back.n == 321);
  CHECK(back.study == Study::MethodComparison);
  CHECK(back.threshold_rule == ThresholdRule::ThreeQuarterB);
  CHECK(std::holds_alternative<LinearSpec>(back.effective_regressor()));
  CHECK(std::holds_alternative<ForestSpec>(ExperimentSpec::defaults(Study::ShiftIntensity).effective_regressor()));
  CHECK_THROWS_AS(study_from_string("bogus"), ConfigError);
  CHECK_THROWS_AS(threshold_rule_from_string("quarterB"), ConfigError);
}

TEST_CASE("threshold rules") {
  auto spec = ExperimentSpec::defaults(Study::TruncationStudy);
  spec.threshold_rule = ThresholdRule::HalfB;
  CHECK(*resolve_threshold(spec, 10.0, 200) == 5.0);
  spec.threshold_rule = ThresholdRule::ThreeQuarterB;
  CHECK(*resolve_threshold(spec, 10.0, 200) == 7.5);
  spec.threshold_rule = ThresholdRule::None;
  CHECK(!resolve_threshold(spec, 10.0, 200));
  spec.threshold = 2.0;
  CHECK(*resolve_threshold(spec, 10.0, 200) == 2.0);
  spec.threshold.reset();
  spec.threshold_rule = ThresholdRule::Theory;
  CHECK(*resolve_threshold(spec, 10.0, 200) > 1.0);
}

TEST_CASE("summary statistics") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
  CHECK(interquartile_range({1, 2, 3, 4, 5}) == 2.0);
}
