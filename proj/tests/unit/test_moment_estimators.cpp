#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "shiftmoment/distributions.hpp"
#include "shiftmoment/errors.hpp"
#include "shiftmoment/experiments.hpp"
#include "shiftmoment/moment_estimators.hpp"

using namespace shiftmoment;

namespace {

LabeledDataset draw(const DensitySpec& source, const std::function<double(double)>& f, std::size_t n, Rng& rng) {
  LabeledDataset d{source.sample(n, rng), {}};
  for (std::size_t i = 0; i < n; ++i) d.ys.push_back(f(d.xs[i][0]));
  return d;
}

SourceTargetPair tnorm_pair(double mu) {
  return SourceTargetPair(DensitySpec::truncated_normal(0, 1, 0.2, 0.3), DensitySpec::truncated_normal(0, 1, mu, 0.3));
}

FirstStageFitter constant_fitter(double c) {
  return [c](const LabeledDataset& d, Rng&) {
    return FittedRegressor::from_function([c](std::span<const double>) { return c; }, d.size());
  };
}

const auto sin16 = [](double x) { return 1 + x * x + std::sin(16 * x) / 5; };

}  // namespace

TEST_CASE("split sizes and determinism") {
  Rng rng(1);
  const auto d10 = draw(DensitySpec::uniform(), [](double x) { return x; }, 10, rng);
  const auto d11 = draw(DensitySpec::uniform(), [](double x) { return x; }, 11, rng);
  Rng a(5), b(5);
  const auto s10 = split(d10, 0.5, a);
  CHECK(s10.first.size() == 5);
  CHECK(s10.second.size() == 5);
  const auto s11 = split(d11, 0.5, b);
  CHECK(s11.first.size() == 6);
  CHECK(s11.second.size() == 5);
  Rng c(5);
  const auto again = split(d10, 0.5, c);
  CHECK(again.first.ys == s10.first.ys);
  std::set<double> all(s10.first.ys.begin(), s10.first.ys.end());
  all.insert(s10.second.ys.begin(), s10.second.ys.end());
  CHECK(all.size() == 10);
}

TEST_CASE("split rejects tiny or invalid inputs") {
  Rng rng(1);
  const auto one = draw(DensitySpec::uniform(), [](double x) { return x; }, 1, rng);
  CHECK_THROWS_AS(split(one, 0.5, rng), ConfigError);
  const auto two = draw(DensitySpec::uniform(), [](double x) { return x; }, 2, rng);
  CHECK_THROWS_AS(split(two, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(split(two, 0.1, rng), ConfigError);
}

TEST_CASE("target moment of simple models") {
  Rng rng(0);
  const auto c = FittedRegressor::from_function([](std::span<const double>) { return 1.7; });
  CHECK(std::abs(target_moment_of_model(c, DensitySpec::truncated_normal(0, 1, 0.6, 0.2), 2, QuadratureIntegration{}, rng) -
                 1.7 * 1.7) < 1e-10);
  const auto id = FittedRegressor::from_function([](std::span<const double> x) { return x[0]; });
  CHECK(std::abs(target_moment_of_model(id, DensitySpec::uniform(), 2, QuadratureIntegration{}, rng) - 1.0 / 3.0) < 1e-8);
  CHECK(target_moment_of_model(id, DensitySpec::truncated_normal(0, 1, 0.2, 0.3), 1, QuadratureIntegration{}, rng) ==
        doctest::Approx(oracle::truncated_normal_mean(0, 1, 0.2, 0.3)).epsilon(1e-9));
  const double mc = target_moment_of_model(id, DensitySpec::uniform(), 2, MonteCarloIntegration{200000}, rng);
  CHECK(mc == doctest::Approx(1.0 / 3.0).epsilon(0.01));
}

TEST_CASE("estimate_mc examples") {
  LabeledDataset d;
  for (int i = 0; i < 4; ++i) {
    d.xs.push_back(0.25 * i);
    d.ys.push_back(2.0);
  }
  const std::vector<double> ones(4, 1.0), zeros(4, 0.0), short_w(3, 1.0);
  const auto e = estimate_mc(d, ones, 2);
  CHECK(e.value == 4.0);
  CHECK(e.diagnostics.first_stage_term == 0.0);
  CHECK(e.value == e.diagnostics.first_stage_term + e.diagnostics.calibration_term);
  CHECK(estimate_mc(d, zeros, 2).value == 0.0);
  CHECK_THROWS_AS(estimate_mc(d, short_w, 2), ConfigError);
}

TEST_CASE("estimate_mc is unbiased over seeded replications") {
  const auto pair = tnorm_pair(0.4);
  const double truth = truth_oracle(TestFunction(SinFamily{16}), pair.target(), 2);
  std::vector<double> vals;
  for (std::uint64_t r = 0; r < 500; ++r) {
    auto rng = Rng::derive(99, {r});
    const auto d = draw(pair.source(), sin16, 5000, rng);
    std::vector<double> w(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) w[i] = likelihood_ratio(pair, d.xs[i]);
    vals.push_back(estimate_mc(d, w, 2).value);
  }
  double mean = 0, sq = 0;
  for (double v : vals) mean += v;
  mean /= vals.size();
  for (double v : vals) sq += (v - mean) * (v - mean);
  const double se = std::sqrt(sq / (vals.size() - 1) / vals.size());
  CHECK(std::abs(mean - truth) <= 3 * se);
}

TEST_CASE("one-stage examples") {
  Rng rng(2);
  EstimatorConfig cfg;
  cfg.q = 1;
  cfg.regressor = LinearSpec{1};
  const auto lin = draw(DensitySpec::poly_family(3), [](double x) { return 3 * x - 1; }, 100, rng);
  CHECK(std::abs(estimate_one_stage(lin, DensitySpec::uniform(), cfg, rng).value - 0.5) < 1e-8);

  cfg.q = 3;
  const auto cst = draw(DensitySpec::poly_family(3), [](double) { return 1.5; }, 50, rng);
  CHECK(estimate_one_stage(cst, DensitySpec::uniform(), cfg, rng).value == doctest::Approx(3.375));

  cfg.q = 1;
  cfg.regressor = LinearSpec{0};
  const auto shifted = draw(DensitySpec::truncated_normal(0, 1, 0.2, 0.3), [](double x) { return x; }, 400, rng);
  double ybar = 0;
  for (double y : shifted.ys) ybar += y;
  ybar /= shifted.size();
  const auto e = estimate_one_stage(shifted, DensitySpec::uniform(), cfg, rng);
  CHECK(e.value == doctest::Approx(ybar).epsilon(1e-10));
  CHECK(std::abs(e.value - 0.5) > 0.1);
  CHECK(e.diagnostics.calibration_term == 0.0);
}

TEST_CASE("perfect first stage leaves a zero calibration term") {
  const auto pair = tnorm_pair(0.6);
  Rng rng(3);
  const auto d = draw(pair.source(), sin16, 200, rng);
  EstimatorConfig cfg;
  const FirstStageFitter oracle_fit = [](const LabeledDataset& s, Rng&) {
    return FittedRegressor::from_function([](std::span<const double> x) { return sin16(x[0]); }, s.size());
  };
  const auto e = estimate_two_stage_known(d, pair, cfg, oracle_fit, rng);
  CHECK(std::abs(e.diagnostics.calibration_term) < 1e-12);
  const auto f = FittedRegressor::from_function([](std::span<const double> x) { return sin16(x[0]); });
  Rng unused(0);
  CHECK(e.value == doctest::Approx(target_moment_of_model(f, pair.target(), 2, QuadratureIntegration{}, unused)));
}

TEST_CASE("zero first stage degenerates to weighted MC on S2") {
  const auto pair = tnorm_pair(0.4);
  Rng rng(4);
  const auto d = draw(pair.source(), sin16, 101, rng);
  EstimatorConfig cfg;
  Rng a(8), b(8);
  const auto e = estimate_two_stage_known(d, pair, cfg, constant_fitter(0.0), a);
  const auto parts = split(d, cfg.split_fraction, b);
  std::vector<double> w(parts.second.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = likelihood_ratio(pair, parts.second.xs[i]);
  CHECK(e.value == doctest::Approx(estimate_mc(parts.second, w, 2).value).epsilon(1e-12));
  CHECK(e.diagnostics.n1 == 51);
  CHECK(e.diagnostics.n2 == 50);
  CHECK(e.kind == EstimatorKind::TwoStage);
}

TEST_CASE("decomposition identity and truncation diagnostics") {
  const auto pair = tnorm_pair(0.8);
  Rng rng(5);
  const auto d = draw(pair.source(), sin16, 200, rng);
  EstimatorConfig cfg;
  cfg.regressor = LinearSpec{2};
  const double b = sup_ratio(pair);
  for (double t : {b / 8, b / 4, b / 2, b}) {
    cfg.threshold = t;
    Rng r(6);
    const auto e = estimate_two_stage_known(d, pair, cfg, r);
    CHECK(e.value == e.diagnostics.first_stage_term + e.diagnostics.calibration_term);
    CHECK(e.kind == EstimatorKind::TwoStageTruncated);
    CHECK(e.diagnostics.truncation_fraction >= 0.0);
    CHECK(e.diagnostics.truncation_fraction <= 1.0);
    REQUIRE(e.diagnostics.threshold_used.has_value());
    CHECK(*e.diagnostics.threshold_used == t);
  }
  cfg.threshold = b * 2;
  Rng r1(6), r2(6);
  const auto hi = estimate_two_stage_known(d, pair, cfg, r1);
  cfg.threshold.reset();
  const auto none = estimate_two_stage_known(d, pair, cfg, r2);
  CHECK(hi.value == none.value);
  CHECK(hi.diagnostics.truncation_fraction == 0.0);
}

TEST_CASE("no shift reduces to model moment plus mean residual") {
  const SourceTargetPair same(DensitySpec::poly_family(3), DensitySpec::poly_family(3));
  Rng rng(7);
  const auto d = draw(same.source(), sin16, 100, rng);
  EstimatorConfig cfg;
  cfg.regressor = LinearSpec{1};
  cfg.threshold = 1.0;
  Rng a(3), b(3);
  const auto e = estimate_two_stage_known(d, same, cfg, a);
  const auto parts = split(d, 0.5, b);
  const auto model = fit(LinearSpec{1}, parts.first, b);
  double resid = 0;
  for (std::size_t i = 0; i < parts.second.size(); ++i) {
    resid += ipow(parts.second.ys[i], 2) - ipow(model.predict(parts.second.xs[i]), 2);
  }
  resid /= parts.second.size();
  CHECK(e.diagnostics.calibration_term == doctest::Approx(resid).epsilon(1e-12));
  CHECK(e.diagnostics.truncation_fraction == 0.0);
}

TEST_CASE("plug-in with the exact ratio approaches the known-ratio estimate") {
  const auto pair = tnorm_pair(0.4);
  Rng rng(9);
  const auto d = draw(pair.source(), sin16, 200, rng);
  Rng ur(10);
  const UnlabeledDataset u{pair.target().sample(400000, ur)};
  EstimatorConfig cfg;
  cfg.regressor = LinearSpec{2};
  cfg.threshold = sup_ratio(pair);
  const WeightFunction w = [&](std::span<const double> x) { return likelihood_ratio(pair, x); };
  Rng a(11), b(11);
  const auto plug = estimate_two_stage_plugin(d, u, cfg, w, spec_fitter(cfg.regressor), a);
  const auto known = estimate_two_stage_known(d, pair, cfg, b);
  CHECK(plug.kind == EstimatorKind::PlugIn);
  CHECK(std::abs(plug.value - known.value) < 0.01);
  CHECK(plug.diagnostics.calibration_term == doctest::Approx(known.diagnostics.calibration_term));
}

TEST_CASE("plug-in requires a threshold and unlabeled data") {
  const auto pair = tnorm_pair(0.4);
  Rng rng(12);
  const auto d = draw(pair.source(), sin16, 50, rng);
  const UnlabeledDataset u{pair.target().sample(50, rng)};
  EstimatorConfig cfg;
  cfg.regressor = LinearSpec{1};
  const WeightFunction w = [](std::span<const double>) { return 1.0; };
  CHECK_THROWS_AS(estimate_two_stage_plugin(d, u, cfg, w, spec_fitter(cfg.regressor), rng), ConfigError);
  cfg.threshold = 2.0;
  const UnlabeledDataset empty{PointSet(1)};
  CHECK_THROWS_AS(estimate_two_stage_plugin(d, empty, cfg, w, spec_fitter(cfg.regressor), rng), ConfigError);
}

TEST_CASE("config validation") {
  EstimatorConfig cfg;
  cfg.q = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.q = 2;
  cfg.target_integration = QuadratureIntegration{8};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.target_integration = QuadratureIntegration{};
  cfg.threshold = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("estimate JSON carries every diagnostic") {
  MomentEstimate e;
  e.kind = EstimatorKind::PlugIn;
  e.value = 1.5;
  e.diagnostics.threshold_used = 3.0;
  const auto j = to_json(e);
  CHECK(j.at("kind") == "plugin");
  for (const char* key : {"n1", "n2", "truncation_fraction", "threshold_used", "first_stage_term", "calibration_term"}) {
    CHECK(j.at("diagnostics").contains(key));
  }
  CHECK(to_string(EstimatorKind::TwoStageTruncated) == "two_stage_trunc");
}
