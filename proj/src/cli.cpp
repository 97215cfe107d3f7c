#include "shiftmoment/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "shiftmoment/csv.hpp"
#include "shiftmoment/distributions.hpp"
#include "shiftmoment/errors.hpp"
#include "shiftmoment/experiments.hpp"
#include "shiftmoment/moment_estimators.hpp"
#include "shiftmoment/ratio_estimation.hpp"

namespace fs = std::filesystem;

namespace shiftmoment {

namespace {

struct Flags {
  std::string config;
  std::string out = "results";
  std::string study;
  int reps = 0;
  std::size_t n = 0;
  std::size_t m = 0;
  int q = 0;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string regressor;
  double threshold = 0.0;
  std::string threshold_rule;
  double alpha = 0.0;
  std::string mu_list;
  std::string a_list;
  std::string k_list;
  std::string data;
  std::string unlabeled;
  std::string beta;
  std::string source;
  std::string target;

  std::map<std::string, CLI::Option*> opts;
  bool given(const std::string& name) const {
    auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }
};

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (cell.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ConfigError(flag + ": cannot parse '" + cell + "' as a number");
    }
  }
  if (out.empty()) throw ConfigError(flag + ": empty list");
  return out;
}

RegressorSpec parse_regressor(const std::string& text) {
  if (!text.empty() && text.front() == '{') {
    try {
      return regressor_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("--regressor: ") + e.what());
    }
  }
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  std::optional<int> arg;
  if (colon != std::string::npos) {
    try {
      arg = std::stoi(text.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("--regressor: bad parameter in '" + text + "'");
    }
  }
  RegressorSpec spec;
  if (kind == "linear") spec = LinearSpec{arg.value_or(1)};
  else if (kind == "mls") spec = MlsSpec{arg.value_or(2), 2.5};
  else if (kind == "forest") spec = ForestSpec{arg.value_or(200), 5};
  else throw ConfigError("--regressor: unknown kind '" + kind + "' (expected linear, mls, forest or a JSON object)");
  validate(spec);
  return spec;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config: cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("--config: " + path + ": " + e.what());
  }
}

ExperimentSpec build_spec(Study study, const Flags& f, bool study_from_flags) {
  ExperimentSpec spec = ExperimentSpec::defaults(study);
  if (!f.config.empty()) {
    auto j = load_json_file(f.config);
    if (!j.is_object()) throw ConfigError("--config: top level must be a JSON object");
    if (!study_from_flags || !j.contains("study")) j["study"] = to_string(study);
    spec = experiment_from_json(j);
    if (spec.study != study && !study_from_flags) {
      throw ConfigError("study: config names study '" + to_string(spec.study) + "' but the subcommand runs '" +
                        to_string(study) + "'");
    }
  }
  if (f.given("--reps")) spec.repetitions = f.reps;
  if (f.given("--n")) spec.n = f.n;
  if (f.given("--m")) spec.m = f.m;
  if (f.given("--q")) spec.q = f.q;
  if (f.given("--seed")) spec.base_seed = f.seed;
  if (f.given("--threads")) spec.threads = f.threads;
  if (f.given("--regressor")) spec.regressor = parse_regressor(f.regressor);
  if (f.given("--threshold")) spec.threshold = f.threshold;
  if (f.given("--threshold-rule")) spec.threshold_rule = threshold_rule_from_string(f.threshold_rule);
  if (f.given("--alpha")) spec.alpha = f.alpha;
  if (f.given("--mu-list")) spec.mu_list = parse_list(f.mu_list, "--mu-list");
  if (f.given("--a-list")) spec.a_list = parse_list(f.a_list, "--a-list");
  if (f.given("--k-list")) spec.k_list = parse_list(f.k_list, "--k-list");
  if (f.given("--data")) spec.csv_path = f.data;
  if (f.given("--beta")) spec.beta = parse_list(f.beta, "--beta");
  spec.validate();
  return spec;
}

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("--out: cannot create output directory '" + out + "'");
  return dir;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw ConfigError("--out: cannot write '" + path.string() + "'");
  o << j.dump(2) << '\n';
}

void summarize(const std::vector<TrialRecord>& records, std::ostream& out) {
  std::vector<std::pair<double, std::string>> cells;
  for (const auto& r : records) {
    const std::pair<double, std::string> key{r.param, r.method};
    if (std::find(cells.begin(), cells.end(), key) == cells.end()) cells.push_back(key);
  }
  for (const auto& [param, method] : cells) {
    const auto errs = errors_for(records, param, method);
    out << records.front().study << " param=" << fmt(param) << " method=" << method << " reps=" << errs.size()
        << " median_abs_error=" << fmt(median(errs)) << " iqr=" << fmt(interquartile_range(errs)) << '\n';
  }
}

int run_experiment(Study study, const Flags& f, bool study_from_flags, std::ostream& out) {
  const auto spec = build_spec(study, f, study_from_flags);
  const auto dir = prepare_out_dir(f.out);
  const auto name = to_string(spec.study);
  if (spec.study == Study::FunctionClass) {
    auto result = run_function_class(spec);
    result.metadata["threads"] = resolve_threads(spec.threads);
    write_required_n(dir / (name + ".csv"), result.rows);
    write_json(dir / (name + ".meta.json"), result.metadata);
    for (const auto& r : result.rows) {
      out << name << " k=" << fmt(r.k) << " error_target=" << fmt(r.error_target) << " required_n=" << r.required_n
          << " median_abs_error=" << fmt(r.median_error) << (r.capped ? " (sweep cap reached)" : "") << '\n';
    }
    return kExitOk;
  }
  ExperimentResult result;
  switch (spec.study) {
    case Study::ShiftIntensity: result = run_shift_intensity(spec); break;
    case Study::SamplingStrategy: result = run_sampling_strategy(spec); break;
    case Study::MethodComparison: result = run_method_comparison(spec); break;
    case Study::TruncationStudy: result = run_truncation_study(spec); break;
    case Study::CsvProtocol: result = run_csv_protocol(spec); break;
    case Study::FunctionClass: break;
  }
  result.metadata["threads"] = resolve_threads(spec.threads);
  write_trial_records(dir / (name + ".csv"), result.records);
  write_json(dir / (name + ".meta.json"), result.metadata);
  summarize(result.records, out);
  return kExitOk;
}

int run_single_estimate(const Flags& f, std::ostream& out) {
  auto spec = build_spec(Study::CsvProtocol, f, false);
  const auto dir = prepare_out_dir(f.out);
  const auto labeled_table = read_numeric_csv(f.data);
  const auto unlabeled_table = read_numeric_csv(f.unlabeled);
  if (labeled_table.header.size() < 2) throw InputError(f.data + ": need feature columns plus a response column");
  const std::size_t d = labeled_table.header.size() - 1;
  if (unlabeled_table.header.size() != d) {
    throw InputError(f.unlabeled + ": expected " + std::to_string(d) + " feature columns, found " +
                     std::to_string(unlabeled_table.header.size()));
  }
  if (labeled_table.rows.size() < 2) throw InputError(f.data + ": need at least 2 labeled rows");
  if (unlabeled_table.rows.empty()) throw InputError(f.unlabeled + ": no data rows");

  auto rows = labeled_table.rows;
  rows.insert(rows.end(), unlabeled_table.rows.begin(), unlabeled_table.rows.end());
  const auto scaler = FeatureScaler::fit(rows, d);
  const auto labeled = to_labeled(labeled_table, scaler);
  const auto unlabeled = to_unlabeled(unlabeled_table, scaler);

  const auto ratio_model = fit_propensity(UnlabeledDataset{labeled.xs}, unlabeled, spec.propensity_degree);
  double b_hat = 0.0;
  for (std::size_t i = 0; i < labeled.size(); ++i) b_hat = std::max(b_hat, ratio_at(ratio_model, labeled.xs[i]));
  auto threshold = resolve_threshold(spec, b_hat, labeled.size());
  if (!threshold) threshold = b_hat;

  EstimatorConfig cfg;
  cfg.q = spec.q;
  cfg.threshold = threshold;
  cfg.regressor = spec.effective_regressor();
  Rng rng(spec.base_seed);
  const auto est = estimate_two_stage_plugin(labeled, unlabeled, cfg, ratio_model, rng);
  auto j = to_json(est);
  j["propensity_model"] = to_json(ratio_model);
  j["max_estimated_ratio"] = b_hat;
  write_json(dir / "estimate.json", j);
  out << j.dump(2) << '\n';
  return kExitOk;
}

int run_diagnose(const Flags& f, std::ostream& out) {
  struct Named {
    std::string label;
    SourceTargetPair pair;
  };
  std::vector<Named> pairs;
  nlohmann::json cfg;
  if (!f.config.empty()) cfg = load_json_file(f.config);
  auto density_arg = [&](const std::string& flag, const std::string& text, const char* key) -> std::optional<DensitySpec> {
    if (f.given(flag)) {
      try {
        return density_from_json(nlohmann::json::parse(text));
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(flag + ": " + e.what());
      }
    }
    if (cfg.is_object() && cfg.contains(key)) return density_from_json(cfg.at(key));
    return std::nullopt;
  };
  const auto source = density_arg("--source", f.source, "source");
  const auto target = density_arg("--target", f.target, "target");
  if (source || target) {
    if (!source || !target) throw ConfigError("diagnose: both source and target densities are required");
    pairs.push_back({"configured", SourceTargetPair(*source, *target)});
  } else if (f.given("--a-list")) {
    for (double a : parse_list(f.a_list, "--a-list")) {
      pairs.push_back({"poly(a=" + fmt(a) + ")->uniform", SourceTargetPair(DensitySpec::poly_family(a), DensitySpec::uniform())});
    }
  } else {
    const auto mus = f.given("--mu-list") ? parse_list(f.mu_list, "--mu-list") : std::vector<double>{0.2, 0.4, 0.6, 0.8};
    for (double mu : mus) {
      pairs.push_back({"tnorm(0.2,0.3)->tnorm(" + fmt(mu) + ",0.3)",
                       SourceTargetPair(DensitySpec::truncated_normal(0, 1, 0.2, 0.3), DensitySpec::truncated_normal(0, 1, mu, 0.3))});
    }
  }
  const auto dir = prepare_out_dir(f.out);
  nlohmann::json report = nlohmann::json::array();
  for (const auto& [label, pair] : pairs) {
    const double b = sup_ratio(pair);
    const auto bounds = density_bounds(pair.source());
    out << "pair=" << label << " B=" << fmt(b, "%.4f") << " b_upper=" << fmt(bounds.upper, "%.4f")
        << " b_lower=" << fmt(bounds.lower, "%.4f") << '\n';
    report.push_back({{"pair", label},
                      {"source", to_json(pair.source())},
                      {"target", to_json(pair.target())},
                      {"B", b},
                      {"b_upper", bounds.upper},
                      {"b_lower", bounds.lower}});
  }
  write_json(dir / "diagnose.json", report);
  return kExitOk;
}

void add_flags(CLI::App& app, Flags& f) {
  auto& o = f.opts;
  o["--config"] = app.add_option("--config", f.config, "JSON config mirroring the experiment spec");
  o["--out"] = app.add_option("--out", f.out, "Output directory (created if missing)");
  o["--study"] = app.add_option("--study", f.study, "simulate: shift | sampling");
  o["--reps"] = app.add_option("--reps", f.reps, "Replications per parameter value");
  o["--n"] = app.add_option("--n", f.n, "Labeled sample size");
  o["--m"] = app.add_option("--m", f.m, "Unlabeled sample size");
  o["--q"] = app.add_option("--q", f.q, "Moment order");
  o["--seed"] = app.add_option("--seed", f.seed, "Base seed; determines all randomness");
  o["--threads"] = app.add_option("--threads", f.threads, "Worker threads (fallback: SHIFTMOMENT_THREADS, then all cores)");
  o["--regressor"] = app.add_option("--regressor", f.regressor, "linear[:degree] | mls[:degree] | forest[:trees] | JSON object");
  o["--threshold"] = app.add_option("--threshold", f.threshold, "Fixed truncation threshold T");
  o["--threshold-rule"] = app.add_option("--threshold-rule", f.threshold_rule, "none | halfB | threeQuarterB | theory");
  o["--alpha"] = app.add_option("--alpha", f.alpha, "Tail exponent for the theory threshold rule");
  o["--mu-list"] = app.add_option("--mu-list", f.mu_list, "Comma-separated target means");
  o["--a-list"] = app.add_option("--a-list", f.a_list, "Comma-separated polynomial-family parameters");
  o["--k-list"] = app.add_option("--k-list", f.k_list, "Comma-separated smoothness parameters k");
  o["--data"] = app.add_option("--data", f.data, "Labeled CSV (features then response)");
  o["--unlabeled"] = app.add_option("--unlabeled", f.unlabeled, "Unlabeled target CSV (features only)");
  o["--beta"] = app.add_option("--beta", f.beta, "Comma-separated tilt vector for the CSV protocol");
  o["--source"] = app.add_option("--source", f.source, "diagnose: source density as JSON");
  o["--target"] = app.add_option("--target", f.target, "diagnose: target density as JSON");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Moment estimation under covariate shift.\n"
               "Precedence: built-in study defaults < --config file < command-line flags.",
               "shiftmoment"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  add_flags(app, f);
  auto* simulate = app.add_subcommand("simulate", "Shift-intensity or sampling-strategy study (--study shift|sampling)");
  auto* compare = app.add_subcommand("compare", "MC vs one-stage vs truncated two-stage comparison");
  auto* truncation = app.add_subcommand("truncation", "Truncated vs untruncated two-stage estimator");
  auto* function_class = app.add_subcommand("function-class", "Required sample size vs smoothness sweep");
  auto* estimate = app.add_subcommand("estimate", "CSV protocol (--data) or single plug-in estimate (--data --unlabeled)");
  auto* diagnose = app.add_subcommand("diagnose", "Print B, b_upper, b_lower for a source/target pair");

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (simulate->parsed()) {
      const Study study = f.given("--study") ? study_from_string(f.study) : Study::ShiftIntensity;
      if (study != Study::ShiftIntensity && study != Study::SamplingStrategy) {
        throw ConfigError("--study: simulate runs 'shift' or 'sampling'");
      }
      return run_experiment(study, f, true, out);
    }
    if (compare->parsed()) return run_experiment(Study::MethodComparison, f, false, out);
    if (truncation->parsed()) return run_experiment(Study::TruncationStudy, f, false, out);
    if (function_class->parsed()) return run_experiment(Study::FunctionClass, f, false, out);
    if (estimate->parsed()) {
      if (!f.given("--data")) throw ConfigError("--data: estimate requires a labeled CSV");
      if (f.given("--unlabeled")) return run_single_estimate(f, out);
      return run_experiment(Study::CsvProtocol, f, false, out);
    }
    if (diagnose->parsed()) return run_diagnose(f, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DegeneratePairError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace shiftmoment
