#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "shiftmoment/experiments.hpp"
#include "shiftmoment/ratio_estimation.hpp"
#include "shiftmoment/regressors.hpp"

namespace shiftmoment {

/// Numeric table with a header row.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Parses a comma-separated file with a header row. Throws InputError naming
/// the path, row and column on malformed input.
NumericTable read_numeric_csv(const std::filesystem::path& path);

/// Min-max scaling of feature columns into [0,1]; constant columns map to 0.
struct FeatureScaler {
  std::vector<double> lo;
  std::vector<double> hi;

  static FeatureScaler fit(const std::vector<std::vector<double>>& rows, std::size_t columns);
  std::vector<double> apply(const std::vector<double>& row) const;
};

/// Splits a table whose last column is the response into a labeled dataset,
/// scaling features with `scaler`.
LabeledDataset to_labeled(const NumericTable& table, const FeatureScaler& scaler);
UnlabeledDataset to_unlabeled(const NumericTable& table, const FeatureScaler& scaler);

inline constexpr const char* kTrialHeader = "study,param,method,rep,estimate,truth,abs_error";

void write_trial_records(std::ostream& out, const std::vector<TrialRecord>& records);
void write_trial_records(const std::filesystem::path& path, const std::vector<TrialRecord>& records);

void write_required_n(const std::filesystem::path& path, const std::vector<RequiredSampleSize>& rows);

}  // namespace shiftmoment
