#include "shiftmoment/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "shiftmoment/errors.hpp"

namespace shiftmoment {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// %.17g round-trips doubles; the output is locale-independent for the "C"
// numeric conventions used here.
std::string format_double(double v, int digits = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(path.string() + ": cannot open file");
  NumericTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (table.header.empty()) {
      for (const auto& c : split_line(line)) table.header.push_back(trim(c));
      continue;
    }
    const auto cells = split_line(line);
    if (cells.size() != table.header.size()) {
      throw InputError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(table.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto text = trim(cells[c]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw InputError(path.string() + ": row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) + " ('" +
                         table.header[c] + "'): non-numeric value '" + text + "'");
      }
      row[c] = v;
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw InputError(path.string() + ": missing header row");
  return table;
}

FeatureScaler FeatureScaler::fit(const std::vector<std::vector<double>>& rows, std::size_t columns) {
  FeatureScaler s;
  s.lo.assign(columns, std::numeric_limits<double>::infinity());
  s.hi.assign(columns, -std::numeric_limits<double>::infinity());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < columns; ++j) {
      s.lo[j] = std::min(s.lo[j], r[j]);
      s.hi[j] = std::max(s.hi[j], r[j]);
    }
  }
  return s;
}

std::vector<double> FeatureScaler::apply(const std::vector<double>& row) const {
  std::vector<double> out(lo.size());
  for (std::size_t j = 0; j < lo.size(); ++j) {
    const double span = hi[j] - lo[j];
    out[j] = span > 0.0 ? std::clamp((row[j] - lo[j]) / span, 0.0, 1.0) : 0.0;
  }
  return out;
}

LabeledDataset to_labeled(const NumericTable& table, const FeatureScaler& scaler) {
  const std::size_t d = scaler.lo.size();
  if (table.header.size() != d + 1) {
    throw InputError("labeled CSV: expected " + std::to_string(d) + " feature columns plus a response column");
  }
  LabeledDataset out{PointSet(d), {}};
  out.xs.reserve(table.rows.size());
  for (const auto& r : table.rows) {
    out.xs.push_back(scaler.apply(r));
    out.ys.push_back(r[d]);
  }
  return out;
}

UnlabeledDataset to_unlabeled(const NumericTable& table, const FeatureScaler& scaler) {
  const std::size_t d = scaler.lo.size();
  if (table.header.size() != d) {
    throw InputError("unlabeled CSV: expected " + std::to_string(d) + " feature columns, found " +
                     std::to_string(table.header.size()));
  }
  UnlabeledDataset out{PointSet(d)};
  out.xs.reserve(table.rows.size());
  for (const auto& r : table.rows) out.xs.push_back(scaler.apply(r));
  return out;
}

void write_trial_records(std::ostream& out, const std::vector<TrialRecord>& records) {
  out << kTrialHeader << '\n';
  for (const auto& r : records) {
    out << r.study << ',' << format_double(r.param, 10) << ',' << r.method << ',' << r.rep << ','
        << format_double(r.estimate) << ',' << format_double(r.truth) << ',' << format_double(r.abs_error) << '\n';
  }
}

void write_trial_records(const std::filesystem::path& path, const std::vector<TrialRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot open for writing");
  write_trial_records(out, records);
}

void write_required_n(const std::filesystem::path& path, const std::vector<RequiredSampleSize>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(path.string() + ": cannot open for writing");
  out << "k,error_target,required_n,median_error,capped\n";
  for (const auto& r : rows) {
    out << format_double(r.k, 10) << ',' << format_double(r.error_target, 10) << ',' << r.required_n << ','
        << format_double(r.median_error) << ',' << (r.capped ? 1 : 0) << '\n';
  }
}

}  // namespace shiftmoment
