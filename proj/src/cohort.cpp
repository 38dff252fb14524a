#include "tsum/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>

#include "tsum/errors.hpp"

namespace tsum {

namespace {

using Kind = DataError::Kind;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_double(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_long(std::string_view text, long& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

/// Reads a CSV file, checks the header, and hands each data row to `on_row`
/// together with its 1-based line number. Blank lines are skipped.
template <class OnHeader, class OnRow>
void read_csv(const std::filesystem::path& path, OnHeader on_header, OnRow on_row) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(Kind::missing, "cannot open " + path.string());
  }
  const std::string name = path.filename().string();
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (lineno == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    if (trim(view).empty()) continue;
    auto fields = split_fields(view);
    if (!have_header) {
      on_header(fields, name, lineno);
      have_header = true;
      continue;
    }
    on_row(fields, name, lineno);
  }
  if (!have_header) {
    throw ParseError(name, 1, "empty file, expected a header");
  }
}

void expect_header(std::span<const std::string_view> got,
                   std::span<const std::string_view> want, const std::string& file) {
  bool ok = got.size() == want.size();
  for (std::size_t i = 0; ok && i < want.size(); ++i) ok = got[i] == want[i];
  if (!ok) {
    std::string expected;
    for (auto w : want) expected += (expected.empty() ? "" : ",") + std::string(w);
    throw ParseError(file, 1, "bad header, expected '" + expected + "'");
  }
}

double median_of(std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

void carry_forward(std::span<double> x, std::span<const std::uint8_t> m, double fill) {
  double last = fill;
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (m[t]) {
      last = x[t];
    } else {
      x[t] = last;
    }
  }
}

template <class Cohort>
ClinicalBatch impute_impl(const Cohort& in, std::span<const double> median) {
  in.check_shape();
  if (median.size() != in.num_vars) {
    throw DataError(Kind::shape, "population median has " + std::to_string(median.size()) +
                                     " entries, expected " + std::to_string(in.num_vars));
  }
  ClinicalBatch out;
  static_cast<CohortArrays&>(out) = in;
  for (std::size_t n = 0; n < out.num_examples; ++n) {
    for (std::size_t d = 0; d < out.num_vars; ++d) {
      carry_forward(out.series(n, d), out.mask(n, d), median[d]);
    }
  }
  return out;
}

}  // namespace

void CohortArrays::check_shape() const {
  const std::size_t cells = num_examples * num_vars * num_hours;
  if (x.size() != cells || m.size() != cells || y.size() != num_examples ||
      s.size() != num_examples * num_static() || variable_names.size() != num_vars ||
      (!patient_ids.empty() && patient_ids.size() != num_examples)) {
    throw DataError(Kind::shape, "cohort arrays do not match dimensions N=" +
                                     std::to_string(num_examples) + " D=" +
                                     std::to_string(num_vars) + " T=" + std::to_string(num_hours));
  }
}

RawCohort ingest_csv(const std::filesystem::path& timeseries_path,
                     const std::filesystem::path& static_path,
                     const std::filesystem::path& labels_path, const IngestOptions& options) {
  if (options.hours == 0) throw DataError(Kind::range, "hours must be positive");
  RawCohort cohort;
  cohort.num_hours = options.hours;

  // Labels define the patient set and its order.
  std::unordered_map<std::string, std::size_t> patient_row;
  read_csv(
      labels_path,
      [](auto& fields, const std::string& file, std::size_t) {
        constexpr std::string_view want[] = {"patient_id", "label"};
        expect_header(fields, want, file);
      },
      [&](auto& fields, const std::string& file, std::size_t line) {
        if (fields.size() != 2) throw ParseError(file, line, "expected 2 fields");
        const std::string id(fields[0]);
        if (id.empty()) throw ParseError(file, line, "empty patient_id");
        if (fields[1] != "0" && fields[1] != "1") {
          throw ParseError(file, line, "label must be 0 or 1, got '" + std::string(fields[1]) + "'");
        }
        if (!patient_row.emplace(id, cohort.patient_ids.size()).second) {
          throw DataError(Kind::conflict,
                          file + ":" + std::to_string(line) + ": duplicate patient '" + id + "'");
        }
        cohort.patient_ids.push_back(id);
        cohort.y.push_back(fields[1] == "1" ? 1 : 0);
      });
  cohort.num_examples = cohort.patient_ids.size();
  if (cohort.num_examples == 0) throw DataError(Kind::size, "labels file has no patients");

  // Static columns, with categorical ones expanded after all rows are seen.
  std::vector<std::string> columns;
  std::vector<bool> is_categorical;
  std::vector<std::vector<std::string>> cells(cohort.num_examples);
  std::vector<std::size_t> static_line(cohort.num_examples, 0);
  read_csv(
      static_path,
      [&](auto& fields, const std::string& file, std::size_t) {
        if (fields.empty() || fields[0] != "patient_id") {
          throw ParseError(file, 1, "bad header, expected 'patient_id,...'");
        }
        for (std::size_t i = 1; i < fields.size(); ++i) {
          columns.emplace_back(fields[i]);
          is_categorical.push_back(std::find(options.categorical.begin(), options.categorical.end(),
                                             columns.back()) != options.categorical.end());
        }
        for (const auto& c : options.categorical) {
          if (std::find(columns.begin(), columns.end(), c) == columns.end()) {
            throw DataError(Kind::schema, file + ": categorical column '" + c + "' not in header");
          }
        }
      },
      [&](auto& fields, const std::string& file, std::size_t line) {
        if (fields.size() != columns.size() + 1) {
          throw ParseError(file, line, "expected " + std::to_string(columns.size() + 1) + " fields");
        }
        const auto it = patient_row.find(std::string(fields[0]));
        if (it == patient_row.end()) {
          throw DataError(Kind::schema, file + ":" + std::to_string(line) + ": patient '" +
                                            std::string(fields[0]) + "' has no label");
        }
        if (static_line[it->second] != 0) {
          throw DataError(Kind::conflict, file + ": duplicate static rows for patient '" +
                                              std::string(fields[0]) + "' at lines " +
                                              std::to_string(static_line[it->second]) + " and " +
                                              std::to_string(line));
        }
        static_line[it->second] = line;
        auto& row = cells[it->second];
        for (std::size_t i = 1; i < fields.size(); ++i) {
          double v = 0.0;
          if (!is_categorical[i - 1] && !parse_double(fields[i], v)) {
            throw ParseError(file, line, "column '" + columns[i - 1] + "': not a number '" +
                                             std::string(fields[i]) + "'");
          }
          row.emplace_back(fields[i]);
        }
      });
  for (std::size_t n = 0; n < cohort.num_examples; ++n) {
    if (static_line[n] == 0) {
      throw DataError(Kind::missing, "patient '" + cohort.patient_ids[n] + "' has no static row");
    }
  }

  // Encoded column list: (source column, category or empty for numeric).
  std::vector<std::pair<std::size_t, std::string>> encoded;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (!is_categorical[c]) {
      encoded.emplace_back(c, std::string());
      continue;
    }
    std::set<std::string> levels;
    if (options.static_names.empty()) {
      for (const auto& row : cells) levels.insert(row[c]);
    } else {
      const std::string prefix = columns[c] + "=";
      for (const auto& name : options.static_names) {
        if (name.starts_with(prefix)) levels.insert(name.substr(prefix.size()));
      }
      for (std::size_t n = 0; n < cells.size(); ++n) {
        if (!levels.contains(cells[n][c])) {
          throw DataError(Kind::schema, "static column '" + columns[c] + "': unseen category '" +
                                            cells[n][c] + "' for patient '" +
                                            cohort.patient_ids[n] + "'");
        }
      }
    }
    for (const auto& level : levels) encoded.emplace_back(c, level);
  }
  for (const auto& [c, level] : encoded) {
    cohort.static_names.push_back(level.empty() ? columns[c] : columns[c] + "=" + level);
  }
  if (!options.static_names.empty() && cohort.static_names != options.static_names) {
    throw DataError(Kind::schema, "static columns do not match the expected schema");
  }
  const std::size_t p = cohort.static_names.size();
  cohort.s.assign(cohort.num_examples * p, 0.0);
  for (std::size_t n = 0; n < cohort.num_examples; ++n) {
    for (std::size_t j = 0; j < p; ++j) {
      const auto& [c, level] = encoded[j];
      double v = 0.0;
      if (level.empty()) {
        parse_double(cells[n][c], v);
      } else {
        v = cells[n][c] == level ? 1.0 : 0.0;
      }
      cohort.s[n * p + j] = v;
    }
  }

  // Long-format series rows.
  struct Record {
    std::size_t patient, hour;
    std::string variable;
    double value;
    std::size_t line;
  };
  std::vector<Record> records;
  std::set<std::string> seen_vars;
  const std::set<std::string> declared(options.variables.begin(), options.variables.end());
  read_csv(
      timeseries_path,
      [](auto& fields, const std::string& file, std::size_t) {
        constexpr std::string_view want[] = {"patient_id", "variable", "hour", "value"};
        expect_header(fields, want, file);
      },
      [&](auto& fields, const std::string& file, std::size_t line) {
        if (fields.size() != 4) throw ParseError(file, line, "expected 4 fields");
        const auto it = patient_row.find(std::string(fields[0]));
        if (it == patient_row.end()) {
          throw DataError(Kind::schema, file + ":" + std::to_string(line) + ": patient '" +
                                            std::string(fields[0]) + "' has no label");
        }
        std::string variable(fields[1]);
        if (variable.empty()) throw ParseError(file, line, "empty variable name");
        if (!declared.empty() && !declared.contains(variable)) {
          throw DataError(Kind::schema,
                          file + ":" + std::to_string(line) + ": unknown variable '" + variable + "'");
        }
        long hour = 0;
        if (!parse_long(fields[2], hour)) {
          throw ParseError(file, line, "hour is not an integer: '" + std::string(fields[2]) + "'");
        }
        if (hour < 1 || hour > static_cast<long>(options.hours)) {
          throw DataError(Kind::range, file + ":" + std::to_string(line) + ": hour " +
                                           std::to_string(hour) + " outside [1, " +
                                           std::to_string(options.hours) + "]");
        }
        double value = 0.0;
        if (!parse_double(fields[3], value)) {
          throw ParseError(file, line, "value is not a number: '" + std::string(fields[3]) + "'");
        }
        seen_vars.insert(variable);
        records.push_back({it->second, static_cast<std::size_t>(hour - 1), std::move(variable),
                           value, line});
      });

  if (!options.variables.empty()) {
    cohort.variable_names = options.variables;
  } else {
    cohort.variable_names.assign(seen_vars.begin(), seen_vars.end());
  }
  cohort.num_vars = cohort.variable_names.size();
  std::unordered_map<std::string, std::size_t> var_index;
  for (std::size_t d = 0; d < cohort.num_vars; ++d) var_index[cohort.variable_names[d]] = d;

  const std::size_t cells_total = cohort.num_examples * cohort.num_vars * cohort.num_hours;
  cohort.x.assign(cells_total, std::numeric_limits<double>::quiet_NaN());
  cohort.m.assign(cells_total, 0);
  std::vector<std::size_t> first_line(cells_total, 0);
  std::vector<bool> has_rows(cohort.num_examples, false);
  const std::string ts_name = timeseries_path.filename().string();
  for (const auto& r : records) {
    const std::size_t at = cohort.offset(r.patient, var_index.at(r.variable)) + r.hour;
    if (first_line[at] != 0) {
      throw DataError(Kind::conflict, ts_name + ": duplicate (" + cohort.patient_ids[r.patient] +
                                          ", " + r.variable + ", " + std::to_string(r.hour + 1) +
                                          ") at lines " + std::to_string(first_line[at]) +
                                          " and " + std::to_string(r.line));
    }
    first_line[at] = r.line;
    cohort.x[at] = r.value;
    cohort.m[at] = 1;
    has_rows[r.patient] = true;
  }
  for (std::size_t n = 0; n < cohort.num_examples; ++n) {
    if (!has_rows[n]) {
      throw DataError(Kind::missing,
                      "patient '" + cohort.patient_ids[n] + "' has no time-series rows");
    }
  }
  return cohort;
}

std::vector<double> measured_medians(const CohortArrays& cohort) {
  std::vector<double> out(cohort.num_vars, 0.0);
  std::vector<double> buffer;
  for (std::size_t d = 0; d < cohort.num_vars; ++d) {
    buffer.clear();
    for (std::size_t n = 0; n < cohort.num_examples; ++n) {
      const auto x = cohort.series(n, d);
      const auto m = cohort.mask(n, d);
      for (std::size_t t = 0; t < cohort.num_hours; ++t) {
        if (m[t]) buffer.push_back(x[t]);
      }
    }
    out[d] = median_of(buffer);
  }
  return out;
}

ClinicalBatch impute(const RawCohort& raw, std::span<const double> population_median) {
  return impute_impl(raw, population_median);
}

ClinicalBatch impute(const ClinicalBatch& batch, std::span<const double> population_median) {
  return impute_impl(batch, population_median);
}

NormalizationStats fit_normalization(const ClinicalBatch& train) {
  train.check_shape();
  if (train.num_examples < 2) {
    throw DataError(Kind::size, "normalization needs at least 2 training examples");
  }
  NormalizationStats stats;
  const std::size_t D = train.num_vars;
  const std::size_t P = train.num_static();
  stats.mean.assign(D, 0.0);
  stats.std.assign(D, kStdFloor);
  stats.population_median = measured_medians(train);
  for (std::size_t d = 0; d < D; ++d) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < train.num_examples; ++n) {
      const auto x = train.series(n, d);
      const auto m = train.mask(n, d);
      for (std::size_t t = 0; t < train.num_hours; ++t) {
        if (m[t]) {
          sum += x[t];
          ++count;
        }
      }
    }
    if (count == 0) {
      stats.warnings.push_back("variable '" + train.variable_names[d] +
                               "' is never measured in the training split");
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t n = 0; n < train.num_examples; ++n) {
      const auto x = train.series(n, d);
      const auto m = train.mask(n, d);
      for (std::size_t t = 0; t < train.num_hours; ++t) {
        if (m[t]) ss += (x[t] - mean) * (x[t] - mean);
      }
    }
    stats.mean[d] = mean;
    stats.std[d] = std::max(std::sqrt(ss / static_cast<double>(count)), kStdFloor);
  }
  stats.static_mean.assign(P, 0.0);
  stats.static_std.assign(P, kStdFloor);
  const double rows = static_cast<double>(train.num_examples);
  for (std::size_t j = 0; j < P; ++j) {
    double sum = 0.0;
    for (std::size_t n = 0; n < train.num_examples; ++n) sum += train.s[n * P + j];
    const double mean = sum / rows;
    double ss = 0.0;
    for (std::size_t n = 0; n < train.num_examples; ++n) {
      const double dev = train.s[n * P + j] - mean;
      ss += dev * dev;
    }
    stats.static_mean[j] = mean;
    stats.static_std[j] = std::max(std::sqrt(ss / rows), kStdFloor);
  }
  return stats;
}

namespace {

void check_stats(const CohortArrays& batch, const NormalizationStats& stats) {
  batch.check_shape();
  if (stats.mean.size() != batch.num_vars || stats.std.size() != batch.num_vars ||
      stats.static_mean.size() != batch.num_static() ||
      stats.static_std.size() != batch.num_static()) {
    throw DataError(Kind::shape, "normalization stats do not match batch dimensions");
  }
}

}  // namespace

ClinicalBatch apply_normalization(ClinicalBatch batch, const NormalizationStats& stats) {
  check_stats(batch, stats);
  const std::size_t P = batch.num_static();
  for (std::size_t n = 0; n < batch.num_examples; ++n) {
    for (std::size_t d = 0; d < batch.num_vars; ++d) {
      for (double& v : batch.series(n, d)) v = (v - stats.mean[d]) / stats.std[d];
    }
    for (std::size_t j = 0; j < P; ++j) {
      double& v = batch.s[n * P + j];
      v = (v - stats.static_mean[j]) / stats.static_std[j];
    }
  }
  return batch;
}

ClinicalBatch denormalize(ClinicalBatch batch, const NormalizationStats& stats) {
  check_stats(batch, stats);
  const std::size_t P = batch.num_static();
  for (std::size_t n = 0; n < batch.num_examples; ++n) {
    for (std::size_t d = 0; d < batch.num_vars; ++d) {
      for (double& v : batch.series(n, d)) v = v * stats.std[d] + stats.mean[d];
    }
    for (std::size_t j = 0; j < P; ++j) {
      double& v = batch.s[n * P + j];
      v = v * stats.static_std[j] + stats.static_mean[j];
    }
  }
  return batch;
}

SplitIndices split_by_patient(std::span<const std::uint8_t> labels, double test_fraction,
                              std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DataError(Kind::range, "test_fraction must lie in (0, 1)");
  }
  const std::size_t total = labels.size();
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(total)));
  if (n_test == 0 || n_test >= total) {
    throw DataError(Kind::size, "cohort of " + std::to_string(total) +
                                    " patients is too small for test_fraction " +
                                    std::to_string(test_fraction));
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < total; ++i) (labels[i] ? pos : neg).push_back(i);

  std::size_t n_test_pos = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(pos.size())));
  n_test_pos = std::min({n_test_pos, pos.size(), n_test});
  std::size_t n_test_neg = n_test - n_test_pos;
  if (n_test_neg > neg.size()) {
    n_test_neg = neg.size();
    n_test_pos = n_test - n_test_neg;
  }

  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);

  SplitIndices out;
  out.test.insert(out.test.end(), pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_test_pos));
  out.test.insert(out.test.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_test_neg));
  out.train.insert(out.train.end(), pos.begin() + static_cast<std::ptrdiff_t>(n_test_pos), pos.end());
  out.train.insert(out.train.end(), neg.begin() + static_cast<std::ptrdiff_t>(n_test_neg), neg.end());
  std::sort(out.test.begin(), out.test.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

template <class Cohort>
Cohort subset(const Cohort& cohort, std::span<const std::size_t> rows) {
  cohort.check_shape();
  Cohort out;
  out.num_examples = rows.size();
  out.num_vars = cohort.num_vars;
  out.num_hours = cohort.num_hours;
  out.variable_names = cohort.variable_names;
  out.static_names = cohort.static_names;
  const std::size_t block = cohort.num_vars * cohort.num_hours;
  const std::size_t P = cohort.num_static();
  out.x.reserve(rows.size() * block);
  out.m.reserve(rows.size() * block);
  for (const std::size_t r : rows) {
    if (r >= cohort.num_examples) throw DataError(Kind::range, "row index out of range");
    const auto first = static_cast<std::ptrdiff_t>(r * block);
    const auto last = first + static_cast<std::ptrdiff_t>(block);
    out.x.insert(out.x.end(), cohort.x.begin() + first, cohort.x.begin() + last);
    out.m.insert(out.m.end(), cohort.m.begin() + first, cohort.m.begin() + last);
    const auto s_first = static_cast<std::ptrdiff_t>(r * P);
    out.s.insert(out.s.end(), cohort.s.begin() + s_first,
                 cohort.s.begin() + s_first + static_cast<std::ptrdiff_t>(P));
    out.y.push_back(cohort.y[r]);
    if (!cohort.patient_ids.empty()) out.patient_ids.push_back(cohort.patient_ids[r]);
  }
  return out;
}

template RawCohort subset(const RawCohort&, std::span<const std::size_t>);
template ClinicalBatch subset(const ClinicalBatch&, std::span<const std::size_t>);

std::vector<double> class_weights(std::span<const std::uint8_t> labels) {
  std::size_t positives = 0;
  for (auto v : labels) positives += v ? 1 : 0;
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError(Kind::size, "class weights need both classes present");
  }
  const double total = static_cast<double>(labels.size());
  const double w_pos = total / (2.0 * static_cast<double>(positives));
  const double w_neg = total / (2.0 * static_cast<double>(negatives));
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] ? w_pos : w_neg;
  return out;
}

}  // namespace tsum
