#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tsum {

/// Dense storage shared by raw and imputed cohorts.
///
/// Series are laid out example-major, then variable, then hour, so the
/// hourly series of one (example, variable) pair is contiguous. Hours are
/// stored 0-based; hour index `h` corresponds to clock hour `h + 1`.
struct CohortArrays {
  std::size_t num_examples = 0;
  std::size_t num_vars = 0;
  std::size_t num_hours = 0;

  std::vector<double> x;          // N * D * T
  std::vector<std::uint8_t> m;    // N * D * T, 1 where measured
  std::vector<double> s;          // N * P
  std::vector<std::uint8_t> y;    // N

  std::vector<std::string> patient_ids;
  std::vector<std::string> variable_names;
  std::vector<std::string> static_names;

  std::size_t num_static() const { return static_names.size(); }

  std::size_t offset(std::size_t n, std::size_t d) const {
    return (n * num_vars + d) * num_hours;
  }

  std::span<const double> series(std::size_t n, std::size_t d) const {
    return {x.data() + offset(n, d), num_hours};
  }
  std::span<double> series(std::size_t n, std::size_t d) {
    return {x.data() + offset(n, d), num_hours};
  }
  std::span<const std::uint8_t> mask(std::size_t n, std::size_t d) const {
    return {m.data() + offset(n, d), num_hours};
  }
  std::span<const double> statics(std::size_t n) const {
    return {s.data() + n * num_static(), num_static()};
  }

  /// Throws DataError if the array sizes disagree with the dimensions.
  void check_shape() const;
};

/// Cohort as read from disk: x is NaN wherever m is 0.
struct RawCohort : CohortArrays {};

/// Imputed cohort. Every x entry is defined; entries with m == 0 hold the
/// carry-forward or median fill value.
struct ClinicalBatch : CohortArrays {};

struct NormalizationStats {
  std::vector<double> mean;               // D, over measured entries
  std::vector<double> std;                // D, population convention, floored
  std::vector<double> static_mean;        // P
  std::vector<double> static_std;         // P
  std::vector<double> population_median;  // D, raw units
  std::vector<std::string> warnings;
};

inline constexpr double kStdFloor = 1e-6;

struct IngestOptions {
  std::size_t hours = 24;
  /// Static columns holding categories; one-hot encoded as "<column>=<value>".
  std::vector<std::string> categorical;
  /// Declared variable set. Empty means "discover from the file, sorted".
  std::vector<std::string> variables;
  /// Expected encoded static columns (e.g. from a checkpoint). Empty means
  /// "derive from the file".
  std::vector<std::string> static_names;
};

RawCohort ingest_csv(const std::filesystem::path& timeseries_path,
                     const std::filesystem::path& static_path,
                     const std::filesystem::path& labels_path,
                     const IngestOptions& options);

/// Per-variable median of the measured entries (0 for never-measured).
std::vector<double> measured_medians(const CohortArrays& cohort);

ClinicalBatch impute(const RawCohort& raw, std::span<const double> population_median);

/// Re-applies the carry-forward rule to an already imputed batch. Idempotent.
ClinicalBatch impute(const ClinicalBatch& batch, std::span<const double> population_median);

NormalizationStats fit_normalization(const ClinicalBatch& train);

ClinicalBatch apply_normalization(ClinicalBatch batch, const NormalizationStats& stats);
ClinicalBatch denormalize(ClinicalBatch batch, const NormalizationStats& stats);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified, seeded patient-level split. Both index lists are ascending.
SplitIndices split_by_patient(std::span<const std::uint8_t> labels, double test_fraction,
                              std::uint64_t seed);

template <class Cohort>
Cohort subset(const Cohort& cohort, std::span<const std::size_t> rows);

/// Inverse class-frequency weights, N / (2 * count(y == y_n)).
std::vector<double> class_weights(std::span<const std::uint8_t> labels);

}  // namespace tsum
