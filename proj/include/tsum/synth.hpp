#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsum/cohort.hpp"
#include "tsum/summaries.hpp"

namespace tsum {

/// Slope of `variable` over its last `window` hours is proportional to the
/// latent acuity z. Before the window the series drifts independently of z.
struct TrendSignal {
  std::size_t variable = 0;
  std::size_t window = 8;
  double weight = 2.5;
  double slope_scale = 0.15;  // normalized units per hour per unit z
};

/// Inside its last `window` hours `variable` is centred at shift * z, so the
/// fraction of hours above `level` grows with z.
struct ThresholdSignal {
  std::size_t variable = 1;
  double level = 65.0;  // raw units
  std::size_t window = 12;
  double weight = 1.5;
  double shift = 1.0;
};

/// Measurement rate of `variable` is p_obs * (1 + (r - 1) * sigmoid(z)), capped at 1.
struct MissingnessSignal {
  std::size_t variable = 2;
  double rate_multiplier = 2.5;
  double weight = 1.0;
};

struct SynthSpec {
  std::size_t num_examples = 4000;
  std::size_t num_vars = 6;
  std::size_t num_hours = 24;
  std::size_t num_static = 2;  // raw columns: age, sex, then numeric extras
  double prevalence = 0.15;
  TrendSignal trend;
  ThresholdSignal threshold;
  MissingnessSignal missingness;
  double p_obs = 0.4;
  double noise = 1.0;  // stationary std of the AR(1) noise, normalized units
  std::uint64_t seed = 0;

  /// Throws DataError on an invalid spec.
  void validate() const;
};

inline constexpr double kArCoefficient = 0.8;
inline constexpr std::size_t kPilotSamples = 10000;

/// Raw-unit location and scale of variable d: values are mean + scale * u.
double variable_location(std::size_t d);
double variable_scale(std::size_t d);

struct PlantedSignal {
  std::string variable;
  std::size_t variable_index = 0;
  SummaryKind summary = SummaryKind::slope;
  std::optional<std::size_t> window;  // unset: any window
  double weight = 0.0;

  bool operator==(const PlantedSignal&) const = default;
};

struct GroundTruth {
  std::uint64_t seed = 0;
  std::size_t num_hours = 0;
  std::vector<std::string> variable_names;
  std::vector<PlantedSignal> signals;  // trend, threshold, missingness
  double intercept = 0.0;
  double prevalence_target = 0.0;
  double prevalence_realized = 0.0;

  bool operator==(const GroundTruth&) const = default;
};

struct SynthCohort {
  RawCohort cohort;
  GroundTruth truth;
};

/// Deterministic in spec.seed. Throws DataError when the prevalence target
/// cannot be reached by any intercept.
SynthCohort generate(const SynthSpec& spec);

/// Planted signals with nonzero weight, in (trend, threshold, missingness) order.
std::vector<PlantedSignal> describe_ground_truth(const GroundTruth& truth);

std::string truth_to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const std::string& text);

/// Writes timeseries.csv, static.csv and labels.csv into `dir`. Static
/// columns named "<col>=<value>" are folded back into one categorical column.
void write_cohort_csv(const RawCohort& cohort, const std::filesystem::path& dir);

}  // namespace tsum
