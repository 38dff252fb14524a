#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsum/cohort.hpp"
#include "tsum/predictor.hpp"
#include "tsum/summaries.hpp"

namespace tsum {

inline constexpr int kCheckpointVersion = 1;

/// Everything needed to score a new cohort with a trained model.
struct Checkpoint {
  ModelMode mode = ModelMode::relaxed;
  SummaryParams summary_params;
  ModelParams model_params;
  NormalizationStats stats;
  TrainConfig config;
  std::vector<std::string> variable_names;
  std::vector<std::string> static_names;
  std::vector<std::string> categorical;  // raw categorical static columns
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

/// JSON document with fields version, D, I, P, T, feature_names, coeffs, bias,
/// C, phi_plus, phi_minus, tau_temp, normalization, config, seed (plus mode,
/// variable and static names).
std::string checkpoint_to_json(const Checkpoint& checkpoint);

/// Throws FormatError naming the first missing or malformed field, or on a
/// version mismatch.
Checkpoint checkpoint_from_json(const std::string& text);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tsum
