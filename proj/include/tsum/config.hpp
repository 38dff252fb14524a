#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tsum/cohort.hpp"
#include "tsum/predictor.hpp"
#include "tsum/synth.hpp"

namespace tsum {

/// Ordered key=value pairs; later entries override earlier ones.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses the flat config format: one `key = value` per line, `#` starts a
/// comment, blank lines ignored. Throws UsageError on a malformed line.
KeyValues parse_config(const std::string& text, const std::string& source = "config");
KeyValues read_config_file(const std::filesystem::path& path);

struct CsvSource {
  std::filesystem::path timeseries;
  std::filesystem::path statics;
  std::filesystem::path labels;
  IngestOptions options;
};

struct GradcheckOptions {
  std::size_t num_examples = 8;
  std::size_t num_vars = 3;
  std::size_t num_hours = 12;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::size_t num_coeffs = 32;
};

struct RunConfig {
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  double test_fraction = 0.2;
  std::filesystem::path out = "out";

  // Exactly one data source for commands that read a cohort.
  std::optional<CsvSource> csv;
  std::optional<SynthSpec> synth;

  std::filesystem::path checkpoint;
  std::vector<std::size_t> n_list{1, 2, 5, 10, 15, 20, 30, 50};
  std::size_t top_k = 15;
  GradcheckOptions gradcheck;

  /// Throws UsageError if both or (when `need_data`) neither source is set.
  void check_source(bool need_data) const;
};

/// Builds a RunConfig from defaults overridden by `values` in order. Unknown
/// keys and unparsable values raise UsageError.
RunConfig build_run_config(const KeyValues& values);

/// Every recognised key with its meaning, for `--help` and the README.
std::vector<std::pair<std::string, std::string>> config_keys();

}  // namespace tsum
