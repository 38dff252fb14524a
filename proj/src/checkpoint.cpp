#include "tsum/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tsum/errors.hpp"

namespace tsum {

namespace {

using Json = nlohmann::ordered_json;

Json optional_to_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

/// Reads `key` from `j` as T, reporting the full dotted path on failure.
template <class T>
T field(const Json& j, const std::string& key, const std::string& path = "") {
  const std::string where = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError("checkpoint: missing field '" + where + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("checkpoint: malformed field '" + where + "'");
  }
}

std::optional<double> optional_field(const Json& j, const std::string& key,
                                     const std::string& path) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return field<double>(j, key, path);
}

void require_size(std::size_t got, std::size_t want, const std::string& name) {
  if (got != want) {
    throw FormatError("checkpoint: field '" + name + "' has " + std::to_string(got) +
                      " entries, expected " + std::to_string(want));
  }
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ck) {
  const auto& sp = ck.summary_params;
  const auto& mp = ck.model_params;
  Json j;
  j["version"] = kCheckpointVersion;
  j["mode"] = std::string(mode_name(ck.mode));
  j["D"] = sp.num_vars;
  j["I"] = kNumSummaries;
  j["P"] = ck.static_names.size();
  j["T"] = sp.num_hours;
  j["variable_names"] = ck.variable_names;
  j["static_names"] = ck.static_names;
  j["categorical"] = ck.categorical;
  j["feature_names"] = mp.feature_names;
  j["coeffs"] = mp.coeffs;
  j["bias"] = mp.bias;
  j["C"] = sp.durations;
  j["phi_plus"] = sp.phi_plus;
  j["phi_minus"] = sp.phi_minus;
  j["tau_temp"] = sp.temperature;
  j["normalization"] = {
      {"mean", ck.stats.mean},
      {"std", ck.stats.std},
      {"static_mean", ck.stats.static_mean},
      {"static_std", ck.stats.static_std},
      {"population_median", ck.stats.population_median},
  };
  const auto& c = ck.config;
  j["config"] = {
      {"learning_rate", c.learning_rate},
      {"duration_lr", optional_to_json(c.duration_lr)},
      {"threshold_lr", optional_to_json(c.threshold_lr)},
      {"batch_size", c.batch_size},
      {"max_epochs", c.max_epochs},
      {"eval_interval", c.eval_interval},
      {"patience", c.patience},
      {"val_fraction", c.val_fraction},
      {"alpha", c.alpha},
      {"tau_hs", c.tau_hs},
      {"tau_temp", c.tau_temp},
      {"penalty", std::string(penalty_name(c.penalty))},
      {"mode", std::string(mode_name(c.mode))},
      {"seed", c.seed},
      {"test_fraction", ck.test_fraction},
  };
  j["seed"] = ck.seed;
  return j.dump(2) + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: not a valid document: ") + e.what());
  }
  const int version = field<int>(j, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ck;
  const auto mode = parse_mode(field<std::string>(j, "mode"));
  if (!mode) throw FormatError("checkpoint: unknown mode");
  ck.mode = *mode;

  const auto D = field<std::size_t>(j, "D");
  const auto I = field<std::size_t>(j, "I");
  const auto P = field<std::size_t>(j, "P");
  const auto T = field<std::size_t>(j, "T");
  if (I != kNumSummaries) throw FormatError("checkpoint: field 'I' must be 12");

  ck.variable_names = field<std::vector<std::string>>(j, "variable_names");
  ck.static_names = field<std::vector<std::string>>(j, "static_names");
  ck.categorical = field<std::vector<std::string>>(j, "categorical");
  require_size(ck.variable_names.size(), D, "variable_names");
  require_size(ck.static_names.size(), P, "static_names");

  auto& mp = ck.model_params;
  mp.feature_names = field<std::vector<std::string>>(j, "feature_names");
  mp.coeffs = field<std::vector<double>>(j, "coeffs");
  mp.bias = field<double>(j, "bias");
  const FeatureLayout layout{ck.mode, D, T, P};
  require_size(mp.coeffs.size(), layout.num_features(), "coeffs");
  require_size(mp.feature_names.size(), layout.num_features(), "feature_names");

  auto& sp = ck.summary_params;
  sp.num_vars = D;
  sp.num_hours = T;
  sp.durations = field<std::vector<double>>(j, "C");
  sp.phi_plus = field<std::vector<double>>(j, "phi_plus");
  sp.phi_minus = field<std::vector<double>>(j, "phi_minus");
  sp.temperature = field<double>(j, "tau_temp");
  require_size(sp.durations.size(), D * I, "C");
  require_size(sp.phi_plus.size(), D, "phi_plus");
  require_size(sp.phi_minus.size(), D, "phi_minus");

  const Json& norm = j.contains("normalization") ? j.at("normalization") : Json();
  if (norm.is_null()) throw FormatError("checkpoint: missing field 'normalization'");
  ck.stats.mean = field<std::vector<double>>(norm, "mean", "normalization");
  ck.stats.std = field<std::vector<double>>(norm, "std", "normalization");
  ck.stats.static_mean = field<std::vector<double>>(norm, "static_mean", "normalization");
  ck.stats.static_std = field<std::vector<double>>(norm, "static_std", "normalization");
  ck.stats.population_median =
      field<std::vector<double>>(norm, "population_median", "normalization");
  require_size(ck.stats.mean.size(), D, "normalization.mean");
  require_size(ck.stats.std.size(), D, "normalization.std");
  require_size(ck.stats.static_mean.size(), P, "normalization.static_mean");
  require_size(ck.stats.static_std.size(), P, "normalization.static_std");
  require_size(ck.stats.population_median.size(), D, "normalization.population_median");

  const Json& cj = j.contains("config") ? j.at("config") : Json();
  if (cj.is_null()) throw FormatError("checkpoint: missing field 'config'");
  auto& c = ck.config;
  c.learning_rate = field<double>(cj, "learning_rate", "config");
  c.duration_lr = optional_field(cj, "duration_lr", "config");
  c.threshold_lr = optional_field(cj, "threshold_lr", "config");
  c.batch_size = field<std::size_t>(cj, "batch_size", "config");
  c.max_epochs = field<std::size_t>(cj, "max_epochs", "config");
  c.eval_interval = field<std::size_t>(cj, "eval_interval", "config");
  c.patience = field<std::size_t>(cj, "patience", "config");
  c.val_fraction = field<double>(cj, "val_fraction", "config");
  c.alpha = field<double>(cj, "alpha", "config");
  c.tau_hs = field<double>(cj, "tau_hs", "config");
  c.tau_temp = field<double>(cj, "tau_temp", "config");
  const auto penalty = parse_penalty(field<std::string>(cj, "penalty", "config"));
  if (!penalty) throw FormatError("checkpoint: unknown penalty");
  c.penalty = *penalty;
  const auto cmode = parse_mode(field<std::string>(cj, "mode", "config"));
  if (!cmode) throw FormatError("checkpoint: unknown config mode");
  c.mode = *cmode;
  c.seed = field<std::uint64_t>(cj, "seed", "config");
  ck.test_fraction = field<double>(cj, "test_fraction", "config");

  ck.seed = field<std::uint64_t>(j, "seed");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace tsum
