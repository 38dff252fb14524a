#include "tsum/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "tsum/errors.hpp"

namespace tsum {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) {
    throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  return parse_number<double>(key, value);
}
std::size_t parse_count(const std::string& key, const std::string& value) {
  return parse_number<std::size_t>(key, value);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("config key '" + key + "': expected true or false, got '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

struct KeySpec {
  const char* key;
  const char* help;
  Setter set;
};

CsvSource& csv(RunConfig& c) {
  if (!c.csv) c.csv.emplace();
  return *c.csv;
}
SynthSpec& synth(RunConfig& c) {
  if (!c.synth) c.synth.emplace();
  return *c.synth;
}

#define REAL(field) [](RunConfig& c, const std::string& k, const std::string& v) { field = parse_real(k, v); }
#define COUNT(field) [](RunConfig& c, const std::string& k, const std::string& v) { field = parse_count(k, v); }

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      {"learning_rate", "Adam step size for every block", REAL(c.train.learning_rate)},
      {"duration_lr", "Adam step size for durations C (default: learning_rate)",
       REAL(c.train.duration_lr)},
      {"threshold_lr", "Adam step size for thresholds phi (default: learning_rate)",
       REAL(c.train.threshold_lr)},
      {"batch_size", "minibatch size", COUNT(c.train.batch_size)},
      {"max_epochs", "epoch limit", COUNT(c.train.max_epochs)},
      {"eval_interval", "epochs between validation evaluations", COUNT(c.train.eval_interval)},
      {"patience", "evaluations without improvement before stopping", COUNT(c.train.patience)},
      {"val_fraction", "share of the training split held out for early stopping",
       REAL(c.train.val_fraction)},
      {"alpha", "penalty strength", REAL(c.train.alpha)},
      {"tau_hs", "horseshoe shrinkage scale", REAL(c.train.tau_hs)},
      {"tau_temp", "sigmoid temperature of windows and thresholds", REAL(c.train.tau_temp)},
      {"penalty", "horseshoe or ridge",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto p = parse_penalty(v);
         if (!p) throw UsageError("config key '" + k + "': unknown penalty '" + v + "'");
         c.train.penalty = *p;
       }},
      {"mode", "relaxed, hard, time_of_prediction_only or flat_series",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto m = parse_mode(v);
         if (!m) throw UsageError("config key '" + k + "': unknown mode '" + v + "'");
         c.train.mode = *m;
       }},
      {"seed", "single split and training seed (replaces seeds)",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seeds = {parse_number<std::uint64_t>(k, v)};
       }},
      {"seeds", "comma-separated seeds, one train/test split each",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(k, s));
         if (c.seeds.empty()) throw UsageError("config key '" + k + "': empty seed list");
       }},
      {"test_fraction", "share of patients in the test split", REAL(c.test_fraction)},
      {"out", "output directory",
       [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      {"checkpoint", "model checkpoint to read",
       [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }},
      {"n_list", "comma-separated coefficient counts for ablation",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.n_list.clear();
         for (const auto& s : split_list(v)) c.n_list.push_back(parse_count(k, s));
       }},
      {"top_k", "rows in the key-feature report", COUNT(c.top_k)},

      {"timeseries", "long-format series CSV (patient_id,variable,hour,value)",
       [](RunConfig& c, const std::string&, const std::string& v) { csv(c).timeseries = v; }},
      {"static", "static CSV (patient_id,<columns>)",
       [](RunConfig& c, const std::string&, const std::string& v) { csv(c).statics = v; }},
      {"labels", "labels CSV (patient_id,label)",
       [](RunConfig& c, const std::string&, const std::string& v) { csv(c).labels = v; }},
      {"hours", "hours per series T for CSV cohorts", COUNT(csv(c).options.hours)},
      {"categorical", "comma-separated categorical static columns",
       [](RunConfig& c, const std::string&, const std::string& v) {
         csv(c).options.categorical = split_list(v);
       }},
      {"variables", "comma-separated variable list (default: discovered)",
       [](RunConfig& c, const std::string&, const std::string& v) {
         csv(c).options.variables = split_list(v);
       }},

      {"synth", "true selects a synthetic cohort even with default parameters",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (parse_bool(k, v)) synth(c);
       }},
      {"synth.N", "patients", COUNT(synth(c).num_examples)},
      {"synth.D", "variables", COUNT(synth(c).num_vars)},
      {"synth.T", "hours", COUNT(synth(c).num_hours)},
      {"synth.P", "raw static columns (age, sex, extras)", COUNT(synth(c).num_static)},
      {"synth.prevalence", "target share of positive labels", REAL(synth(c).prevalence)},
      {"synth.p_obs", "base hourly measurement probability", REAL(synth(c).p_obs)},
      {"synth.noise", "AR(1) noise scale", REAL(synth(c).noise)},
      {"synth.seed", "generator seed",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         synth(c).seed = parse_number<std::uint64_t>(k, v);
       }},
      {"synth.trend.variable", "0-based trend variable", COUNT(synth(c).trend.variable)},
      {"synth.trend.window", "trend window in hours", COUNT(synth(c).trend.window)},
      {"synth.trend.weight", "label weight of the trend", REAL(synth(c).trend.weight)},
      {"synth.trend.slope_scale", "slope per unit acuity", REAL(synth(c).trend.slope_scale)},
      {"synth.threshold.variable", "0-based threshold variable",
       COUNT(synth(c).threshold.variable)},
      {"synth.threshold.level", "threshold in raw units", REAL(synth(c).threshold.level)},
      {"synth.threshold.window", "threshold window in hours", COUNT(synth(c).threshold.window)},
      {"synth.threshold.weight", "label weight of the exceedance fraction",
       REAL(synth(c).threshold.weight)},
      {"synth.threshold.shift", "window level per unit acuity", REAL(synth(c).threshold.shift)},
      {"synth.missingness.variable", "0-based missingness variable",
       COUNT(synth(c).missingness.variable)},
      {"synth.missingness.multiplier", "measurement-rate multiplier r",
       REAL(synth(c).missingness.rate_multiplier)},
      {"synth.missingness.weight", "label weight of the measurement rate",
       REAL(synth(c).missingness.weight)},

      {"gradcheck.N", "examples in the random gradient-check batch",
       COUNT(c.gradcheck.num_examples)},
      {"gradcheck.D", "variables in the gradient-check batch", COUNT(c.gradcheck.num_vars)},
      {"gradcheck.T", "hours in the gradient-check batch", COUNT(c.gradcheck.num_hours)},
      {"gradcheck.epsilon", "central-difference step", REAL(c.gradcheck.epsilon)},
      {"gradcheck.tolerance", "largest accepted relative error", REAL(c.gradcheck.tolerance)},
      {"gradcheck.coeffs", "sampled coefficients", COUNT(c.gradcheck.num_coeffs)},
  };
  return table;
}

#undef REAL
#undef COUNT

}  // namespace

KeyValues parse_config(const std::string& text, const std::string& source) {
  KeyValues out;
  std::stringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw UsageError(source + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return out;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

RunConfig build_run_config(const KeyValues& values) {
  RunConfig config;
  const auto& table = key_table();
  for (const auto& [key, value] : values) {
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const KeySpec& k) { return key == k.key; });
    if (it == table.end()) throw UsageError("unknown config key '" + key + "'");
    it->set(config, key, value);
  }
  try {
    config.train.validate();
    if (config.synth) config.synth->validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0)) {
    throw UsageError("test_fraction must lie in (0, 1)");
  }
  return config;
}

void RunConfig::check_source(bool need_data) const {
  if (csv && synth) throw UsageError("configure either CSV files or a synthetic cohort, not both");
  if (need_data && !csv && !synth) throw UsageError("no data source configured");
  if (csv && (csv->timeseries.empty() || csv->statics.empty() || csv->labels.empty())) {
    throw UsageError("CSV source needs timeseries, static and labels paths");
  }
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : key_table()) out.emplace_back(k.key, k.help);
  return out;
}

}  // namespace tsum
