#include "tsum/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>

#include "tsum/errors.hpp"
#include "tsum/numeric.hpp"

namespace tsum {

namespace {

using Kind = DataError::Kind;

enum class Stream : std::uint32_t { cohort = 1, pilot = 2 };

std::mt19937_64 patient_rng(std::uint64_t seed, std::size_t n, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

/// One patient in normalized units, before labelling.
struct Patient {
  std::vector<double> u;           // D * T
  std::vector<std::uint8_t> m;     // D * T
  std::vector<double> statics;     // raw columns
  double slope = 0.0;
  double frac = 0.0;
  double rate = 0.0;
};

/// Slope of the measured points with hour > T - window (0 with fewer than two).
double window_slope(const double* u, const std::uint8_t* m, std::size_t T, std::size_t window) {
  std::vector<double> w(T);
  for (std::size_t h = 0; h < T; ++h) w[h] = h + 1 > T - window ? 1.0 : 0.0;
  return s_slope({u, T}, {m, T}, w);
}

Patient simulate(const SynthSpec& spec, std::mt19937_64& rng) {
  const std::size_t D = spec.num_vars;
  const std::size_t T = spec.num_hours;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Patient p;
  p.u.assign(D * T, 0.0);
  p.m.assign(D * T, 0);
  const double z = normal(rng);
  const double innovation = spec.noise * std::sqrt(1.0 - kArCoefficient * kArCoefficient);

  for (std::size_t d = 0; d < D; ++d) {
    double* u = p.u.data() + d * T;
    std::uint8_t* m = p.m.data() + d * T;
    const double level = normal(rng);
    double e = spec.noise * normal(rng);
    for (std::size_t h = 0; h < T; ++h) {
      if (h > 0) e = kArCoefficient * e + innovation * normal(rng);
      u[h] = level + e;
    }
    double rate = spec.p_obs;
    if (d == spec.trend.variable) {
      const auto& s = spec.trend;
      const double k = s.slope_scale;
      const double drift = k * normal(rng);
      const double start = static_cast<double>(T - s.window);
      for (std::size_t h = 0; h < T; ++h) {
        const double t = static_cast<double>(h + 1);
        u[h] += t > start ? k * z * (t - static_cast<double>(T))
                          : -k * z * static_cast<double>(s.window) + drift * (t - start);
      }
    } else if (d == spec.threshold.variable) {
      const auto& s = spec.threshold;
      for (std::size_t h = T - s.window; h < T; ++h) u[h] += s.shift * z - level;
    } else if (d == spec.missingness.variable) {
      const auto& s = spec.missingness;
      rate = std::min(1.0, spec.p_obs * (1.0 + (s.rate_multiplier - 1.0) * sigmoid(z)));
    }
    for (std::size_t h = 0; h < T; ++h) m[h] = unit(rng) < rate ? 1 : 0;
  }

  if (std::none_of(p.m.begin(), p.m.end(), [](std::uint8_t v) { return v != 0; })) {
    p.m[T - 1] = 1;  // ingestion needs at least one series row per patient
  }

  const std::size_t d0 = spec.trend.variable;
  p.slope = window_slope(p.u.data() + d0 * T, p.m.data() + d0 * T, T, spec.trend.window);

  const std::size_t d1 = spec.threshold.variable;
  const double level1 =
      (spec.threshold.level - variable_location(d1)) / variable_scale(d1);
  std::size_t seen = 0, above = 0;
  for (std::size_t h = T - spec.threshold.window; h < T; ++h) {
    if (!p.m[d1 * T + h]) continue;
    ++seen;
    if (p.u[d1 * T + h] > level1) ++above;
  }
  p.frac = seen ? static_cast<double>(above) / static_cast<double>(seen) : 0.0;

  const std::size_t d2 = spec.missingness.variable;
  p.rate = static_cast<double>(std::count(p.m.begin() + static_cast<std::ptrdiff_t>(d2 * T),
                                          p.m.begin() + static_cast<std::ptrdiff_t>((d2 + 1) * T),
                                          std::uint8_t{1})) /
           static_cast<double>(T);

  for (std::size_t c = 0; c < spec.num_static; ++c) {
    if (c == 0) {
      p.statics.push_back(65.0 + 12.0 * normal(rng));
    } else if (c == 1) {
      p.statics.push_back(unit(rng) < 0.5 ? 1.0 : 0.0);  // 1: F
    } else {
      p.statics.push_back(normal(rng));
    }
  }
  return p;
}

struct Standardizer {
  double mean = 0.0;
  double std = 1.0;

  double operator()(double v) const { return (v - mean) / std; }

  static Standardizer fit(const std::vector<double>& values) {
    Standardizer s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size()));
    s.std = sd > 0.0 ? sd : 1.0;
    return s;
  }
};

struct LabelModel {
  Standardizer slope, frac, rate;
  double a0 = 0.0, a1 = 0.0, a2 = 0.0, b = 0.0;

  double linear(const Patient& p) const {
    return a0 * slope(p.slope) + a1 * frac(p.frac) + a2 * rate(p.rate);
  }
};

LabelModel calibrate(const SynthSpec& spec) {
  std::vector<double> slopes, fracs, rates;
  slopes.reserve(kPilotSamples);
  fracs.reserve(kPilotSamples);
  rates.reserve(kPilotSamples);
  for (std::size_t n = 0; n < kPilotSamples; ++n) {
    auto rng = patient_rng(spec.seed, n, Stream::pilot);
    const Patient p = simulate(spec, rng);
    slopes.push_back(p.slope);
    fracs.push_back(p.frac);
    rates.push_back(p.rate);
  }
  LabelModel model;
  model.slope = Standardizer::fit(slopes);
  model.frac = Standardizer::fit(fracs);
  model.rate = Standardizer::fit(rates);
  model.a0 = spec.trend.weight;
  model.a1 = spec.threshold.weight;
  model.a2 = spec.missingness.weight;

  std::vector<double> linear(kPilotSamples);
  for (std::size_t n = 0; n < kPilotSamples; ++n) {
    linear[n] = model.a0 * model.slope(slopes[n]) + model.a1 * model.frac(fracs[n]) +
                model.a2 * model.rate(rates[n]);
  }
  auto prevalence_at = [&](double b) {
    double sum = 0.0;
    for (double l : linear) sum += sigmoid(l + b);
    return sum / static_cast<double>(linear.size());
  };
  double lo = -40.0, hi = 40.0;
  const double target = spec.prevalence;
  if (!(prevalence_at(lo) < target && target < prevalence_at(hi))) {
    throw DataError(Kind::range, "prevalence target " + std::to_string(target) +
                                     " is outside the achievable range");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (prevalence_at(mid) < target ? lo : hi) = mid;
  }
  model.b = 0.5 * (lo + hi);
  return model;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

double variable_location(std::size_t d) { return 50.0 + 10.0 * static_cast<double>(d); }
double variable_scale(std::size_t d) { return 4.0 + static_cast<double>(d); }

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw DataError(Kind::range, "synth spec: " + what); };
  if (num_examples < 2) fail("N must be at least 2");
  if (num_hours < 2) fail("T must be at least 2");
  if (num_vars < 3) fail("D must be at least 3");
  const std::size_t d0 = trend.variable, d1 = threshold.variable, d2 = missingness.variable;
  if (d0 >= num_vars || d1 >= num_vars || d2 >= num_vars) fail("planted variable out of range");
  if (d0 == d1 || d0 == d2 || d1 == d2) fail("planted variables must be distinct");
  if (trend.window < 1 || trend.window > num_hours) fail("trend window outside [1, T]");
  if (threshold.window < 1 || threshold.window > num_hours) fail("threshold window outside [1, T]");
  if (!(p_obs > 0.0 && p_obs <= 1.0)) fail("p_obs outside (0, 1]");
  if (!(prevalence >= 0.0 && prevalence <= 1.0)) fail("prevalence outside [0, 1]");
  if (!(noise >= 0.0) || !(missingness.rate_multiplier >= 0.0)) fail("negative scale");
  for (double w : {trend.weight, threshold.weight, missingness.weight, trend.slope_scale,
                   threshold.shift, threshold.level}) {
    if (!std::isfinite(w)) fail("non-finite parameter");
  }
}

SynthCohort generate(const SynthSpec& spec) {
  spec.validate();
  const LabelModel labels = calibrate(spec);
  const std::size_t N = spec.num_examples, D = spec.num_vars, T = spec.num_hours;

  SynthCohort out;
  RawCohort& c = out.cohort;
  c.num_examples = N;
  c.num_vars = D;
  c.num_hours = T;
  c.x.assign(N * D * T, std::numeric_limits<double>::quiet_NaN());
  c.m.assign(N * D * T, 0);
  c.y.assign(N, 0);
  for (std::size_t d = 0; d < D; ++d) c.variable_names.push_back("var" + std::to_string(d + 1));
  for (std::size_t k = 0; k < spec.num_static; ++k) {
    if (k == 0) {
      c.static_names.push_back("age");
    } else if (k == 1) {
      c.static_names.push_back("sex=F");
      c.static_names.push_back("sex=M");
    } else {
      c.static_names.push_back("static" + std::to_string(k + 1));
    }
  }
  c.s.reserve(N * c.static_names.size());

  const int width = static_cast<int>(std::to_string(N).size());
  std::size_t positives = 0;
  for (std::size_t n = 0; n < N; ++n) {
    auto rng = patient_rng(spec.seed, n, Stream::cohort);
    const Patient p = simulate(spec, rng);
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t h = 0; h < T; ++h) {
        const std::size_t k = d * T + h;
        if (!p.m[k]) continue;
        c.x[c.offset(n, d) + h] = variable_location(d) + variable_scale(d) * p.u[k];
        c.m[c.offset(n, d) + h] = 1;
      }
    }
    for (std::size_t k = 0; k < p.statics.size(); ++k) {
      if (k == 1) {
        c.s.push_back(p.statics[k]);
        c.s.push_back(1.0 - p.statics[k]);
      } else {
        c.s.push_back(p.statics[k]);
      }
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool y = unit(rng) < sigmoid(labels.linear(p) + labels.b);
    c.y[n] = y ? 1 : 0;
    positives += y ? 1 : 0;
    std::string id = std::to_string(n + 1);
    c.patient_ids.push_back("p" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id);
  }

  GroundTruth& g = out.truth;
  g.seed = spec.seed;
  g.num_hours = T;
  g.variable_names = c.variable_names;
  g.signals = {
      {c.variable_names[spec.trend.variable], spec.trend.variable, SummaryKind::slope,
       spec.trend.window, spec.trend.weight},
      {c.variable_names[spec.threshold.variable], spec.threshold.variable,
       SummaryKind::frac_above, spec.threshold.window, spec.threshold.weight},
      {c.variable_names[spec.missingness.variable], spec.missingness.variable,
       SummaryKind::indicator_mean, std::nullopt, spec.missingness.weight},
  };
  g.intercept = labels.b;
  g.prevalence_target = spec.prevalence;
  g.prevalence_realized = static_cast<double>(positives) / static_cast<double>(N);
  return out;
}

std::vector<PlantedSignal> describe_ground_truth(const GroundTruth& truth) {
  std::vector<PlantedSignal> out;
  for (const auto& s : truth.signals) {
    if (s.weight != 0.0) out.push_back(s);
  }
  return out;
}

std::string truth_to_json(const GroundTruth& truth) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["seed"] = truth.seed;
  j["T"] = truth.num_hours;
  j["variable_names"] = truth.variable_names;
  j["intercept"] = truth.intercept;
  j["prevalence_target"] = truth.prevalence_target;
  j["prevalence_realized"] = truth.prevalence_realized;
  auto& signals = j["signals"] = nlohmann::ordered_json::array();
  for (const auto& s : truth.signals) {
    nlohmann::ordered_json e;
    e["variable"] = s.variable;
    e["variable_index"] = s.variable_index;
    e["summary"] = std::string(summary_name(s.summary));
    e["window"] = s.window ? nlohmann::ordered_json(*s.window) : nlohmann::ordered_json(nullptr);
    e["weight"] = s.weight;
    signals.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

GroundTruth truth_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != 1) throw FormatError("truth document: unsupported version");
    GroundTruth g;
    g.seed = j.at("seed").get<std::uint64_t>();
    g.num_hours = j.at("T").get<std::size_t>();
    g.variable_names = j.at("variable_names").get<std::vector<std::string>>();
    g.intercept = j.at("intercept").get<double>();
    g.prevalence_target = j.at("prevalence_target").get<double>();
    g.prevalence_realized = j.at("prevalence_realized").get<double>();
    for (const auto& e : j.at("signals")) {
      PlantedSignal s;
      s.variable = e.at("variable").get<std::string>();
      s.variable_index = e.at("variable_index").get<std::size_t>();
      const auto kind = parse_summary(e.at("summary").get<std::string>());
      if (!kind) throw FormatError("truth document: unknown summary");
      s.summary = *kind;
      if (!e.at("window").is_null()) s.window = e.at("window").get<std::size_t>();
      s.weight = e.at("weight").get<double>();
      g.signals.push_back(std::move(s));
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("truth document: ") + e.what());
  }
}

void write_cohort_csv(const RawCohort& cohort, const std::filesystem::path& dir) {
  cohort.check_shape();
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw DataError(Kind::missing, "cannot write " + (dir / name).string());
    return f;
  };

  auto ts = open("timeseries.csv");
  ts << "patient_id,variable,hour,value\n";
  for (std::size_t n = 0; n < cohort.num_examples; ++n) {
    for (std::size_t d = 0; d < cohort.num_vars; ++d) {
      const auto x = cohort.series(n, d);
      const auto m = cohort.mask(n, d);
      for (std::size_t h = 0; h < cohort.num_hours; ++h) {
        if (!m[h]) continue;
        ts << cohort.patient_ids[n] << ',' << cohort.variable_names[d] << ',' << h + 1 << ','
           << format_double(x[h]) << '\n';
      }
    }
  }

  // Raw static columns in order; categorical ones collect their level columns.
  struct Column {
    std::string name;
    std::vector<std::pair<std::size_t, std::string>> levels;  // empty: numeric
    std::size_t index = 0;
  };
  std::vector<Column> columns;
  for (std::size_t k = 0; k < cohort.static_names.size(); ++k) {
    const auto& name = cohort.static_names[k];
    const auto eq = name.find('=');
    if (eq == std::string::npos) {
      columns.push_back({name, {}, k});
      continue;
    }
    const std::string base = name.substr(0, eq);
    auto it = std::find_if(columns.begin(), columns.end(),
                           [&](const Column& c) { return c.name == base && !c.levels.empty(); });
    if (it == columns.end()) {
      columns.push_back({base, {}, k});
      it = columns.end() - 1;
    }
    it->levels.emplace_back(k, name.substr(eq + 1));
  }

  auto st = open("static.csv");
  st << "patient_id";
  for (const auto& c : columns) st << ',' << c.name;
  st << '\n';
  for (std::size_t n = 0; n < cohort.num_examples; ++n) {
    const auto s = cohort.statics(n);
    st << cohort.patient_ids[n];
    for (const auto& c : columns) {
      st << ',';
      if (c.levels.empty()) {
        st << format_double(s[c.index]);
        continue;
      }
      for (const auto& [k, level] : c.levels) {
        if (s[k] == 1.0) st << level;
      }
    }
    st << '\n';
  }

  auto lab = open("labels.csv");
  lab << "patient_id,label\n";
  for (std::size_t n = 0; n < cohort.num_examples; ++n) {
    lab << cohort.patient_ids[n] << ',' << int{cohort.y[n]} << '\n';
  }
}

}  // namespace tsum
