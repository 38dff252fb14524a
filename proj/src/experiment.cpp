#include "tsum/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tsum/errors.hpp"
#include "tsum/evaluator.hpp"
#include "tsum/synth.hpp"

namespace tsum {

RawCohort load_cohort(const RunConfig& config) {
  config.check_source(true);
  if (config.synth) return generate(*config.synth).cohort;
  const auto& c = *config.csv;
  return ingest_csv(c.timeseries, c.statics, c.labels, c.options);
}

PreparedData prepare_split(const RawCohort& raw, double test_fraction, double val_fraction,
                           std::uint64_t seed) {
  PreparedData out;
  out.split = split_by_patient(raw.y, test_fraction, seed);
  const RawCohort train_raw = subset(raw, out.split.train);
  const RawCohort test_raw = subset(raw, out.split.test);

  const auto medians = measured_medians(train_raw);
  const ClinicalBatch train = impute(train_raw, medians);
  out.stats = fit_normalization(train);
  const ClinicalBatch train_norm = apply_normalization(train, out.stats);
  out.test = apply_normalization(impute(test_raw, medians), out.stats);

  // Distinct stream from the test split so the two partitions are unrelated.
  const auto val_split = split_by_patient(train_norm.y, val_fraction, seed ^ 0x9e3779b97f4a7c15ULL);
  out.train_fit = subset(train_norm, val_split.train);
  out.val = subset(train_norm, val_split.test);
  return out;
}

ClinicalBatch prepare_for_eval(const RawCohort& raw, const NormalizationStats& stats) {
  if (stats.population_median.size() != raw.num_vars) {
    throw DataError(DataError::Kind::shape, "normalization statistics do not match the cohort");
  }
  return apply_normalization(impute(raw, stats.population_median), stats);
}

ExperimentResult run_experiment(const RawCohort& raw, const TrainConfig& config,
                                double test_fraction) {
  const PreparedData data = prepare_split(raw, test_fraction, config.val_fraction, config.seed);
  ExperimentResult out;
  out.fit = train(data.train_fit, data.val, config);
  out.stats = data.stats;
  const auto& sp = out.fit.summary_params;
  const auto& mp = out.fit.model_params;
  out.train_auc = auc(predict_batch(sp, mp, data.train_fit, config.mode), data.train_fit.y);
  out.test_auc = auc(predict_batch(sp, mp, data.test, config.mode), data.test.y);
  return out;
}

Checkpoint make_checkpoint(const ExperimentResult& result, const RawCohort& raw,
                           const TrainConfig& config, double test_fraction,
                           const std::vector<std::string>& categorical) {
  Checkpoint ck;
  ck.mode = result.fit.mode;
  ck.summary_params = result.fit.summary_params;
  ck.model_params = result.fit.model_params;
  ck.stats = result.stats;
  ck.config = config;
  ck.variable_names = raw.variable_names;
  ck.static_names = raw.static_names;
  ck.categorical = categorical;
  ck.seed = config.seed;
  ck.test_fraction = test_fraction;
  return ck;
}

GradcheckFixture random_gradcheck_fixture(std::size_t num_examples, std::size_t num_vars,
                                          std::size_t num_hours, const TrainConfig& config) {
  if (num_examples < 2 || num_vars < 1 || num_hours < 2) {
    throw DataError(DataError::Kind::size, "gradient-check batch is too small");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> duration(0.0, static_cast<double>(num_hours));
  std::uniform_real_distribution<double> threshold(-1.0, 1.0);

  for (std::size_t attempt = 0; attempt < kFixtureAttempts; ++attempt) {
    GradcheckFixture f;
    ClinicalBatch& b = f.batch;
    b.num_examples = num_examples;
    b.num_vars = num_vars;
    b.num_hours = num_hours;
    b.x.resize(num_examples * num_vars * num_hours);
    b.m.resize(b.x.size());
    for (std::size_t k = 0; k < b.x.size(); ++k) {
      b.x[k] = normal(rng);
      b.m[k] = unit(rng) < 0.7 ? 1 : 0;
    }
    b.static_names = {"s1", "s2"};
    for (std::size_t k = 0; k < num_examples * 2; ++k) b.s.push_back(normal(rng));
    for (std::size_t n = 0; n < num_examples; ++n) {
      b.y.push_back(n % 2 == 0 ? 1 : 0);
      b.patient_ids.push_back("g" + std::to_string(n));
    }
    for (std::size_t d = 0; d < num_vars; ++d) b.variable_names.push_back("v" + std::to_string(d));

    auto& sp = f.summary_params;
    sp.num_vars = num_vars;
    sp.num_hours = num_hours;
    sp.temperature = config.tau_temp;
    for (std::size_t k = 0; k < num_vars * kNumSummaries; ++k) {
      sp.durations.push_back(duration(rng));
    }
    for (std::size_t d = 0; d < num_vars; ++d) {
      sp.phi_plus.push_back(threshold(rng));
      sp.phi_minus.push_back(threshold(rng));
    }

    const auto layout = FeatureLayout::of(b, config.mode);
    auto& mp = f.model_params;
    mp.feature_names = layout.names(b.variable_names, b.static_names);
    for (std::size_t j = 0; j < layout.num_features(); ++j) {
      double beta = 0.0;
      while (std::abs(beta) < kFixtureMinCoefficient) beta = 0.5 * normal(rng);
      mp.coeffs.push_back(beta);
    }
    mp.bias = 0.5 * normal(rng);

    SummaryTensor H;
    if (uses_summaries(config.mode)) H = compute_summary_tensor(b, sp, summary_mode(config.mode));
    const DesignMatrix design = assemble_features(H, b, config.mode);
    const bool well_scaled = std::all_of(design.values.begin(), design.values.end(),
                                         [](double v) { return std::abs(v) <= kFixtureFeatureBound; });
    if (well_scaled) return f;
  }
  throw DataError(DataError::Kind::range, "no well-scaled gradient-check fixture found");
}

}  // namespace tsum
