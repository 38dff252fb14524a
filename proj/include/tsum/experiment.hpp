#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tsum/checkpoint.hpp"
#include "tsum/cohort.hpp"
#include "tsum/config.hpp"
#include "tsum/trainer.hpp"

namespace tsum {

/// Reads the configured CSV cohort or generates the synthetic one.
RawCohort load_cohort(const RunConfig& config);

/// Normalized batches for one seed. Imputation medians and normalization
/// statistics come from the whole training split (train_fit + val).
struct PreparedData {
  ClinicalBatch train_fit;
  ClinicalBatch val;
  ClinicalBatch test;
  NormalizationStats stats;
  SplitIndices split;  // rows of the raw cohort
};

PreparedData prepare_split(const RawCohort& raw, double test_fraction, double val_fraction,
                           std::uint64_t seed);

/// Imputes with the stored medians and normalizes with the stored statistics.
ClinicalBatch prepare_for_eval(const RawCohort& raw, const NormalizationStats& stats);

struct ExperimentResult {
  FitResult fit;
  NormalizationStats stats;
  double train_auc = 0.0;  // on train_fit
  double test_auc = 0.0;
};

/// Split with `config.seed`, train, and score both sides of the split.
ExperimentResult run_experiment(const RawCohort& raw, const TrainConfig& config,
                                double test_fraction);

Checkpoint make_checkpoint(const ExperimentResult& result, const RawCohort& raw,
                           const TrainConfig& config, double test_fraction,
                           const std::vector<std::string>& categorical);

/// Random batch and parameters for finite-difference checks: C uniform on
/// (0, T), thresholds uniform on (-1, 1), coefficients standard normal / 2.
/// Draws whose design matrix has an entry beyond kFixtureFeatureBound are
/// redrawn: near-empty windows push slope_stderr towards 1/eps, where a fixed
/// finite-difference step measures roundoff instead of the gradient.
/// Coefficients closer to zero than kFixtureMinCoefficient are redrawn too;
/// the horseshoe term has curvature ~1/beta^2 there.
inline constexpr double kFixtureFeatureBound = 10.0;
inline constexpr double kFixtureMinCoefficient = 1e-2;
inline constexpr std::size_t kFixtureAttempts = 10000;

struct GradcheckFixture {
  ClinicalBatch batch;
  SummaryParams summary_params;
  ModelParams model_params;
};

GradcheckFixture random_gradcheck_fixture(std::size_t num_examples, std::size_t num_vars,
                                          std::size_t num_hours, const TrainConfig& config);

}  // namespace tsum
