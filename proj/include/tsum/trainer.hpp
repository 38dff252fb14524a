#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tsum/cohort.hpp"
#include "tsum/errors.hpp"
#include "tsum/gradients.hpp"
#include "tsum/predictor.hpp"
#include "tsum/summaries.hpp"

namespace tsum {

struct HistoryRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;
};

struct FitResult {
  ModelMode mode = ModelMode::relaxed;
  // Best-by-validation parameters.
  SummaryParams summary_params;
  ModelParams model_params;
  // Parameters at the last step taken.
  SummaryParams final_summary_params;
  ModelParams final_model_params;
  std::vector<HistoryRecord> history;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  std::uint64_t seed = 0;
};

/// Thrown when the loss turns non-finite. `partial` holds the last good
/// (best-by-validation) parameters and the history so far.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const NumericalError& cause, FitResult partial)
      : NumericalError(cause.block(), std::string("training aborted: ") + cause.what()),
        partial_(std::move(partial)) {}

  const FitResult& partial() const noexcept { return partial_; }

 private:
  FitResult partial_;
};

struct InitialParams {
  SummaryParams summary;
  ModelParams model;
};

/// Full-window durations (C = T), thresholds at +/-1 normalized unit, zero
/// coefficients and the bias at the logit of the training prevalence.
InitialParams init_params(const CohortArrays& train, const TrainConfig& config);

struct AdamState {
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// One bias-corrected Adam update of `params` in place, with a per-entry rate.
void adam_update(std::span<double> params, std::span<const double> grads,
                 std::span<const double> rates, AdamState& state);

/// Adam step over all blocks ({coeffs, bias, C, phi+, phi-}); clamps C to [0, T].
void adam_step(SummaryParams& summary_params, ModelParams& model_params,
               const GradientSet& grads, AdamState& state, const TrainConfig& config);

/// Minibatch Adam with early stopping on validation AUC.
FitResult train(const ClinicalBatch& train_batch, const ClinicalBatch& val_batch,
                const TrainConfig& config);

}  // namespace tsum
