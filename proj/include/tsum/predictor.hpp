#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsum/cohort.hpp"
#include "tsum/summaries.hpp"

namespace tsum {

/// Which columns feed the classifier and how summaries are computed.
///  - relaxed: sigmoid windows and thresholds, all summary parameters learned.
///  - hard: indicator windows and thresholds, summary parameters frozen.
///  - time_of_prediction_only: [S, X_T, M_T] only.
///  - flat_series: [S, X, M] with every hour as its own column.
enum class ModelMode { relaxed, hard, time_of_prediction_only, flat_series };

std::string_view mode_name(ModelMode mode);
std::optional<ModelMode> parse_mode(std::string_view name);

constexpr bool uses_summaries(ModelMode mode) {
  return mode == ModelMode::relaxed || mode == ModelMode::hard;
}
constexpr SummaryMode summary_mode(ModelMode mode) {
  return mode == ModelMode::hard ? SummaryMode::hard : SummaryMode::relaxed;
}

enum class Penalty { horseshoe, ridge };

std::string_view penalty_name(Penalty penalty);
std::optional<Penalty> parse_penalty(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-5;
  /// Per-block overrides; unset means "use learning_rate".
  std::optional<double> duration_lr;
  std::optional<double> threshold_lr;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 5000;
  std::size_t eval_interval = 100;
  std::size_t patience = 50;
  double val_fraction = 0.15;
  double alpha = 1e-5;
  double tau_hs = 1.0;
  double tau_temp = 0.1;
  Penalty penalty = Penalty::horseshoe;
  ModelMode mode = ModelMode::relaxed;
  std::uint64_t seed = 0;

  /// Throws DataError when a rate or coefficient is out of range.
  void validate() const;
};

/// Column layout of the design matrix for one mode.
struct FeatureLayout {
  ModelMode mode = ModelMode::relaxed;
  std::size_t num_vars = 0;
  std::size_t num_hours = 0;
  std::size_t num_static = 0;

  std::size_t num_summary_columns() const {
    return uses_summaries(mode) ? num_vars * kNumSummaries : 0;
  }
  std::size_t static_offset() const { return num_summary_columns(); }
  std::size_t series_offset() const { return static_offset() + num_static; }
  /// Columns per series block: D for X_T / M_T, D*T for the flat layout.
  std::size_t series_block() const {
    return mode == ModelMode::flat_series ? num_vars * num_hours : num_vars;
  }
  std::size_t num_features() const { return series_offset() + 2 * series_block(); }

  std::vector<std::string> names(std::span<const std::string> variable_names,
                                 std::span<const std::string> static_names) const;

  static FeatureLayout of(const CohortArrays& batch, ModelMode mode) {
    return {mode, batch.num_vars, batch.num_hours, batch.num_static()};
  }
};

struct ModelParams {
  std::vector<double> coeffs;
  double bias = 0.0;
  std::vector<std::string> feature_names;
};

/// Row-major N x F matrix.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

/// Writes example `n`'s design row. `summaries` is the example's D x I block
/// (ignored for modes without summaries).
void design_row(const CohortArrays& batch, std::size_t n, std::span<const double> summaries,
                const FeatureLayout& layout, std::span<double> out);

DesignMatrix assemble_features(const SummaryTensor& H, const CohortArrays& batch, ModelMode mode);

std::vector<double> predict(const DesignMatrix& design, const ModelParams& params);

/// -(1/N) sum w_n [y log p + (1 - y) log(1 - p)] from probabilities.
double weighted_bce(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                    std::span<const double> weights);

/// Same loss from logits, evaluated through log-sigmoid.
double weighted_bce_logits(std::span<const double> logits, std::span<const std::uint8_t> labels,
                           std::span<const double> weights);

inline constexpr double kHorseshoeGuard = 1e-8;

/// sum_j -log(log(1 + 2 tau^2 / (beta_j^2 + eps))).
double horseshoe_penalty(std::span<const double> coeffs, double tau_hs);
/// d/d beta_j of one horseshoe term.
double horseshoe_derivative(double beta, double tau_hs);

double ridge_penalty(std::span<const double> coeffs);

double penalty_value(std::span<const double> coeffs, const TrainConfig& config);

/// Everything the loss needs, kept for the backward pass.
struct ForwardPass {
  std::vector<std::size_t> rows;  // batch rows used, in order
  std::vector<double> summaries;  // rows x D x I (empty without summaries)
  std::vector<double> design;     // rows x F
  std::vector<double> logits;     // rows
  double bce = 0.0;
  double penalty = 0.0;
  double loss = 0.0;
};

/// Forward evaluation over `rows` of `batch`; `weights` is indexed by batch row.
ForwardPass forward(const SummaryParams& summary_params, const ModelParams& model_params,
                    const CohortArrays& batch, std::span<const double> weights,
                    std::span<const std::size_t> rows, const TrainConfig& config);

/// The `forward` loss with summaries, logits and penalty all in extended
/// precision. Finite-difference probes use it; training does not.
long double loss_wide(const SummaryParams& summary_params, const ModelParams& model_params,
                      const CohortArrays& batch, std::span<const double> weights,
                      std::span<const std::size_t> rows, const TrainConfig& config);

/// BCE with class weights from the batch's own labels, plus alpha * penalty.
double total_loss(const SummaryParams& summary_params, const ModelParams& model_params,
                  const CohortArrays& batch, const TrainConfig& config);

/// Predicted probabilities for every example of `batch`.
std::vector<double> predict_batch(const SummaryParams& summary_params,
                                  const ModelParams& model_params, const CohortArrays& batch,
                                  ModelMode mode);

}  // namespace tsum
