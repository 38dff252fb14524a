#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tsum/cohort.hpp"
#include "tsum/predictor.hpp"
#include "tsum/summaries.hpp"

namespace tsum {

/// Partial derivatives of the training loss, shaped like the parameters.
struct GradientSet {
  std::vector<double> d_coeffs;  // F + 1; the last entry is the bias
  std::vector<double> d_C;       // D x I
  std::vector<double> d_phi_plus;
  std::vector<double> d_phi_minus;

  double d_bias() const { return d_coeffs.back(); }
};

struct LossAndGradients {
  double loss = 0.0;
  GradientSet gradients;
};

/// Loss (identical to `forward(...).loss`) and its exact gradient.
/// `weights` is indexed by batch row; only `rows` contribute.
LossAndGradients loss_and_gradients(const SummaryParams& summary_params,
                                    const ModelParams& model_params, const CohortArrays& batch,
                                    std::span<const double> weights,
                                    std::span<const std::size_t> rows, const TrainConfig& config);

/// Convenience overload: class weights from the batch labels, every row.
LossAndGradients loss_and_gradients(const SummaryParams& summary_params,
                                    const ModelParams& model_params, const CohortArrays& batch,
                                    const TrainConfig& config);

/// Vector-Jacobian product of one relaxed summary: accumulates
/// `upstream * dH/dw_t` into `dw` and returns `upstream * dH/dphi` (zero for
/// summaries without a threshold). `phi` is phi_plus for frac_above and
/// phi_minus for frac_below.
double summary_vjp(SummaryKind kind, SeriesSpan x, MaskSpan m, WeightSpan w, double phi,
                   double temperature, double upstream, std::span<double> dw);

/// d w_t / d C for one window column: w (1 - w) / tau.
double weight_derivative(double w, double temperature);

struct FdOptions {
  double epsilon = 1e-5;
  std::size_t num_coeffs = 32;
  std::uint64_t seed = 0;
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(GradientSet&)> tamper;
};

struct FdEntry {
  std::string parameter;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct FdReport {
  std::vector<FdEntry> entries;
  double max_rel_error = 0.0;
  std::string worst_parameter;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares analytic derivatives against central differences for every
/// duration and threshold plus `num_coeffs` sampled coefficients.
/// Relative error is |a - n| / max(1e-8, |a| + |n|).
FdReport finite_difference_check(const SummaryParams& summary_params,
                                 const ModelParams& model_params, const CohortArrays& batch,
                                 const TrainConfig& config, const FdOptions& options = {});

}  // namespace tsum
