#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsum/cohort.hpp"

namespace tsum {

/// The interpretable summaries, in the fixed column order used everywhere
/// (summary tensor, design matrix, checkpoints).
enum class SummaryKind : std::size_t {
  mean,
  variance,
  ever_measured,
  indicator_mean,
  indicator_variance,
  switch_count,
  first_measured,
  last_measured,
  frac_above,
  frac_below,
  slope,
  slope_stderr,
};

inline constexpr std::size_t kNumSummaries = 12;

inline constexpr std::array<std::string_view, kNumSummaries> kSummaryNames = {
    "mean",           "variance",      "ever_measured", "indicator_mean",
    "indicator_variance", "switch_count", "first_measured", "last_measured",
    "frac_above",     "frac_below",    "slope",         "slope_stderr",
};

std::string_view summary_name(SummaryKind kind);
std::optional<SummaryKind> parse_summary(std::string_view name);

/// Summaries that carry no gradient with respect to the window.
constexpr bool is_differentiable(SummaryKind kind) {
  return kind != SummaryKind::first_measured && kind != SummaryKind::last_measured;
}

/// Uniform guard for denominators that can reach zero.
inline constexpr double kGuard = 1e-8;

enum class SummaryMode { relaxed, hard };

/// Learnable summary parameters: one duration per (variable, summary) cell,
/// and per-variable upper/lower thresholds in normalized units.
struct SummaryParams {
  std::size_t num_vars = 0;
  std::size_t num_hours = 0;
  std::vector<double> durations;  // D x I, row-major by variable
  std::vector<double> phi_plus;   // D
  std::vector<double> phi_minus;  // D
  double temperature = 0.1;

  double& duration(std::size_t d, SummaryKind i) {
    return durations[d * kNumSummaries + static_cast<std::size_t>(i)];
  }
  double duration(std::size_t d, SummaryKind i) const {
    return durations[d * kNumSummaries + static_cast<std::size_t>(i)];
  }

  /// Clamps every duration into [0, T].
  void clamp_durations();
  /// Throws DataError on inconsistent sizes or a non-positive temperature.
  void validate() const;
};

/// Soft (or hard) window weights w[t, i, d].
///
/// Storage is variable-major so that `column(d, i)` is a contiguous series.
class WeightTensor {
 public:
  WeightTensor() = default;
  WeightTensor(std::size_t num_hours, std::size_t num_vars)
      : num_hours_(num_hours), num_vars_(num_vars),
        data_(num_hours * num_vars * kNumSummaries, 0.0) {}

  std::size_t num_hours() const { return num_hours_; }
  std::size_t num_vars() const { return num_vars_; }

  /// `t` is the 0-based hour index (clock hour t + 1).
  double at(std::size_t t, std::size_t i, std::size_t d) const {
    return data_[(d * kNumSummaries + i) * num_hours_ + t];
  }
  std::span<const double> column(std::size_t d, std::size_t i) const {
    return {data_.data() + (d * kNumSummaries + i) * num_hours_, num_hours_};
  }
  std::span<double> column(std::size_t d, std::size_t i) {
    return {data_.data() + (d * kNumSummaries + i) * num_hours_, num_hours_};
  }

 private:
  std::size_t num_hours_ = 0;
  std::size_t num_vars_ = 0;
  std::vector<double> data_;
};

/// w[t, i, d] = sigma((t - T + C[d, i]) / tau), t = 1..T.
WeightTensor compute_weights(std::span<const double> durations, std::size_t num_vars,
                             std::size_t num_hours, double temperature);

/// w[t, i, d] = 1(t > T - C[d, i]).
WeightTensor compute_weights_hard(std::span<const double> durations, std::size_t num_vars,
                                  std::size_t num_hours);

WeightTensor compute_weights(const SummaryParams& params, SummaryMode mode);

// Single-series summaries. `x`, `m` and `w` are one variable's hourly series
// and the window weights for the summary being computed.
using SeriesSpan = std::span<const double>;
using MaskSpan = std::span<const std::uint8_t>;
using WeightSpan = std::span<const double>;

double s_mean(SeriesSpan x, MaskSpan m, WeightSpan w);
double s_variance(SeriesSpan x, MaskSpan m, WeightSpan w);
double s_ever_measured(MaskSpan m, WeightSpan w, double temperature);
double s_ever_measured_hard(MaskSpan m, WeightSpan w);
double s_indicator_mean(MaskSpan m, WeightSpan w);
double s_indicator_variance(MaskSpan m, WeightSpan w);
double s_switch_count(MaskSpan m, WeightSpan w);
double s_first_measured(MaskSpan m);
double s_last_measured(MaskSpan m);
double s_frac_above(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_plus, double temperature);
double s_frac_above_hard(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_plus);
double s_frac_below(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_minus, double temperature);
double s_frac_below_hard(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_minus);
double s_slope(SeriesSpan x, MaskSpan m, WeightSpan w);
double s_slope_stderr(SeriesSpan x, MaskSpan m, WeightSpan w);

/// Reliability-weighted unbiased variance of `values` under `weights`:
/// (sum v (x - xbar)^2) * V1 / max(V1^2 - V2, eps). Zero when V1 == 0.
double weighted_unbiased_variance(SeriesSpan values, WeightSpan weights);

/// V1^2 - V2 = sum_i v_i * (sum_{j != i} v_j), summed without cancellation.
/// `others[i]` receives sum_{j != i} v_j when non-empty.
double weight_cross_sum(WeightSpan v, std::span<double> others = {});

/// All I summaries of every variable of example `n`, written as D x I into `out`.
void summarize_example(const CohortArrays& batch, std::size_t n, const WeightTensor& weights,
                       const SummaryParams& params, SummaryMode mode, std::span<double> out);

/// Extended-precision twin of `summarize_example`, weights included. Used where
/// double roundoff would swamp a finite-difference probe.
std::vector<long double> summarize_example_wide(const CohortArrays& batch, std::size_t n,
                                                const SummaryParams& params, SummaryMode mode);

/// H: N x D x I.
struct SummaryTensor {
  std::size_t num_examples = 0;
  std::size_t num_vars = 0;
  std::vector<double> values;

  static constexpr std::size_t num_summaries() { return kNumSummaries; }
  double at(std::size_t n, std::size_t d, std::size_t i) const {
    return values[(n * num_vars + d) * kNumSummaries + i];
  }
  std::span<const double> example(std::size_t n) const {
    return {values.data() + n * num_vars * kNumSummaries, num_vars * kNumSummaries};
  }
};

SummaryTensor compute_summary_tensor(const CohortArrays& batch, const SummaryParams& params,
                                     SummaryMode mode);

}  // namespace tsum
