#include "tsum/summaries.hpp"

#include <algorithm>
#include <cmath>

#include "tsum/errors.hpp"
#include "tsum/numeric.hpp"
#include "summary_kernels.hpp"

namespace tsum {

std::string_view summary_name(SummaryKind kind) {
  return kSummaryNames[static_cast<std::size_t>(kind)];
}

std::optional<SummaryKind> parse_summary(std::string_view name) {
  for (std::size_t i = 0; i < kNumSummaries; ++i) {
    if (kSummaryNames[i] == name) return static_cast<SummaryKind>(i);
  }
  return std::nullopt;
}

void SummaryParams::clamp_durations() {
  const double upper = static_cast<double>(num_hours);
  for (double& c : durations) c = std::clamp(c, 0.0, upper);
}

void SummaryParams::validate() const {
  if (durations.size() != num_vars * kNumSummaries || phi_plus.size() != num_vars ||
      phi_minus.size() != num_vars) {
    throw DataError(DataError::Kind::shape, "summary parameters do not match D=" +
                                                std::to_string(num_vars));
  }
  if (!(temperature > 0.0)) {
    throw DataError(DataError::Kind::range, "temperature must be positive");
  }
}

WeightTensor compute_weights(std::span<const double> durations, std::size_t num_vars,
                             std::size_t num_hours, double temperature) {
  WeightTensor w(num_hours, num_vars);
  const double T = static_cast<double>(num_hours);
  for (std::size_t d = 0; d < num_vars; ++d) {
    for (std::size_t i = 0; i < kNumSummaries; ++i) {
      const double c = durations[d * kNumSummaries + i];
      auto col = w.column(d, i);
      for (std::size_t h = 0; h < num_hours; ++h) {
        const double t = static_cast<double>(h + 1);
        col[h] = sigmoid((t - T + c) / temperature);
      }
    }
  }
  return w;
}

WeightTensor compute_weights_hard(std::span<const double> durations, std::size_t num_vars,
                                  std::size_t num_hours) {
  WeightTensor w(num_hours, num_vars);
  const double T = static_cast<double>(num_hours);
  for (std::size_t d = 0; d < num_vars; ++d) {
    for (std::size_t i = 0; i < kNumSummaries; ++i) {
      const double c = durations[d * kNumSummaries + i];
      auto col = w.column(d, i);
      for (std::size_t h = 0; h < num_hours; ++h) {
        col[h] = static_cast<double>(h + 1) > T - c ? 1.0 : 0.0;
      }
    }
  }
  return w;
}

WeightTensor compute_weights(const SummaryParams& params, SummaryMode mode) {
  params.validate();
  if (mode == SummaryMode::hard) {
    return compute_weights_hard(params.durations, params.num_vars, params.num_hours);
  }
  return compute_weights(params.durations, params.num_vars, params.num_hours, params.temperature);
}

double weight_cross_sum(WeightSpan v, std::span<double> others) {
  return kernels::cross_sum<double>(v, others);
}

double weighted_unbiased_variance(SeriesSpan values, WeightSpan weights) {
  return kernels::unbiased_variance<double>(weights, [&](std::size_t h) { return values[h]; });
}

double s_mean(SeriesSpan x, MaskSpan m, WeightSpan w) { return kernels::mean<double>(x, m, w); }

double s_variance(SeriesSpan x, MaskSpan m, WeightSpan w) {
  return kernels::variance<double>(x, m, w);
}

double s_ever_measured(MaskSpan m, WeightSpan w, double temperature) {
  return kernels::ever_measured<double>(m, w, temperature);
}

double s_ever_measured_hard(MaskSpan m, WeightSpan w) {
  return kernels::ever_measured_hard<double>(m, w);
}

double s_indicator_mean(MaskSpan m, WeightSpan w) { return kernels::indicator_mean<double>(m, w); }

double s_indicator_variance(MaskSpan m, WeightSpan w) {
  return kernels::indicator_variance<double>(m, w);
}

double s_switch_count(MaskSpan m, WeightSpan w) { return kernels::switch_count<double>(m, w); }

double s_first_measured(MaskSpan m) { return kernels::first_measured<double>(m); }

double s_last_measured(MaskSpan m) { return kernels::last_measured<double>(m); }

double s_frac_above(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_plus, double temperature) {
  return kernels::frac<double>(x, m, w, phi_plus, temperature, +1);
}

double s_frac_above_hard(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_plus) {
  return kernels::frac_hard<double>(x, m, w, phi_plus, +1);
}

double s_frac_below(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_minus, double temperature) {
  return kernels::frac<double>(x, m, w, phi_minus, temperature, -1);
}

double s_frac_below_hard(SeriesSpan x, MaskSpan m, WeightSpan w, double phi_minus) {
  return kernels::frac_hard<double>(x, m, w, phi_minus, -1);
}

double s_slope(SeriesSpan x, MaskSpan m, WeightSpan w) { return kernels::slope<double>(x, m, w); }

double s_slope_stderr(SeriesSpan x, MaskSpan m, WeightSpan w) {
  return kernels::slope_stderr<double>(x, m, w);
}

void summarize_example(const CohortArrays& batch, std::size_t n, const WeightTensor& weights,
                       const SummaryParams& params, SummaryMode mode, std::span<double> out) {
  for (std::size_t d = 0; d < batch.num_vars; ++d) {
    kernels::summarize_variable<double>(
        batch.series(n, d), batch.mask(n, d), [&](std::size_t i) { return weights.column(d, i); },
        params.phi_plus[d], params.phi_minus[d], params.temperature, mode == SummaryMode::hard,
        out.data() + d * kNumSummaries);
  }
}

std::vector<long double> summarize_example_wide(const CohortArrays& batch, std::size_t n,
                                                const SummaryParams& params, SummaryMode mode) {
  const bool hard = mode == SummaryMode::hard;
  const std::size_t T = params.num_hours;
  const long double tau = params.temperature;
  std::vector<long double> w(T * kNumSummaries);
  std::vector<long double> out(batch.num_vars * kNumSummaries);
  for (std::size_t d = 0; d < batch.num_vars; ++d) {
    for (std::size_t i = 0; i < kNumSummaries; ++i) {
      const long double c = params.durations[d * kNumSummaries + i];
      for (std::size_t h = 0; h < T; ++h) {
        const long double shift = static_cast<long double>(h + 1) - static_cast<long double>(T) + c;
        w[i * T + h] = hard ? (shift > 0.0L ? 1.0L : 0.0L) : sigmoid(shift / tau);
      }
    }
    kernels::summarize_variable<long double>(
        batch.series(n, d), batch.mask(n, d),
        [&](std::size_t i) { return std::span<const long double>(w.data() + i * T, T); },
        params.phi_plus[d], params.phi_minus[d], tau, hard, out.data() + d * kNumSummaries);
  }
  return out;
}

SummaryTensor compute_summary_tensor(const CohortArrays& batch, const SummaryParams& params,
                                     SummaryMode mode) {
  batch.check_shape();
  params.validate();
  if (params.num_vars != batch.num_vars || params.num_hours != batch.num_hours) {
    throw DataError(DataError::Kind::shape, "summary parameters do not match the batch");
  }
  const WeightTensor weights = compute_weights(params, mode);
  SummaryTensor out;
  out.num_examples = batch.num_examples;
  out.num_vars = batch.num_vars;
  out.values.assign(batch.num_examples * batch.num_vars * kNumSummaries, 0.0);
  const std::size_t stride = batch.num_vars * kNumSummaries;
  for (std::size_t n = 0; n < batch.num_examples; ++n) {
    summarize_example(batch, n, weights, params, mode,
                      std::span<double>(out.values.data() + n * stride, stride));
  }
  return out;
}

}  // namespace tsum
