#include "tsum/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tsum/errors.hpp"
#include "tsum/numeric.hpp"

namespace tsum {

namespace {

inline double hour_of(std::size_t h) { return static_cast<double>(h + 1); }

/// d/dv_h of the reliability-weighted unbiased variance, scaled by upstream.
/// `emit(h, g)` receives the gradient for entry h.
template <class WeightAt, class ValueAt, class Emit>
void unbiased_variance_vjp(std::size_t T, WeightAt weight, ValueAt value, double upstream,
                           Emit emit) {
  std::vector<double> v(T), others(T);
  double v1 = 0.0, sx = 0.0;
  for (std::size_t h = 0; h < T; ++h) {
    v[h] = weight(h);
    v1 += v[h];
    sx += v[h] * value(h);
  }
  if (v1 <= 0.0) return;
  const double mean = sx / v1;
  double q = 0.0;
  for (std::size_t h = 0; h < T; ++h) {
    const double dev = value(h) - mean;
    q += v[h] * dev * dev;
  }
  const double raw_den = weight_cross_sum(v, others);
  const bool clamped = raw_den <= kGuard;
  const double den = clamped ? kGuard : raw_den;
  for (std::size_t h = 0; h < T; ++h) {
    const double dev = value(h) - mean;
    double g = (dev * dev * v1 + q) / den;
    // d(V1^2 - V2)/dv_h = 2 * (V1 - v_h)
    if (!clamped) g -= q * v1 * 2.0 * others[h] / (den * den);
    emit(h, upstream * g);
  }
}

void mean_vjp(SeriesSpan x, MaskSpan m, WeightSpan w, double up, std::span<double> dw) {
  double num = 0.0, den = 0.0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    num += w[h] * x[h];
    den += w[h];
  }
  const bool clamped = den <= kGuard;
  const double d = clamped ? kGuard : den;
  const double value = num / d;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    dw[h] += up * (x[h] - (clamped ? 0.0 : value)) / d;
  }
}

void ever_measured_vjp(MaskSpan m, WeightSpan w, double tau, double up, std::span<double> dw) {
  double measured = 0.0, total = 0.0;
  for (std::size_t h = 0; h < m.size(); ++h) {
    total += w[h];
    if (m[h]) measured += w[h];
  }
  const double raw_den = tau * total;
  const bool clamped = raw_den <= kGuard;
  const double den = clamped ? kGuard : raw_den;
  const double e = sigmoid(measured / den);
  const double de = up * e * (1.0 - e);
  const double shared = clamped ? 0.0 : measured * tau / (den * den);
  for (std::size_t h = 0; h < m.size(); ++h) {
    dw[h] += de * ((m[h] ? 1.0 / den : 0.0) - shared);
  }
}

/// Ratio sum(w * a) / max(sum w, eps) with a per-hour numerator term `a`.
template <class NumeratorAt>
void ratio_over_total_vjp(MaskSpan m, WeightSpan w, NumeratorAt a, double up, std::span<double> dw) {
  double num = 0.0, total = 0.0;
  for (std::size_t h = 0; h < m.size(); ++h) {
    total += w[h];
    num += w[h] * a(h);
  }
  const bool clamped = total <= kGuard;
  const double den = clamped ? kGuard : total;
  const double value = num / den;
  for (std::size_t h = 0; h < m.size(); ++h) {
    dw[h] += up * (a(h) - (clamped ? 0.0 : value)) / den;
  }
}

double threshold_vjp(SeriesSpan x, MaskSpan m, WeightSpan w, double phi, double tau, bool above,
                     double up, std::span<double> dw) {
  double num = 0.0, den = 0.0, dnum_dphi = 0.0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    const double s = sigmoid(above ? (x[h] - phi) / tau : (phi - x[h]) / tau);
    num += w[h] * s;
    den += w[h];
    dnum_dphi += w[h] * s * (1.0 - s) * (above ? -1.0 : 1.0) / tau;
  }
  const bool clamped = den <= kGuard;
  const double d = clamped ? kGuard : den;
  const double value = num / d;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    const double s = sigmoid(above ? (x[h] - phi) / tau : (phi - x[h]) / tau);
    dw[h] += up * (s - (clamped ? 0.0 : value)) / d;
  }
  return up * dnum_dphi / d;
}

void line_vjp(SeriesSpan x, MaskSpan m, WeightSpan w, bool stderr_only, double up,
              std::span<double> dw) {
  double total = 0.0, st = 0.0, sx = 0.0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    total += w[h];
    st += w[h] * hour_of(h);
    sx += w[h] * x[h];
  }
  if (total <= 0.0) return;
  const double tbar = st / total;
  const double xbar = sx / total;
  double sxy = 0.0, stt = 0.0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    const double dt = hour_of(h) - tbar;
    sxy += w[h] * dt * (x[h] - xbar);
    stt += w[h] * dt * dt;
  }
  const bool clamped = stt <= kGuard;
  const double den = clamped ? kGuard : stt;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    const double dt = hour_of(h) - tbar;
    double g = 0.0;
    if (stderr_only) {
      if (!clamped) g = -dt * dt / (den * den);
    } else {
      g = dt * (x[h] - xbar) / den;
      if (!clamped) g -= sxy * dt * dt / (den * den);
    }
    dw[h] += up * g;
  }
}

}  // namespace

double weight_derivative(double w, double temperature) { return w * (1.0 - w) / temperature; }

double summary_vjp(SummaryKind kind, SeriesSpan x, MaskSpan m, WeightSpan w, double phi,
                   double temperature, double upstream, std::span<double> dw) {
  const std::size_t T = x.size();
  switch (kind) {
    case SummaryKind::mean:
      mean_vjp(x, m, w, upstream, dw);
      return 0.0;
    case SummaryKind::variance:
      unbiased_variance_vjp(
          T, [&](std::size_t h) { return m[h] ? w[h] : 0.0; }, [&](std::size_t h) { return x[h]; },
          upstream, [&](std::size_t h, double g) { if (m[h]) dw[h] += g; });
      return 0.0;
    case SummaryKind::ever_measured:
      ever_measured_vjp(m, w, temperature, upstream, dw);
      return 0.0;
    case SummaryKind::indicator_mean:
      ratio_over_total_vjp(m, w, [&](std::size_t h) { return m[h] ? 1.0 : 0.0; }, upstream, dw);
      return 0.0;
    case SummaryKind::indicator_variance:
      unbiased_variance_vjp(
          T, [&](std::size_t h) { return w[h]; },
          [&](std::size_t h) { return m[h] ? 1.0 : 0.0; }, upstream,
          [&](std::size_t h, double g) { dw[h] += g; });
      return 0.0;
    case SummaryKind::switch_count:
      ratio_over_total_vjp(
          m, w, [&](std::size_t h) { return h + 1 < T && m[h + 1] != m[h] ? 1.0 : 0.0; },
          upstream, dw);
      return 0.0;
    case SummaryKind::first_measured:
    case SummaryKind::last_measured:
      return 0.0;
    case SummaryKind::frac_above:
      return threshold_vjp(x, m, w, phi, temperature, true, upstream, dw);
    case SummaryKind::frac_below:
      return threshold_vjp(x, m, w, phi, temperature, false, upstream, dw);
    case SummaryKind::slope:
      line_vjp(x, m, w, false, upstream, dw);
      return 0.0;
    case SummaryKind::slope_stderr:
      line_vjp(x, m, w, true, upstream, dw);
      return 0.0;
  }
  return 0.0;
}

LossAndGradients loss_and_gradients(const SummaryParams& summary_params,
                                    const ModelParams& model_params, const CohortArrays& batch,
                                    std::span<const double> weights,
                                    std::span<const std::size_t> rows, const TrainConfig& config) {
  const ForwardPass pass = forward(summary_params, model_params, batch, weights, rows, config);
  const auto layout = FeatureLayout::of(batch, config.mode);
  const std::size_t F = layout.num_features();
  const std::size_t D = batch.num_vars;
  const std::size_t T = batch.num_hours;
  const std::size_t R = rows.size();

  LossAndGradients out;
  out.loss = pass.loss;
  GradientSet& g = out.gradients;
  g.d_coeffs.assign(F + 1, 0.0);
  g.d_C.assign(D * kNumSummaries, 0.0);
  g.d_phi_plus.assign(D, 0.0);
  g.d_phi_minus.assign(D, 0.0);

  // dL/dlogit_r = w_r (sigma(l_r) - y_r) / R
  std::vector<double> dlogit(R);
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t n = rows[r];
    dlogit[r] = weights[n] * (sigmoid(pass.logits[r]) - (batch.y[n] ? 1.0 : 0.0)) /
                static_cast<double>(R);
  }

  for (std::size_t r = 0; r < R; ++r) {
    const double* z = pass.design.data() + r * F;
    for (std::size_t j = 0; j < F; ++j) g.d_coeffs[j] += dlogit[r] * z[j];
    g.d_coeffs[F] += dlogit[r];
  }
  if (config.alpha > 0.0) {
    for (std::size_t j = 0; j < F; ++j) {
      const double b = model_params.coeffs[j];
      g.d_coeffs[j] += config.alpha * (config.penalty == Penalty::horseshoe
                                           ? horseshoe_derivative(b, config.tau_hs)
                                           : 2.0 * b);
    }
  }

  // Hard windows and thresholds are piecewise constant: no gradient path.
  if (config.mode != ModelMode::relaxed) return out;

  const WeightTensor window = compute_weights(summary_params, SummaryMode::relaxed);
  const double tau = summary_params.temperature;
  std::vector<double> dw(D * kNumSummaries * T, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t n = rows[r];
    for (std::size_t d = 0; d < D; ++d) {
      const auto x = batch.series(n, d);
      const auto m = batch.mask(n, d);
      for (std::size_t i = 0; i < kNumSummaries; ++i) {
        const auto kind = static_cast<SummaryKind>(i);
        if (!is_differentiable(kind)) continue;
        const double up = dlogit[r] * model_params.coeffs[d * kNumSummaries + i];
        if (up == 0.0) continue;
        const double phi = kind == SummaryKind::frac_below ? summary_params.phi_minus[d]
                                                           : summary_params.phi_plus[d];
        std::span<double> dcol(dw.data() + (d * kNumSummaries + i) * T, T);
        const double dphi = summary_vjp(kind, x, m, window.column(d, i), phi, tau, up, dcol);
        if (kind == SummaryKind::frac_above) g.d_phi_plus[d] += dphi;
        if (kind == SummaryKind::frac_below) g.d_phi_minus[d] += dphi;
      }
    }
  }
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = 0; i < kNumSummaries; ++i) {
      const auto col = window.column(d, i);
      const double* dcol = dw.data() + (d * kNumSummaries + i) * T;
      double sum = 0.0;
      for (std::size_t h = 0; h < T; ++h) sum += dcol[h] * weight_derivative(col[h], tau);
      g.d_C[d * kNumSummaries + i] = sum;
    }
  }
  return out;
}

LossAndGradients loss_and_gradients(const SummaryParams& summary_params,
                                    const ModelParams& model_params, const CohortArrays& batch,
                                    const TrainConfig& config) {
  const auto weights = class_weights(batch.y);
  std::vector<std::size_t> rows(batch.num_examples);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return loss_and_gradients(summary_params, model_params, batch, weights, rows, config);
}

FdReport finite_difference_check(const SummaryParams& summary_params,
                                 const ModelParams& model_params, const CohortArrays& batch,
                                 const TrainConfig& config, const FdOptions& options) {
  const auto weights = class_weights(batch.y);
  std::vector<std::size_t> rows(batch.num_examples);
  std::iota(rows.begin(), rows.end(), std::size_t{0});

  auto analytic = loss_and_gradients(summary_params, model_params, batch, weights, rows, config);
  if (options.tamper) options.tamper(analytic.gradients);
  const GradientSet& g = analytic.gradients;

  SummaryParams sp = summary_params;
  ModelParams mp = model_params;
  auto loss_at = [&] { return loss_wide(sp, mp, batch, weights, rows, config); };

  FdReport report;
  // Perturbs one scalar in place, keeping it inside [lo_bound, hi_bound].
  auto probe = [&](std::string name, double& slot, double grad, double lo_bound, double hi_bound) {
    const double saved = slot;
    const double hi = std::min(saved + options.epsilon, hi_bound);
    const double lo = std::max(saved - options.epsilon, lo_bound);
    slot = hi;
    const long double f_hi = loss_at();
    slot = lo;
    const long double f_lo = loss_at();
    slot = saved;
    const double numeric = static_cast<double>((f_hi - f_lo) / (hi - lo));
    const double rel = std::abs(grad - numeric) / std::max(1e-8, std::abs(grad) + std::abs(numeric));
    if (report.entries.empty() || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_parameter = name;
    }
    report.entries.push_back({std::move(name), grad, numeric, rel});
  };

  constexpr double inf = std::numeric_limits<double>::infinity();
  if (uses_summaries(config.mode)) {
    const double T = static_cast<double>(sp.num_hours);
    for (std::size_t d = 0; d < sp.num_vars; ++d) {
      for (std::size_t i = 0; i < kNumSummaries; ++i) {
        const std::size_t k = d * kNumSummaries + i;
        probe("C[" + std::to_string(d) + "," + std::string(kSummaryNames[i]) + "]",
              sp.durations[k], g.d_C[k], 0.0, T);
      }
    }
    for (std::size_t d = 0; d < sp.num_vars; ++d) {
      probe("phi_plus[" + std::to_string(d) + "]", sp.phi_plus[d], g.d_phi_plus[d], -inf, inf);
      probe("phi_minus[" + std::to_string(d) + "]", sp.phi_minus[d], g.d_phi_minus[d], -inf, inf);
    }
  }

  std::vector<std::size_t> columns(mp.coeffs.size());
  std::iota(columns.begin(), columns.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);
  std::shuffle(columns.begin(), columns.end(), rng);
  columns.resize(std::min(columns.size(), options.num_coeffs));
  std::sort(columns.begin(), columns.end());
  for (const std::size_t j : columns) {
    probe("coeff[" + std::to_string(j) + "]", mp.coeffs[j], g.d_coeffs[j], -inf, inf);
  }
  probe("bias", mp.bias, g.d_bias(), -inf, inf);
  return report;
}

}  // namespace tsum
