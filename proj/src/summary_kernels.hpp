#pragma once

// Summary formulas shared by the double API and the extended-precision path.
// `R` is the working precision; inputs stay double.

#include <algorithm>
#include <span>
#include <vector>

#include "tsum/numeric.hpp"
#include "tsum/summaries.hpp"

namespace tsum::kernels {

template <class R>
using Weights = std::span<const R>;

template <class R>
R hour_of(std::size_t h) {
  return static_cast<R>(h + 1);
}

template <class R>
R guard(R den) {
  return std::max(den, static_cast<R>(kGuard));
}

/// V1^2 - V2 as sum_i v_i * (sum_{j != i} v_j); prefix and suffix sums keep a
/// dominant weight from swamping the rest.
template <class R>
R cross_sum(std::span<const R> v, std::span<R> others) {
  const std::size_t n = v.size();
  std::vector<R> suffix(n + 1, R(0));
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + v[i];
  R prefix = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const R rest = prefix + suffix[i + 1];
    if (!others.empty()) others[i] = rest;
    total += v[i] * rest;
    prefix += v[i];
  }
  return total;
}

template <class R, class ValueAt>
R unbiased_variance(std::span<const R> v, ValueAt value) {
  R v1 = 0, sx = 0;
  for (std::size_t h = 0; h < v.size(); ++h) {
    v1 += v[h];
    sx += v[h] * value(h);
  }
  if (v1 <= R(0)) return 0;
  const R mean = sx / v1;
  R q = 0;
  for (std::size_t h = 0; h < v.size(); ++h) {
    const R dev = value(h) - mean;
    q += v[h] * dev * dev;
  }
  return q * v1 / guard(cross_sum<R>(v, {}));
}

template <class R>
struct LineMoments {
  R total = 0;  // sum v
  R sxy = 0;
  R stt = 0;
};

/// Weighted centered moments of (t, x) under v = w * m.
template <class R>
LineMoments<R> line_moments(SeriesSpan x, MaskSpan m, Weights<R> w) {
  LineMoments<R> out;
  R st = 0, sx = 0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    out.total += w[h];
    st += w[h] * hour_of<R>(h);
    sx += w[h] * x[h];
  }
  if (out.total <= R(0)) return out;
  const R tbar = st / out.total;
  const R xbar = sx / out.total;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    const R dt = hour_of<R>(h) - tbar;
    out.sxy += w[h] * dt * (x[h] - xbar);
    out.stt += w[h] * dt * dt;
  }
  return out;
}

template <class R>
R mean(SeriesSpan x, MaskSpan m, Weights<R> w) {
  R num = 0, den = 0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    num += w[h] * x[h];
    den += w[h];
  }
  return num / guard(den);
}

template <class R>
R variance(SeriesSpan x, MaskSpan m, Weights<R> w) {
  std::vector<R> v(x.size());
  for (std::size_t h = 0; h < x.size(); ++h) v[h] = m[h] ? w[h] : R(0);
  return unbiased_variance<R>(v, [&](std::size_t h) { return static_cast<R>(x[h]); });
}

template <class R>
R ever_measured(MaskSpan m, Weights<R> w, R temperature) {
  R measured = 0, total = 0;
  for (std::size_t h = 0; h < m.size(); ++h) {
    total += w[h];
    if (m[h]) measured += w[h];
  }
  return sigmoid(measured / guard(temperature * total));
}

template <class R>
R ever_measured_hard(MaskSpan m, Weights<R> w) {
  for (std::size_t h = 0; h < m.size(); ++h) {
    if (m[h] && w[h] > R(0)) return 1;
  }
  return R(0.5);
}

template <class R>
R indicator_mean(MaskSpan m, Weights<R> w) {
  R measured = 0, total = 0;
  for (std::size_t h = 0; h < m.size(); ++h) {
    total += w[h];
    if (m[h]) measured += w[h];
  }
  return measured / guard(total);
}

template <class R>
R indicator_variance(MaskSpan m, Weights<R> w) {
  return unbiased_variance<R>(w, [&](std::size_t h) { return m[h] ? R(1) : R(0); });
}

template <class R>
R switch_count(MaskSpan m, Weights<R> w) {
  R switches = 0, total = 0;
  for (std::size_t h = 0; h < m.size(); ++h) {
    total += w[h];
    if (h + 1 < m.size() && m[h + 1] != m[h]) switches += w[h];
  }
  return switches / guard(total);
}

template <class R>
R first_measured(MaskSpan m) {
  for (std::size_t h = 0; h < m.size(); ++h) {
    if (m[h]) return hour_of<R>(h) / static_cast<R>(m.size());
  }
  return 1;
}

template <class R>
R last_measured(MaskSpan m) {
  for (std::size_t h = m.size(); h-- > 0;) {
    if (m[h]) return hour_of<R>(h) / static_cast<R>(m.size());
  }
  return 0;
}

/// Soft fraction of measured hours above (sign = +1) or below (sign = -1) phi.
template <class R>
R frac(SeriesSpan x, MaskSpan m, Weights<R> w, R phi, R temperature, int sign) {
  R num = 0, den = 0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    num += w[h] * sigmoid(static_cast<R>(sign) * (x[h] - phi) / temperature);
    den += w[h];
  }
  return num / guard(den);
}

template <class R>
R frac_hard(SeriesSpan x, MaskSpan m, Weights<R> w, R phi, int sign) {
  R num = 0, den = 0;
  for (std::size_t h = 0; h < x.size(); ++h) {
    if (!m[h]) continue;
    if (sign > 0 ? x[h] > phi : x[h] < phi) num += w[h];
    den += w[h];
  }
  return num / guard(den);
}

template <class R>
R slope(SeriesSpan x, MaskSpan m, Weights<R> w) {
  const auto mom = line_moments<R>(x, m, w);
  return mom.sxy / guard(mom.stt);
}

template <class R>
R slope_stderr(SeriesSpan x, MaskSpan m, Weights<R> w) {
  const auto mom = line_moments<R>(x, m, w);
  return R(1) / guard(mom.stt);
}

/// All I summaries of one variable; `weight(i)` is the column for summary i.
template <class R, class ColumnAt>
void summarize_variable(SeriesSpan x, MaskSpan m, ColumnAt weight, R phi_plus, R phi_minus,
                        R tau, bool hard, R* row) {
  using K = SummaryKind;
  auto col = [&](K k) { return weight(static_cast<std::size_t>(k)); };
  row[0] = mean<R>(x, m, col(K::mean));
  row[1] = variance<R>(x, m, col(K::variance));
  row[2] = hard ? ever_measured_hard<R>(m, col(K::ever_measured))
                : ever_measured<R>(m, col(K::ever_measured), tau);
  row[3] = indicator_mean<R>(m, col(K::indicator_mean));
  row[4] = indicator_variance<R>(m, col(K::indicator_variance));
  row[5] = switch_count<R>(m, col(K::switch_count));
  row[6] = first_measured<R>(m);
  row[7] = last_measured<R>(m);
  row[8] = hard ? frac_hard<R>(x, m, col(K::frac_above), phi_plus, +1)
                : frac<R>(x, m, col(K::frac_above), phi_plus, tau, +1);
  row[9] = hard ? frac_hard<R>(x, m, col(K::frac_below), phi_minus, -1)
                : frac<R>(x, m, col(K::frac_below), phi_minus, tau, -1);
  row[10] = slope<R>(x, m, col(K::slope));
  row[11] = slope_stderr<R>(x, m, col(K::slope_stderr));
}

}  // namespace tsum::kernels
