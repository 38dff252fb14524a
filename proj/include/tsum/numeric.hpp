#pragma once

#include <cmath>
#include <concepts>

namespace tsum {

// Branch form keeps exp() from overflowing for large |x|.
template <std::floating_point R>
R sigmoid(R x) {
  if (x >= R(0)) {
    return R(1) / (R(1) + std::exp(-x));
  }
  const R e = std::exp(x);
  return e / (R(1) + e);
}

/// log(sigma(x)) without cancellation.
template <std::floating_point R>
R log_sigmoid(R x) {
  if (x >= R(0)) {
    return -std::log1p(std::exp(-x));
  }
  return x - std::log1p(std::exp(x));
}

/// log(1 + e^x).
inline double softplus(double x) { return -log_sigmoid(-x); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace tsum
