#include "doctest.h"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tsum/experiment.hpp"
#include "tsum/gradients.hpp"

using namespace tsum;

namespace {

SummaryParams random_summary_params(std::size_t d, std::size_t t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dur(0.0, static_cast<double>(t));
  std::uniform_real_distribution<double> thr(-1.0, 1.0);
  SummaryParams p;
  p.num_vars = d;
  p.num_hours = t;
  for (std::size_t k = 0; k < d * kNumSummaries; ++k) p.durations.push_back(dur(rng));
  for (std::size_t k = 0; k < d; ++k) {
    p.phi_plus.push_back(thr(rng));
    p.phi_minus.push_back(thr(rng));
  }
  return p;
}

ModelParams random_model(std::size_t f, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  ModelParams mp;
  for (std::size_t j = 0; j < f; ++j) mp.coeffs.push_back(normal(rng));
  mp.bias = normal(rng);
  return mp;
}

}  // namespace

TEST_CASE("gradient at zero coefficients has the closed logistic form") {
  const auto b = oracle::random_batch(8, 2, 6, 2, 70);
  const auto sp = random_summary_params(2, 6, 1);
  TrainConfig config;
  const auto F = FeatureLayout::of(b, config.mode).num_features();
  ModelParams mp;
  mp.coeffs.assign(F, 0.0);
  const auto lg = loss_and_gradients(sp, mp, b, config);
  const double omega0 = horseshoe_penalty(mp.coeffs, config.tau_hs);
  CHECK(lg.loss == doctest::Approx(std::log(2.0) + config.alpha * omega0).epsilon(1e-12));

  const auto Z = assemble_features(compute_summary_tensor(b, sp, SummaryMode::relaxed), b,
                                   config.mode);
  for (std::size_t j = 0; j < F; ++j) {
    double expected = 0.0;
    for (std::size_t n = 0; n < 8; ++n) expected += (0.5 - b.y[n]) * Z.row(n)[j];
    expected /= 8.0;
    CHECK(lg.gradients.d_coeffs[j] == doctest::Approx(expected).epsilon(1e-10));
  }
  CHECK(std::abs(lg.gradients.d_bias()) < 1e-15);
  // At zero every summary coefficient is zero, so nothing flows into C or phi.
  for (double g : lg.gradients.d_C) CHECK(g == 0.0);
}

TEST_CASE("gradient structure") {
  const auto b = oracle::random_batch(10, 3, 8, 1, 71);
  const auto sp = random_summary_params(3, 8, 2);
  TrainConfig config;
  const auto mp = random_model(FeatureLayout::of(b, config.mode).num_features(), 3);

  SUBCASE("first and last measured carry no duration gradient") {
    const auto g = loss_and_gradients(sp, mp, b, config).gradients;
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(g.d_C[d * kNumSummaries + static_cast<std::size_t>(SummaryKind::first_measured)] == 0.0);
      CHECK(g.d_C[d * kNumSummaries + static_cast<std::size_t>(SummaryKind::last_measured)] == 0.0);
    }
    CHECK(g.d_coeffs.size() == mp.coeffs.size() + 1);
    CHECK(g.d_C.size() == sp.durations.size());
  }
  SUBCASE("hard mode has no summary-parameter gradient") {
    config.mode = ModelMode::hard;
    const auto g = loss_and_gradients(sp, mp, b, config).gradients;
    for (double v : g.d_C) CHECK(v == 0.0);
    for (double v : g.d_phi_plus) CHECK(v == 0.0);
    for (double v : g.d_phi_minus) CHECK(v == 0.0);
  }
  SUBCASE("thresholds of a never-measured variable get zero gradient") {
    auto unmeasured = b;
    for (std::size_t n = 0; n < 10; ++n) {
      for (std::size_t t = 0; t < 8; ++t) unmeasured.m[unmeasured.offset(n, 1) + t] = 0;
    }
    const auto g = loss_and_gradients(sp, mp, unmeasured, config).gradients;
    CHECK(g.d_phi_plus[1] == 0.0);
    CHECK(g.d_phi_minus[1] == 0.0);
  }
  SUBCASE("loss equals the predictor's total loss") {
    CHECK(loss_and_gradients(sp, mp, b, config).loss == total_loss(sp, mp, b, config));
  }
  SUBCASE("deterministic") {
    const auto a = loss_and_gradients(sp, mp, b, config).gradients;
    const auto c = loss_and_gradients(sp, mp, b, config).gradients;
    CHECK(a.d_coeffs == c.d_coeffs);
    CHECK(a.d_C == c.d_C);
    CHECK(a.d_phi_plus == c.d_phi_plus);
  }
}

TEST_CASE("gradients add over examples") {
  const auto b = oracle::random_batch(2, 2, 6, 1, 72);
  const auto sp = random_summary_params(2, 6, 4);
  TrainConfig config;
  config.alpha = 0.0;
  const auto mp = random_model(FeatureLayout::of(b, config.mode).num_features(), 5);
  const std::vector<double> w = {1.0, 1.0};
  const std::vector<std::size_t> both = {0, 1}, first = {0}, second = {1};
  const auto gab = loss_and_gradients(sp, mp, b, w, both, config).gradients;
  const auto ga = loss_and_gradients(sp, mp, b, w, first, config).gradients;
  const auto gb = loss_and_gradients(sp, mp, b, w, second, config).gradients;
  // The loss is a mean over rows, so the pair gradient is half the sum.
  for (std::size_t j = 0; j < gab.d_coeffs.size(); ++j) {
    CHECK(2.0 * gab.d_coeffs[j] == doctest::Approx(ga.d_coeffs[j] + gb.d_coeffs[j]).epsilon(1e-12));
  }
  for (std::size_t k = 0; k < gab.d_C.size(); ++k) {
    CHECK(2.0 * gab.d_C[k] == doctest::Approx(ga.d_C[k] + gb.d_C[k]).epsilon(1e-12));
  }
  for (std::size_t d = 0; d < 2; ++d) {
    CHECK(2.0 * gab.d_phi_plus[d] ==
          doctest::Approx(ga.d_phi_plus[d] + gb.d_phi_plus[d]).epsilon(1e-12));
  }
}

TEST_CASE("single-summary vector-Jacobian products against central differences") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  const std::size_t T = 7;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<double> x(T), w(T);
    std::vector<std::uint8_t> m(T);
    for (std::size_t t = 0; t < T; ++t) {
      x[t] = normal(rng);
      w[t] = oracle::sigmoid(normal(rng));
      m[t] = normal(rng) > -0.6 ? 1 : 0;
    }
    m[0] = m[3] = 1;
    const double phi = 0.3 * normal(rng);
    for (std::size_t i = 0; i < kNumSummaries; ++i) {
      const auto kind = static_cast<SummaryKind>(i);
      if (!is_differentiable(kind)) continue;
      std::vector<double> dw(T, 0.0);
      summary_vjp(kind, x, m, w, phi, 0.5, 1.0, dw);
      auto eval = [&](const std::vector<double>& ww) {
        switch (kind) {
          case SummaryKind::mean: return s_mean(x, m, ww);
          case SummaryKind::variance: return s_variance(x, m, ww);
          case SummaryKind::ever_measured: return s_ever_measured(m, ww, 0.5);
          case SummaryKind::indicator_mean: return s_indicator_mean(m, ww);
          case SummaryKind::indicator_variance: return s_indicator_variance(m, ww);
          case SummaryKind::switch_count: return s_switch_count(m, ww);
          case SummaryKind::frac_above: return s_frac_above(x, m, ww, phi, 0.5);
          case SummaryKind::frac_below: return s_frac_below(x, m, ww, phi, 0.5);
          case SummaryKind::slope: return s_slope(x, m, ww);
          default: return s_slope_stderr(x, m, ww);
        }
      };
      for (std::size_t t = 0; t < T; ++t) {
        auto hi = w, lo = w;
        hi[t] += 1e-6;
        lo[t] -= 1e-6;
        const double fd = (eval(hi) - eval(lo)) / 2e-6;
        INFO(kSummaryNames[i] << " t=" << t);
        CHECK(dw[t] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("finite-difference check on random small batches") {
  TrainConfig config;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    config.seed = seed;
    const auto f = random_gradcheck_fixture(8, 3, 12, config);
    const auto start = std::chrono::steady_clock::now();
    const auto r = finite_difference_check(f.summary_params, f.model_params, f.batch, config);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    INFO("seed " << seed << " worst " << r.worst_parameter);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(seconds < 10.0);
    // All 36 durations, 6 thresholds, 32 coefficients and the bias.
    CHECK(r.entries.size() == 36 + 6 + 32 + 1);
  }
}

TEST_CASE("finite-difference check in the saturated region") {
  auto b = oracle::random_batch(8, 2, 10, 1, 73);
  SummaryParams sp;
  sp.num_vars = 2;
  sp.num_hours = 10;
  sp.temperature = 0.01;
  // Half-integer durations put every window sigmoid at least 50 tau from zero;
  // thresholds far outside the data saturate the exceedance sigmoids.
  for (std::size_t k = 0; k < 2 * kNumSummaries; ++k) sp.durations.push_back(3.5 + (k % 5));
  sp.phi_plus = {40.0, 40.0};
  sp.phi_minus = {-40.0, -40.0};
  TrainConfig config;
  config.tau_temp = 0.01;
  const auto mp = random_model(FeatureLayout::of(b, config.mode).num_features(), 6);
  const auto r = finite_difference_check(sp, mp, b, config);
  CHECK(r.max_rel_error < 1e-4);
  const auto g = loss_and_gradients(sp, mp, b, config).gradients;
  for (double v : g.d_C) CHECK(std::abs(v) < 1e-12);
  for (double v : g.d_phi_plus) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("central differences converge at second order") {
  TrainConfig config;
  config.tau_temp = 0.5;
  config.seed = 3;
  const auto f = random_gradcheck_fixture(8, 3, 12, config);
  auto sp = f.summary_params;
  sp.temperature = 0.5;
  auto error_at = [&](double eps) {
    FdOptions o;
    o.epsilon = eps;
    const auto r = finite_difference_check(sp, f.model_params, f.batch, config, o);
    for (const auto& e : r.entries) {
      if (e.parameter == "phi_plus[0]") return std::abs(e.numeric - e.analytic);
    }
    return -1.0;
  };
  const double e1 = error_at(2e-2);
  const double e2 = error_at(4e-2);
  REQUIRE(e1 > 0.0);
  CHECK(e2 / e1 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("a corrupted gradient fails the check") {
  TrainConfig config;
  const auto f = random_gradcheck_fixture(8, 3, 12, config);
  FdOptions o;
  o.tamper = [](GradientSet& g) { g.d_C.front() = g.d_C.front() * 1.5 + 1e-3; };
  const auto r = finite_difference_check(f.summary_params, f.model_params, f.batch, config, o);
  CHECK_FALSE(r.passed(1e-4));
  CHECK(r.worst_parameter == "C[0,mean]");
}

TEST_CASE("finite-difference probes stay inside [0, T]") {
  TrainConfig config;
  auto f = random_gradcheck_fixture(8, 2, 6, config);
  f.summary_params.durations[0] = 6.0;
  f.summary_params.durations[1] = 0.0;
  const auto r = finite_difference_check(f.summary_params, f.model_params, f.batch, config);
  for (const auto& e : r.entries) CHECK(std::isfinite(e.numeric));
}

TEST_CASE("weight derivative") {
  for (double w : {0.1, 0.5, 0.9}) {
    CHECK(weight_derivative(w, 0.2) == doctest::Approx(w * (1 - w) / 0.2));
  }
}
