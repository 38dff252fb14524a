#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "tsum/evaluator.hpp"
#include "tsum/gradients.hpp"
#include "tsum/numeric.hpp"
#include "tsum/trainer.hpp"

using namespace tsum;

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.max_epochs = 30;
  c.eval_interval = 5;
  c.patience = 100;
  c.batch_size = 16;
  return c;
}

// Fully measured batch; variable 0 sits at +1 for positives and -1 for
// negatives (plus noise), so the classes are linearly separable.
ClinicalBatch separable_batch(std::size_t n, std::size_t t, std::uint64_t seed) {
  ClinicalBatch b = oracle::random_batch(n, 2, t, 0, seed, 1.0);
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (std::size_t i = 0; i < n; ++i) {
    const double centre = b.y[i] ? 1.0 : -1.0;
    for (std::size_t h = 0; h < t; ++h) b.series(i, 0)[h] = centre + noise(rng);
  }
  return b;
}

double train_auc(const FitResult& fit, const ClinicalBatch& batch) {
  const auto probs =
      predict_batch(fit.final_summary_params, fit.final_model_params, batch, fit.mode);
  return auc(probs, batch.y);
}

}  // namespace

TEST_CASE("init_params: full windows, unit thresholds, zero coefficients") {
  const auto batch = oracle::random_batch(10, 3, 24, 2, 1);
  const auto init = init_params(batch, TrainConfig{});
  CHECK(init.summary.durations.size() == 3 * kNumSummaries);
  for (double c : init.summary.durations) CHECK(c == 24.0);
  for (double p : init.summary.phi_plus) CHECK(p == 1.0);
  for (double p : init.summary.phi_minus) CHECK(p == -1.0);
  for (double b : init.model.coeffs) CHECK(b == 0.0);
  CHECK(init.model.coeffs.size() == init.model.feature_names.size());
  // random_batch alternates labels: prevalence 0.5.
  CHECK(init.model.bias == 0.0);
}

TEST_CASE("init_params: bias is the logit of the training prevalence") {
  auto batch = oracle::random_batch(8, 1, 4, 0, 2);
  batch.y = {1, 0, 0, 0, 0, 0, 0, 0};
  const auto init = init_params(batch, TrainConfig{});
  CHECK(init.model.bias == doctest::Approx(std::log(1.0 / 7.0)).epsilon(1e-12));
}

TEST_CASE("init_params: deterministic and rejects single-class splits") {
  const auto batch = oracle::random_batch(10, 2, 6, 1, 3);
  const auto a = init_params(batch, TrainConfig{});
  const auto b = init_params(batch, TrainConfig{});
  CHECK(a.model.coeffs == b.model.coeffs);
  CHECK(a.model.bias == b.model.bias);
  CHECK(a.summary.durations == b.summary.durations);

  auto one_class = batch;
  for (auto& y : one_class.y) y = 1;
  CHECK_THROWS_AS(init_params(one_class, TrainConfig{}), DataError);
}

TEST_CASE("adam_update: zero gradient leaves parameters unchanged and moments decay") {
  std::vector<double> params = {1.0, -2.0};
  const std::vector<double> rates = {0.1, 0.1};
  AdamState state;
  adam_update(params, std::vector<double>{0.5, -0.5}, rates, state);
  const auto after_first = params;
  const auto m = state.m;
  const auto v = state.v;
  adam_update(params, std::vector<double>{0.0, 0.0}, rates, state);
  // The first moment still carries momentum; freeze it to isolate the zero-gradient rule.
  AdamState frozen;
  std::vector<double> still = {3.0, 4.0};
  adam_update(still, std::vector<double>{0.0, 0.0}, rates, frozen);
  CHECK(still == std::vector<double>{3.0, 4.0});
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(state.m[k] == doctest::Approx(kAdamBeta1 * m[k]).epsilon(1e-14));
    CHECK(state.v[k] == doctest::Approx(kAdamBeta2 * v[k]).epsilon(1e-14));
  }
  CHECK(params != after_first);  // momentum keeps moving the iterate
}

TEST_CASE("adam_update: first step moves each entry by lr * sign(g)") {
  std::vector<double> params = {0.0, 0.0, 0.0};
  const std::vector<double> grads = {3.0, -0.02, 1e3};
  const std::vector<double> rates = {0.1, 0.01, 0.5};
  AdamState state;
  adam_update(params, grads, rates, state);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  for (std::size_t k = 0; k < 3; ++k) {
    const double expected = -rates[k] * grads[k] / (std::abs(grads[k]) + kAdamEpsilon);
    CHECK(params[k] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(state.step == 1);
}

TEST_CASE("adam_step: durations are clamped to [0, T]") {
  const auto batch = oracle::random_batch(4, 1, 6, 0, 4);
  auto init = init_params(batch, TrainConfig{});
  GradientSet g;
  g.d_coeffs.assign(init.model.coeffs.size() + 1, 0.0);
  g.d_C.assign(init.summary.durations.size(), -1.0);  // pushes C up past T
  g.d_phi_plus.assign(1, 0.0);
  g.d_phi_minus.assign(1, 0.0);
  TrainConfig config;
  config.learning_rate = 0.5;
  AdamState state;
  adam_step(init.summary, init.model, g, state, config);
  for (double c : init.summary.durations) CHECK(c == 6.0);

  for (auto& d : g.d_C) d = 1e3;
  config.learning_rate = 10.0;
  adam_step(init.summary, init.model, g, state, config);
  adam_step(init.summary, init.model, g, state, config);
  for (double c : init.summary.durations) CHECK(c == 0.0);
}

TEST_CASE("adam_step: per-block learning rates") {
  const auto batch = oracle::random_batch(4, 1, 6, 0, 5);
  auto init = init_params(batch, TrainConfig{});
  init.summary.durations.assign(init.summary.durations.size(), 3.0);
  GradientSet g;
  g.d_coeffs.assign(init.model.coeffs.size() + 1, 1.0);
  g.d_C.assign(init.summary.durations.size(), 1.0);
  g.d_phi_plus.assign(1, 1.0);
  g.d_phi_minus.assign(1, 1.0);
  TrainConfig config;
  config.learning_rate = 0.01;
  config.duration_lr = 0.1;
  config.threshold_lr = 0.2;
  AdamState state;
  adam_step(init.summary, init.model, g, state, config);
  CHECK(init.model.coeffs[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(init.summary.durations[0] == doctest::Approx(2.9).epsilon(1e-6));
  CHECK(init.summary.phi_plus[0] == doctest::Approx(0.8).epsilon(1e-6));
  CHECK(init.summary.phi_minus[0] == doctest::Approx(-1.2).epsilon(1e-6));
}

TEST_CASE("train: separable toy cohort reaches train AUC 1") {
  const auto batch = separable_batch(64, 6, 7);
  auto config = quick_config();
  config.learning_rate = 0.05;
  config.max_epochs = 2000;
  config.eval_interval = 100;
  config.batch_size = 64;
  config.alpha = 0.0;
  const auto fit = train(batch, batch, config);
  CHECK(fit.stopped_epoch <= 2000);
  CHECK(train_auc(fit, batch) == 1.0);
}

TEST_CASE("train: zero learning rate keeps the initial parameters") {
  const auto tr = oracle::random_batch(24, 2, 6, 1, 8);
  const auto val = oracle::random_batch(12, 2, 6, 1, 9);
  auto config = quick_config();
  config.learning_rate = 0.0;
  const auto fit = train(tr, val, config);
  const auto init = init_params(tr, config);
  CHECK(fit.final_model_params.coeffs == init.model.coeffs);
  CHECK(fit.final_model_params.bias == init.model.bias);
  CHECK(fit.final_summary_params.durations == init.summary.durations);
  CHECK(fit.final_summary_params.phi_plus == init.summary.phi_plus);
  REQUIRE(!fit.history.empty());
  for (const auto& r : fit.history) {
    CHECK(r.train_loss == fit.history.front().train_loss);
    CHECK(r.val_loss == fit.history.front().val_loss);
    CHECK(r.val_auc == fit.history.front().val_auc);
  }
}

TEST_CASE("train: same seed and config give identical histories") {
  const auto tr = oracle::random_batch(40, 2, 6, 1, 10);
  const auto val = oracle::random_batch(16, 2, 6, 1, 11);
  auto config = quick_config();
  config.seed = 42;
  const auto a = train(tr, val, config);
  const auto b = train(tr, val, config);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t k = 0; k < a.history.size(); ++k) {
    CHECK(a.history[k].epoch == b.history[k].epoch);
    CHECK(a.history[k].train_loss == b.history[k].train_loss);
    CHECK(a.history[k].val_loss == b.history[k].val_loss);
    CHECK(a.history[k].val_auc == b.history[k].val_auc);
  }
  CHECK(a.final_model_params.coeffs == b.final_model_params.coeffs);
  CHECK(a.summary_params.durations == b.summary_params.durations);

  config.seed = 43;
  const auto c = train(tr, val, config);
  CHECK(c.final_model_params.coeffs != a.final_model_params.coeffs);
}

TEST_CASE("train: history and early-stopping invariants") {
  const auto tr = oracle::random_batch(60, 2, 8, 1, 12);
  const auto val = oracle::random_batch(30, 2, 8, 1, 13);
  for (std::size_t patience : {1, 2, 100}) {
    auto config = quick_config();
    config.max_epochs = 60;
    config.eval_interval = 4;
    config.patience = patience;
    config.duration_lr = 0.5;
    const auto fit = train(tr, val, config);
    CHECK(fit.stopped_epoch <= config.max_epochs);
    REQUIRE(!fit.history.empty());
    double best = -1.0;
    for (std::size_t k = 0; k < fit.history.size(); ++k) {
      if (k > 0) CHECK(fit.history[k].epoch > fit.history[k - 1].epoch);
      CHECK(std::isfinite(fit.history[k].train_loss));
      best = std::max(best, fit.history[k].val_auc);
    }
    CHECK(fit.best_val_auc == best);
    for (double c : fit.final_summary_params.durations) {
      CHECK(c >= 0.0);
      CHECK(c <= 8.0);
    }
    // The returned parameters reproduce the best validation AUC.
    const auto probs = predict_batch(fit.summary_params, fit.model_params, val, fit.mode);
    CHECK(auc(probs, val.y) == doctest::Approx(fit.best_val_auc).epsilon(1e-12));
  }
}

TEST_CASE("train: hard mode without penalty converges to the logistic optimum") {
  // Fixed summaries (hard windows, C = T) and alpha = 0 leave a convex problem.
  auto tr = oracle::random_batch(200, 1, 4, 1, 14, 1.0);
  std::mt19937_64 rng(15);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < tr.num_examples; ++i) {
    const bool lean = tr.series(i, 0)[3] > 0.0;
    tr.y[i] = coin(rng) || lean ? (coin(rng) ? 1 : 0) : 0;
  }
  auto config = quick_config();
  config.mode = ModelMode::hard;
  config.alpha = 0.0;
  config.learning_rate = 0.01;
  config.batch_size = 200;
  config.max_epochs = 4000;
  config.eval_interval = 4000;
  const auto fit = train(tr, tr, config);
  const auto lg = loss_and_gradients(fit.final_summary_params, fit.final_model_params, tr, config);
  double norm2 = 0.0;
  for (double g : lg.gradients.d_coeffs) norm2 += g * g;
  CHECK(std::sqrt(norm2) < 1e-3);
  for (double c : fit.final_summary_params.durations) CHECK(c == 4.0);
}

TEST_CASE("train: non-finite loss aborts with the partial result") {
  auto tr = oracle::random_batch(20, 1, 4, 0, 16);
  tr.x[0] = std::numeric_limits<double>::quiet_NaN();
  auto config = quick_config();
  try {
    (void)train(tr, tr, config);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.partial().stopped_epoch == 1);
    CHECK(e.partial().model_params.coeffs.size() == e.partial().model_params.feature_names.size());
  }
}
