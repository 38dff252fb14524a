#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tsum/errors.hpp"
#include "tsum/predictor.hpp"

using namespace tsum;

namespace {

FeatureLayout layout(ModelMode mode, std::size_t d, std::size_t t, std::size_t p) {
  return {mode, d, t, p};
}

SummaryParams full_window(std::size_t d, std::size_t t) {
  SummaryParams p;
  p.num_vars = d;
  p.num_hours = t;
  p.durations.assign(d * kNumSummaries, static_cast<double>(t));
  p.phi_plus.assign(d, 1.0);
  p.phi_minus.assign(d, -1.0);
  return p;
}

ModelParams random_model(std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.3);
  ModelParams mp;
  for (std::size_t j = 0; j < f; ++j) mp.coeffs.push_back(normal(rng));
  mp.bias = normal(rng);
  return mp;
}

}  // namespace

TEST_CASE("design layout widths") {
  CHECK(layout(ModelMode::relaxed, 2, 24, 3).num_features() == 24 + 3 + 4);
  SUBCASE("counts at the published cohort shape (D = 28, P = 8)") {
    // 401 derived features and 65 time-of-prediction features, bias included.
    CHECK(layout(ModelMode::relaxed, 28, 24, 8).num_features() + 1 == 401);
    CHECK(layout(ModelMode::time_of_prediction_only, 28, 24, 8).num_features() + 1 == 65);
  }
  CHECK(layout(ModelMode::flat_series, 2, 5, 1).num_features() == 1 + 2 * 2 * 5);
  CHECK(layout(ModelMode::hard, 1, 4, 0).num_features() == 12 + 2);
}

TEST_CASE("feature names follow the column order") {
  const std::vector<std::string> vars = {"hr", "gcs"};
  const std::vector<std::string> statics = {"age"};
  const auto names = layout(ModelMode::relaxed, 2, 3, 1).names(vars, statics);
  REQUIRE(names.size() == 24 + 1 + 4);
  CHECK(names[0] == "hr:mean");
  CHECK(names[11] == "hr:slope_stderr");
  CHECK(names[12] == "gcs:mean");
  CHECK(names[24] == "static:age");
  CHECK(names[25] == "xT:hr");
  CHECK(names[27] == "mT:hr");
  const auto flat = layout(ModelMode::flat_series, 2, 3, 1).names(vars, statics);
  CHECK(flat[1] == "x:hr:1");
  CHECK(flat.back() == "m:gcs:3");
}

TEST_CASE("assembled columns") {
  const auto b = oracle::random_batch(5, 2, 4, 2, 31);
  const auto sp = full_window(2, 4);
  const auto H = compute_summary_tensor(b, sp, SummaryMode::relaxed);
  SUBCASE("relaxed: H, S, X_T, M_T") {
    const auto Z = assemble_features(H, b, ModelMode::relaxed);
    CHECK(Z.cols == 24 + 2 + 4);
    for (std::size_t n = 0; n < 5; ++n) {
      const auto row = Z.row(n);
      CHECK(row[13] == H.at(n, 1, 1));
      CHECK(row[24] == b.statics(n)[0]);
      CHECK(row[26] == b.series(n, 0)[3]);
      CHECK(row[29] == (b.mask(n, 1)[3] ? 1.0 : 0.0));
    }
  }
  SUBCASE("time_of_prediction_only: S, X_T, M_T") {
    const auto Z = assemble_features({}, b, ModelMode::time_of_prediction_only);
    CHECK(Z.cols == 2 + 4);
    CHECK(Z.row(2)[3] == b.series(2, 1)[3]);
  }
  SUBCASE("flat_series: S, X, M") {
    const auto Z = assemble_features({}, b, ModelMode::flat_series);
    CHECK(Z.cols == 2 + 16);
    CHECK(Z.row(1)[2 + 4 + 2] == b.series(1, 1)[2]);
    CHECK(Z.row(1)[2 + 8 + 1] == (b.mask(1, 0)[1] ? 1.0 : 0.0));
  }
  SUBCASE("permuting patients permutes rows") {
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    const auto pb = subset(b, perm);
    const auto Z = assemble_features(H, b, ModelMode::relaxed);
    const auto PZ = assemble_features(compute_summary_tensor(pb, sp, SummaryMode::relaxed), pb,
                                      ModelMode::relaxed);
    for (std::size_t r = 0; r < 5; ++r) {
      const auto a = PZ.row(r);
      const auto e = Z.row(perm[r]);
      CHECK(std::equal(a.begin(), a.end(), e.begin()));
    }
  }
  SUBCASE("mismatched tensor") {
    SummaryTensor wrong = H;
    wrong.num_examples = 2;
    CHECK_THROWS_AS(assemble_features(wrong, b, ModelMode::relaxed), DataError);
  }
}

TEST_CASE("predicted probabilities") {
  DesignMatrix Z{3, 1, {-2.0, 0.0, 1.5}};
  ModelParams mp{{0.0}, 0.0, {}};
  for (double p : predict(Z, mp)) CHECK(p == 0.5);
  mp.coeffs = {1.0};
  const auto p = predict(Z, mp);
  for (std::size_t r = 0; r < 3; ++r) CHECK(p[r] == doctest::Approx(oracle::sigmoid(Z.values[r])));
  double last = 0.0;
  for (double bias : {0.0, 2.0, 8.0, 30.0}) {
    mp.bias = bias;
    const double q = predict(Z, mp)[0];
    CHECK(q > last);
    CHECK(q <= 1.0);
    last = q;
  }
  mp.coeffs = {1.0, 2.0};
  CHECK_THROWS_AS(predict(Z, mp), DataError);
}

TEST_CASE("weighted binary cross-entropy") {
  const std::vector<std::uint8_t> y = {1, 0, 1, 0};
  const std::vector<double> ones(4, 1.0);
  CHECK(weighted_bce(std::vector<double>(4, 0.5), y, ones) == doctest::Approx(std::log(2.0)));
  CHECK(weighted_bce(std::vector<double>{0.25}, std::vector<std::uint8_t>{1},
                     std::vector<double>{2.0}) == doctest::Approx(-2.0 * std::log(0.25)));
  CHECK(weighted_bce(std::vector<double>{0.25}, std::vector<std::uint8_t>{1},
                     std::vector<double>{2.0}) == doctest::Approx(2.7726).epsilon(1e-4));
  CHECK(weighted_bce_logits(std::vector<double>{40, -40, 40, -40}, y, ones) < 1e-15);
  CHECK(weighted_bce_logits(std::vector<double>{-1.0, 2.0}, std::vector<std::uint8_t>{1, 0},
                            std::vector<double>{1.0, 1.0}) ==
        doctest::Approx(-(std::log(oracle::sigmoid(-1.0)) + std::log(1 - oracle::sigmoid(2.0))) / 2));
  CHECK_THROWS_AS(weighted_bce(std::vector<double>{NAN}, std::vector<std::uint8_t>{1},
                               std::vector<double>{1.0}),
                  NumericalError);
  CHECK_THROWS_AS(weighted_bce(std::vector<double>{}, std::vector<std::uint8_t>{},
                               std::vector<double>{}),
                  DataError);
}

TEST_CASE("horseshoe penalty") {
  const std::vector<double> one = {1.0};
  const double expected = -std::log(std::log(1.0 + 2.0 / (1.0 + 1e-8)));
  CHECK(horseshoe_penalty(one, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(horseshoe_penalty(one, 1.0) == doctest::Approx(-0.09405).epsilon(1e-4));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    const double b = normal(rng);
    const std::vector<double> pos = {b}, neg = {-b}, bigger = {b * 1.1 + (b >= 0 ? 1e-3 : -1e-3)};
    CHECK(horseshoe_penalty(pos, 1.0) == horseshoe_penalty(neg, 1.0));
    CHECK(horseshoe_penalty(bigger, 1.0) > horseshoe_penalty(pos, 1.0));
    // Derivative against a central difference.
    const double h = 1e-6;
    const std::vector<double> hi = {b + h}, lo = {b - h};
    const double fd = (horseshoe_penalty(hi, 0.7) - horseshoe_penalty(lo, 0.7)) / (2 * h);
    CHECK(horseshoe_derivative(b, 0.7) == doctest::Approx(fd).epsilon(1e-5));
  }
  CHECK(std::isfinite(horseshoe_penalty(std::vector<double>{0.0}, 1.0)));
}

TEST_CASE("total loss") {
  const auto b = oracle::random_batch(6, 2, 5, 1, 44, 1.0);
  const auto sp = full_window(2, 5);
  TrainConfig config;
  const auto F = FeatureLayout::of(b, config.mode).num_features();
  const auto mp = random_model(F, 3);

  SUBCASE("alpha = 0 is the weighted cross-entropy") {
    config.alpha = 0.0;
    const auto Z = assemble_features(compute_summary_tensor(b, sp, SummaryMode::relaxed), b,
                                     config.mode);
    const auto p = predict(Z, mp);
    CHECK(total_loss(sp, mp, b, config) ==
          doctest::Approx(weighted_bce(p, b.y, class_weights(b.y))).epsilon(1e-12));
  }
  SUBCASE("alpha shifts the loss by alpha * penalty") {
    config.alpha = 0.0;
    const double base = total_loss(sp, mp, b, config);
    config.alpha = 0.25;
    CHECK(total_loss(sp, mp, b, config) ==
          doctest::Approx(base + 0.25 * horseshoe_penalty(mp.coeffs, 1.0)).epsilon(1e-12));
    config.penalty = Penalty::ridge;
    CHECK(total_loss(sp, mp, b, config) ==
          doctest::Approx(base + 0.25 * ridge_penalty(mp.coeffs)).epsilon(1e-12));
  }
  SUBCASE("fixture A cohort composes the two oracles") {
    auto a = oracle::single_series({1, 2, 3, 4}, {1, 1, 1, 1});
    a.num_examples = 2;
    a.x.insert(a.x.end(), {4, 3, 2, 1});
    a.m.insert(a.m.end(), {1, 1, 1, 1});
    a.y = {1, 0};
    a.patient_ids = {"a", "b"};
    auto p = full_window(1, 4);
    TrainConfig c;
    c.mode = ModelMode::hard;
    ModelParams m;
    m.coeffs.assign(14, 0.0);
    m.coeffs[10] = 0.5;  // slope: +1 for the first patient, -1 for the second
    m.bias = 0.1;
    const double bce = -(std::log(oracle::sigmoid(0.6)) + std::log(1.0 - oracle::sigmoid(-0.4))) / 2.0;
    CHECK(total_loss(p, m, a, c) ==
          doctest::Approx(bce + c.alpha * horseshoe_penalty(m.coeffs, 1.0)).epsilon(1e-12));
  }
  SUBCASE("extended-precision loss matches") {
    std::vector<std::size_t> rows(6);
    std::iota(rows.begin(), rows.end(), 0);
    const auto w = class_weights(b.y);
    CHECK(static_cast<double>(loss_wide(sp, mp, b, w, rows, config)) ==
          doctest::Approx(forward(sp, mp, b, w, rows, config).loss).epsilon(1e-12));
  }
}

TEST_CASE("time-of-prediction model ignores earlier hours") {
  auto b = oracle::random_batch(10, 2, 6, 1, 5);
  TrainConfig config;
  config.mode = ModelMode::time_of_prediction_only;
  const auto mp = random_model(FeatureLayout::of(b, config.mode).num_features(), 9);
  const auto sp = full_window(2, 6);
  const auto before = predict_batch(sp, mp, b, config.mode);
  std::mt19937_64 rng(1);
  for (std::size_t n = 0; n < 10; ++n) {
    for (std::size_t d = 0; d < 2; ++d) {
      auto x = b.series(n, d);
      std::shuffle(x.begin(), x.end() - 1, rng);
    }
  }
  CHECK(predict_batch(sp, mp, b, config.mode) == before);
}

TEST_CASE("scaling coefficients preserves the ranking") {
  const auto b = oracle::random_batch(30, 2, 5, 1, 8);
  const auto sp = full_window(2, 5);
  auto mp = random_model(FeatureLayout::of(b, ModelMode::relaxed).num_features(), 4);
  const auto p1 = predict_batch(sp, mp, b, ModelMode::relaxed);
  for (double& c : mp.coeffs) c *= 3.0;
  mp.bias *= 3.0;
  const auto p2 = predict_batch(sp, mp, b, ModelMode::relaxed);
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = 0; j < 30; ++j) {
      if (p1[i] < p1[j]) CHECK(p2[i] < p2[j]);
    }
  }
}

TEST_CASE("mode and penalty names") {
  for (auto m : {ModelMode::relaxed, ModelMode::hard, ModelMode::time_of_prediction_only,
                 ModelMode::flat_series}) {
    CHECK(parse_mode(mode_name(m)) == m);
  }
  CHECK_FALSE(parse_mode("lstm").has_value());
  CHECK(parse_penalty("ridge") == Penalty::ridge);
  CHECK_FALSE(parse_penalty("lasso").has_value());
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = {};
  c.tau_temp = 0.0;
  CHECK_THROWS_AS(c.validate(), DataError);
  c = {};
  c.learning_rate = -1.0;
  CHECK_THROWS_AS(c.validate(), DataError);
}
