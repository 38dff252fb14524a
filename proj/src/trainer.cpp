#include "tsum/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tsum/evaluator.hpp"
#include "tsum/numeric.hpp"

namespace tsum {

InitialParams init_params(const CohortArrays& train, const TrainConfig& config) {
  InitialParams out;
  auto& sp = out.summary;
  sp.num_vars = train.num_vars;
  sp.num_hours = train.num_hours;
  sp.durations.assign(train.num_vars * kNumSummaries, static_cast<double>(train.num_hours));
  sp.phi_plus.assign(train.num_vars, 1.0);
  sp.phi_minus.assign(train.num_vars, -1.0);
  sp.temperature = config.tau_temp;

  const auto layout = FeatureLayout::of(train, config.mode);
  auto& mp = out.model;
  mp.coeffs.assign(layout.num_features(), 0.0);
  mp.feature_names = layout.names(train.variable_names, train.static_names);
  std::size_t positives = 0;
  for (auto v : train.y) positives += v ? 1 : 0;
  if (positives == 0 || positives == train.y.size()) {
    throw DataError(DataError::Kind::size, "training split needs both classes");
  }
  mp.bias = logit(static_cast<double>(positives) / static_cast<double>(train.y.size()));
  return out;
}

void adam_update(std::span<double> params, std::span<const double> grads,
                 std::span<const double> rates, AdamState& state) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = kAdamBeta1 * state.m[k] + (1.0 - kAdamBeta1) * grads[k];
    state.v[k] = kAdamBeta2 * state.v[k] + (1.0 - kAdamBeta2) * grads[k] * grads[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= rates[k] * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
  }
}

void adam_step(SummaryParams& summary_params, ModelParams& model_params,
               const GradientSet& grads, AdamState& state, const TrainConfig& config) {
  const std::size_t F = model_params.coeffs.size();
  const std::size_t C = summary_params.durations.size();
  const std::size_t D = summary_params.phi_plus.size();
  const std::size_t total = F + 1 + C + 2 * D;

  std::vector<double> flat, grad, rates;
  flat.reserve(total);
  grad.reserve(total);
  rates.reserve(total);
  const double lr = config.learning_rate;
  const double lr_c = config.duration_lr.value_or(lr);
  const double lr_phi = config.threshold_lr.value_or(lr);

  auto append = [&](std::span<const double> p, std::span<const double> g, double rate) {
    flat.insert(flat.end(), p.begin(), p.end());
    grad.insert(grad.end(), g.begin(), g.end());
    rates.insert(rates.end(), p.size(), rate);
  };
  append(model_params.coeffs, std::span(grads.d_coeffs).first(F), lr);
  append(std::span(&model_params.bias, 1), std::span(grads.d_coeffs).subspan(F, 1), lr);
  append(summary_params.durations, grads.d_C, lr_c);
  append(summary_params.phi_plus, grads.d_phi_plus, lr_phi);
  append(summary_params.phi_minus, grads.d_phi_minus, lr_phi);

  adam_update(flat, grad, rates, state);

  auto it = flat.begin();
  auto take = [&](std::span<double> dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(model_params.coeffs);
  take(std::span(&model_params.bias, 1));
  take(summary_params.durations);
  take(summary_params.phi_plus);
  take(summary_params.phi_minus);
  summary_params.clamp_durations();
}

namespace {

struct Evaluation {
  double loss = 0.0;
  double auc = 0.0;
};

Evaluation evaluate(const SummaryParams& sp, const ModelParams& mp, const ClinicalBatch& batch,
                    std::span<const double> weights, const TrainConfig& config) {
  std::vector<std::size_t> rows(batch.num_examples);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const ForwardPass pass = forward(sp, mp, batch, weights, rows, config);
  return {pass.loss, auc(pass.logits, batch.y)};
}

void check_durations(const SummaryParams& sp) {
  const double T = static_cast<double>(sp.num_hours);
  for (double c : sp.durations) {
    if (!(c >= 0.0 && c <= T)) throw NumericalError("C", "duration left [0, T]");
  }
}

}  // namespace

FitResult train(const ClinicalBatch& train_batch, const ClinicalBatch& val_batch,
                const TrainConfig& config) {
  config.validate();
  train_batch.check_shape();
  val_batch.check_shape();

  auto init = init_params(train_batch, config);
  SummaryParams sp = std::move(init.summary);
  ModelParams mp = std::move(init.model);

  FitResult result;
  result.mode = config.mode;
  result.seed = config.seed;
  result.summary_params = sp;
  result.model_params = mp;
  result.best_val_auc = -std::numeric_limits<double>::infinity();

  const auto weights = class_weights(train_batch.y);
  const auto val_weights = class_weights(val_batch.y);
  std::vector<std::size_t> order(train_batch.num_examples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed);
  AdamState state;
  std::size_t stale_evals = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(order.size(), start + config.batch_size);
        const std::span<const std::size_t> rows(order.data() + start, stop - start);
        const auto lg = loss_and_gradients(sp, mp, train_batch, weights, rows, config);
        adam_step(sp, mp, lg.gradients, state, config);
        loss_sum += lg.loss * static_cast<double>(rows.size());
      }
    } catch (const NumericalError& e) {
      result.final_summary_params = sp;
      result.final_model_params = mp;
      result.stopped_epoch = epoch;
      throw TrainingAborted(e, std::move(result));
    }
    result.stopped_epoch = epoch;

    if (epoch % config.eval_interval != 0 && epoch != config.max_epochs) continue;
    check_durations(sp);
    const Evaluation val = evaluate(sp, mp, val_batch, val_weights, config);
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(order.size()), val.loss, val.auc});
    if (val.auc > result.best_val_auc) {
      result.best_val_auc = val.auc;
      result.best_epoch = epoch;
      result.summary_params = sp;
      result.model_params = mp;
      stale_evals = 0;
    } else if (++stale_evals >= config.patience) {
      break;
    }
  }
  if (result.history.empty()) {
    result.best_val_auc = evaluate(sp, mp, val_batch, val_weights, config).auc;
  }
  result.final_summary_params = sp;
  result.final_model_params = mp;
  return result;
}

}  // namespace tsum
