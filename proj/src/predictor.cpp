#include "tsum/predictor.hpp"

#include <cmath>
#include <numeric>

#include "tsum/errors.hpp"
#include "tsum/numeric.hpp"

namespace tsum {

namespace {

constexpr std::string_view kModeNames[] = {"relaxed", "hard", "time_of_prediction_only",
                                           "flat_series"};

void require(bool ok, const std::string& what) {
  if (!ok) throw DataError(DataError::Kind::range, what);
}

}  // namespace

std::string_view mode_name(ModelMode mode) { return kModeNames[static_cast<std::size_t>(mode)]; }

std::optional<ModelMode> parse_mode(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kModeNames); ++i) {
    if (kModeNames[i] == name) return static_cast<ModelMode>(i);
  }
  return std::nullopt;
}

std::string_view penalty_name(Penalty penalty) {
  return penalty == Penalty::horseshoe ? "horseshoe" : "ridge";
}

std::optional<Penalty> parse_penalty(std::string_view name) {
  if (name == "horseshoe") return Penalty::horseshoe;
  if (name == "ridge") return Penalty::ridge;
  return std::nullopt;
}

void TrainConfig::validate() const {
  require(learning_rate >= 0.0, "learning_rate must be non-negative");
  require(!duration_lr || *duration_lr >= 0.0, "duration_lr must be non-negative");
  require(!threshold_lr || *threshold_lr >= 0.0, "threshold_lr must be non-negative");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(eval_interval >= 1, "eval_interval must be at least 1");
  require(val_fraction > 0.0 && val_fraction < 1.0, "val_fraction must lie in (0, 1)");
  require(alpha >= 0.0, "alpha must be non-negative");
  require(tau_hs > 0.0, "tau_hs must be positive");
  require(tau_temp > 0.0, "tau_temp must be positive");
}

std::vector<std::string> FeatureLayout::names(std::span<const std::string> variable_names,
                                              std::span<const std::string> static_names) const {
  std::vector<std::string> out;
  out.reserve(num_features());
  if (uses_summaries(mode)) {
    for (const auto& v : variable_names) {
      for (auto s : kSummaryNames) out.push_back(v + ":" + std::string(s));
    }
  }
  for (const auto& s : static_names) out.push_back("static:" + s);
  if (mode == ModelMode::flat_series) {
    for (const char* prefix : {"x:", "m:"}) {
      for (const auto& v : variable_names) {
        for (std::size_t h = 1; h <= num_hours; ++h) {
          out.push_back(prefix + v + ":" + std::to_string(h));
        }
      }
    }
  } else {
    for (const auto& v : variable_names) out.push_back("xT:" + v);
    for (const auto& v : variable_names) out.push_back("mT:" + v);
  }
  return out;
}

void design_row(const CohortArrays& batch, std::size_t n, std::span<const double> summaries,
                const FeatureLayout& layout, std::span<double> out) {
  double* it = out.data();
  if (uses_summaries(layout.mode)) {
    it = std::copy(summaries.begin(), summaries.end(), it);
  }
  const auto s = batch.statics(n);
  it = std::copy(s.begin(), s.end(), it);
  const std::size_t T = batch.num_hours;
  if (layout.mode == ModelMode::flat_series) {
    for (std::size_t d = 0; d < batch.num_vars; ++d) {
      const auto x = batch.series(n, d);
      it = std::copy(x.begin(), x.end(), it);
    }
    for (std::size_t d = 0; d < batch.num_vars; ++d) {
      for (auto v : batch.mask(n, d)) *it++ = v ? 1.0 : 0.0;
    }
  } else {
    for (std::size_t d = 0; d < batch.num_vars; ++d) *it++ = batch.series(n, d)[T - 1];
    for (std::size_t d = 0; d < batch.num_vars; ++d) *it++ = batch.mask(n, d)[T - 1] ? 1.0 : 0.0;
  }
}

DesignMatrix assemble_features(const SummaryTensor& H, const CohortArrays& batch, ModelMode mode) {
  batch.check_shape();
  const auto layout = FeatureLayout::of(batch, mode);
  if (uses_summaries(mode) &&
      (H.num_examples != batch.num_examples || H.num_vars != batch.num_vars)) {
    throw DataError(DataError::Kind::shape, "summary tensor does not match the batch");
  }
  DesignMatrix out;
  out.rows = batch.num_examples;
  out.cols = layout.num_features();
  out.values.assign(out.rows * out.cols, 0.0);
  for (std::size_t n = 0; n < batch.num_examples; ++n) {
    const auto h = uses_summaries(mode) ? H.example(n) : std::span<const double>();
    design_row(batch, n, h, layout, std::span<double>(out.values.data() + n * out.cols, out.cols));
  }
  return out;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Extended-precision loss path for finite differences; double rounding alone
// would swamp gradients below ~1e-10.
using Wide = long double;

Wide horseshoe_wide(std::span<const double> coeffs, double tau_hs) {
  const Wide scale = 2.0L * tau_hs * tau_hs;
  Wide sum = 0.0L;
  for (double b : coeffs) {
    const Wide u = static_cast<Wide>(b) * b + kHorseshoeGuard;
    sum -= std::log(std::log1p(scale / u));
  }
  return sum;
}

Wide ridge_wide(std::span<const double> coeffs) {
  Wide sum = 0.0L;
  for (double b : coeffs) sum += static_cast<Wide>(b) * b;
  return sum;
}

}  // namespace

std::vector<double> predict(const DesignMatrix& design, const ModelParams& params) {
  if (params.coeffs.size() != design.cols) {
    throw DataError(DataError::Kind::shape, "coefficient count " +
                                                std::to_string(params.coeffs.size()) +
                                                " does not match " + std::to_string(design.cols) +
                                                " design columns");
  }
  std::vector<double> out(design.rows);
  for (std::size_t r = 0; r < design.rows; ++r) {
    out[r] = sigmoid(dot(design.row(r), params.coeffs) + params.bias);
  }
  return out;
}

double weighted_bce(std::span<const double> probabilities, std::span<const std::uint8_t> labels,
                    std::span<const double> weights) {
  if (probabilities.size() != labels.size() || weights.size() != labels.size() || labels.empty()) {
    throw DataError(DataError::Kind::shape, "weighted_bce: mismatched or empty inputs");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probabilities[i];
    if (!std::isfinite(p) || !std::isfinite(weights[i])) {
      throw NumericalError("predictions", "non-finite input to weighted_bce");
    }
    sum += weights[i] * (labels[i] ? std::log(p) : std::log1p(-p));
  }
  return -sum / static_cast<double>(labels.size());
}

double weighted_bce_logits(std::span<const double> logits, std::span<const std::uint8_t> labels,
                           std::span<const double> weights) {
  if (logits.size() != labels.size() || weights.size() != labels.size() || labels.empty()) {
    throw DataError(DataError::Kind::shape, "weighted_bce: mismatched or empty inputs");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw NumericalError("logits", "non-finite logit in weighted_bce");
    }
    sum += weights[i] * (labels[i] ? log_sigmoid(logits[i]) : log_sigmoid(-logits[i]));
  }
  return -sum / static_cast<double>(labels.size());
}

double horseshoe_penalty(std::span<const double> coeffs, double tau_hs) {
  const double scale = 2.0 * tau_hs * tau_hs;
  double sum = 0.0;
  for (double b : coeffs) {
    sum -= std::log(std::log1p(scale / (b * b + kHorseshoeGuard)));
  }
  return sum;
}

double horseshoe_derivative(double beta, double tau_hs) {
  const double scale = 2.0 * tau_hs * tau_hs;
  const double u = beta * beta + kHorseshoeGuard;
  const double inner = std::log1p(scale / u);
  return 2.0 * scale * beta / (inner * u * (u + scale));
}

double ridge_penalty(std::span<const double> coeffs) {
  double sum = 0.0;
  for (double b : coeffs) sum += b * b;
  return sum;
}

double penalty_value(std::span<const double> coeffs, const TrainConfig& config) {
  return config.penalty == Penalty::horseshoe ? horseshoe_penalty(coeffs, config.tau_hs)
                                              : ridge_penalty(coeffs);
}

ForwardPass forward(const SummaryParams& summary_params, const ModelParams& model_params,
                    const CohortArrays& batch, std::span<const double> weights,
                    std::span<const std::size_t> rows, const TrainConfig& config) {
  const auto layout = FeatureLayout::of(batch, config.mode);
  const std::size_t F = layout.num_features();
  if (model_params.coeffs.size() != F) {
    throw DataError(DataError::Kind::shape, "model has " +
                                                std::to_string(model_params.coeffs.size()) +
                                                " coefficients, layout needs " + std::to_string(F));
  }
  if (weights.size() != batch.num_examples) {
    throw DataError(DataError::Kind::shape, "one class weight per batch row is required");
  }
  if (rows.empty()) throw DataError(DataError::Kind::size, "forward pass over zero rows");

  ForwardPass pass;
  pass.rows.assign(rows.begin(), rows.end());
  const std::size_t R = rows.size();
  const bool summaries = uses_summaries(config.mode);
  const std::size_t DI = batch.num_vars * kNumSummaries;
  WeightTensor window;
  if (summaries) {
    window = compute_weights(summary_params, summary_mode(config.mode));
    pass.summaries.assign(R * DI, 0.0);
  }
  pass.design.assign(R * F, 0.0);
  pass.logits.assign(R, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    const std::size_t n = rows[r];
    std::span<double> h;
    if (summaries) {
      h = std::span<double>(pass.summaries.data() + r * DI, DI);
      summarize_example(batch, n, window, summary_params, summary_mode(config.mode), h);
    }
    std::span<double> z(pass.design.data() + r * F, F);
    design_row(batch, n, h, layout, z);
    pass.logits[r] = dot(z, model_params.coeffs) + model_params.bias;
  }
  std::vector<double> row_weights(R);
  std::vector<std::uint8_t> row_labels(R);
  for (std::size_t r = 0; r < R; ++r) {
    row_weights[r] = weights[rows[r]];
    row_labels[r] = batch.y[rows[r]];
  }
  pass.bce = weighted_bce_logits(pass.logits, row_labels, row_weights);
  pass.penalty = config.alpha > 0.0 ? penalty_value(model_params.coeffs, config) : 0.0;
  pass.loss = pass.bce + config.alpha * pass.penalty;
  if (!std::isfinite(pass.loss)) {
    throw NumericalError(std::isfinite(pass.penalty) ? "coeffs" : "penalty",
                         "non-finite loss");
  }
  return pass;
}

long double loss_wide(const SummaryParams& summary_params, const ModelParams& model_params,
                      const CohortArrays& batch, std::span<const double> weights,
                      std::span<const std::size_t> rows, const TrainConfig& config) {
  const auto layout = FeatureLayout::of(batch, config.mode);
  const std::size_t F = layout.num_features();
  if (model_params.coeffs.size() != F || weights.size() != batch.num_examples || rows.empty()) {
    throw DataError(DataError::Kind::shape, "loss_wide: inputs do not match the layout");
  }
  const bool summaries = uses_summaries(config.mode);
  const std::size_t DI = layout.num_summary_columns();
  const std::vector<double> placeholder(DI, 0.0);
  std::vector<double> z(F);
  Wide bce = 0.0L;
  for (std::size_t n : rows) {
    design_row(batch, n, placeholder, layout, z);
    Wide logit = model_params.bias;
    if (summaries) {
      const auto h = summarize_example_wide(batch, n, summary_params, summary_mode(config.mode));
      for (std::size_t j = 0; j < DI; ++j) logit += h[j] * model_params.coeffs[j];
    }
    for (std::size_t j = DI; j < F; ++j) logit += static_cast<Wide>(z[j]) * model_params.coeffs[j];
    bce -= weights[n] * log_sigmoid(batch.y[n] ? logit : -logit);
  }
  bce /= static_cast<Wide>(rows.size());
  Wide penalty = 0.0L;
  if (config.alpha > 0.0) {
    penalty = config.penalty == Penalty::horseshoe
                  ? horseshoe_wide(model_params.coeffs, config.tau_hs)
                  : ridge_wide(model_params.coeffs);
  }
  return bce + config.alpha * penalty;
}

double total_loss(const SummaryParams& summary_params, const ModelParams& model_params,
                  const CohortArrays& batch, const TrainConfig& config) {
  const auto weights = class_weights(batch.y);
  std::vector<std::size_t> rows(batch.num_examples);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return forward(summary_params, model_params, batch, weights, rows, config).loss;
}

std::vector<double> predict_batch(const SummaryParams& summary_params,
                                  const ModelParams& model_params, const CohortArrays& batch,
                                  ModelMode mode) {
  SummaryTensor H;
  if (uses_summaries(mode)) H = compute_summary_tensor(batch, summary_params, summary_mode(mode));
  return predict(assemble_features(H, batch, mode), model_params);
}

}  // namespace tsum
