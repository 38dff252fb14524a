#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsum/cohort.hpp"
#include "tsum/predictor.hpp"
#include "tsum/summaries.hpp"
#include "tsum/trainer.hpp"

namespace tsum {

/// Mann-Whitney AUC; tied scores count half (average ranks).
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Keeps the n largest-|coefficient| entries (ties: lower column first) and
/// zeros the rest. The bias is always kept.
ModelParams ablate_top_n(const ModelParams& params, std::size_t n);

struct AblationPoint {
  std::size_t n = 0;
  double test_auc = 0.0;
};

/// Test AUC of the top-n ablated model for every n, ascending in n.
std::vector<AblationPoint> ablation_curve(const FitResult& fit, const ClinicalBatch& test,
                                          std::vector<std::size_t> n_list);

struct KeyFeatureRow {
  std::size_t rank = 0;
  std::string variable;
  std::string summary;          // rendered phrase, e.g. "hours below 92.36"
  std::string feature;          // design column name
  std::optional<std::size_t> window_start;
  std::optional<std::size_t> window_end;
  std::optional<double> threshold_raw;
  double coefficient = 0.0;
};

/// First hour of the window covered by duration `c`: max(1, T - round(c) + 1),
/// clamped to T.
std::size_t window_start(double c, std::size_t num_hours);

std::vector<KeyFeatureRow> key_feature_report(const SummaryParams& summary_params,
                                              const ModelParams& model_params,
                                              const NormalizationStats& stats,
                                              std::size_t top_k);

void write_report_tsv(std::ostream& out, std::span<const KeyFeatureRow> rows);
void write_ablation_tsv(std::ostream& out, std::span<const AblationPoint> points);

/// Gini coefficient of |values|: 0 for uniform magnitudes, towards 1 when a
/// few entries carry all the mass.
double gini_concentration(std::span<const double> values);

}  // namespace tsum
