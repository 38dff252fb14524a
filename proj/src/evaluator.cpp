#include "tsum/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "tsum/errors.hpp"

namespace tsum {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DataError(DataError::Kind::shape, "auc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their average.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError(DataError::Kind::size, "auc needs both classes present");
  }
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

ModelParams ablate_top_n(const ModelParams& params, std::size_t n) {
  std::vector<std::size_t> order(params.coeffs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(params.coeffs[a]) > std::abs(params.coeffs[b]);
  });
  ModelParams out = params;
  for (std::size_t k = std::min(n, order.size()); k < order.size(); ++k) {
    out.coeffs[order[k]] = 0.0;
  }
  return out;
}

std::vector<AblationPoint> ablation_curve(const FitResult& fit, const ClinicalBatch& test,
                                          std::vector<std::size_t> n_list) {
  std::sort(n_list.begin(), n_list.end());
  n_list.erase(std::unique(n_list.begin(), n_list.end()), n_list.end());
  SummaryTensor H;
  if (uses_summaries(fit.mode)) {
    H = compute_summary_tensor(test, fit.summary_params, summary_mode(fit.mode));
  }
  const DesignMatrix design = assemble_features(H, test, fit.mode);
  std::vector<AblationPoint> out;
  out.reserve(n_list.size());
  for (const std::size_t n : n_list) {
    const auto probs = predict(design, ablate_top_n(fit.model_params, n));
    out.push_back({n, auc(probs, test.y)});
  }
  return out;
}

std::size_t window_start(double c, std::size_t num_hours) {
  const long T = static_cast<long>(num_hours);
  const long start = T - std::lround(c) + 1;
  return static_cast<std::size_t>(std::clamp(start, 1L, T));
}

namespace {

std::string phrase(SummaryKind kind, double threshold_raw) {
  char buf[64];
  switch (kind) {
    case SummaryKind::mean: return "mean over";
    case SummaryKind::variance: return "variance over";
    case SummaryKind::ever_measured: return "ever measured over";
    case SummaryKind::indicator_mean: return "times measured over";
    case SummaryKind::indicator_variance: return "measurement variance over";
    case SummaryKind::switch_count: return "switches to measured over";
    case SummaryKind::first_measured: return "first measured";
    case SummaryKind::last_measured: return "last measured";
    case SummaryKind::frac_above:
      std::snprintf(buf, sizeof buf, "hours above %.2f", threshold_raw);
      return buf;
    case SummaryKind::frac_below:
      std::snprintf(buf, sizeof buf, "hours below %.2f", threshold_raw);
      return buf;
    case SummaryKind::slope: return "slope over";
    case SummaryKind::slope_stderr: return "slope std. error over";
  }
  return "";
}

}  // namespace

std::vector<KeyFeatureRow> key_feature_report(const SummaryParams& summary_params,
                                              const ModelParams& model_params,
                                              const NormalizationStats& stats,
                                              std::size_t top_k) {
  const auto& names = model_params.feature_names;
  if (names.size() != model_params.coeffs.size()) {
    throw DataError(DataError::Kind::shape, "feature names do not match coefficients");
  }
  const std::size_t T = summary_params.num_hours;
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(model_params.coeffs[a]) > std::abs(model_params.coeffs[b]);
  });
  order.resize(std::min(order.size(), top_k));

  std::vector<KeyFeatureRow> rows;
  for (const std::size_t j : order) {
    const std::string& name = names[j];
    KeyFeatureRow row;
    row.rank = rows.size() + 1;
    row.feature = name;
    row.coefficient = model_params.coeffs[j];
    const auto first = name.find(':');
    const std::string head = name.substr(0, first);
    const std::string rest = first == std::string::npos ? "" : name.substr(first + 1);
    if (head == "static") {
      row.variable = rest;
      row.summary = "static value";
    } else if (head == "xT" || head == "mT") {
      row.variable = rest;
      row.summary = (head == "xT" ? "value at hour " : "measured at hour ") + std::to_string(T);
      row.window_start = T;
      row.window_end = T;
    } else if (head == "x" || head == "m") {
      const auto colon = rest.rfind(':');
      row.variable = rest.substr(0, colon);
      const std::size_t hour = std::stoul(rest.substr(colon + 1));
      row.summary = (head == "x" ? "value at hour " : "measured at hour ") + std::to_string(hour);
      row.window_start = hour;
      row.window_end = hour;
    } else {
      const auto colon = name.rfind(':');
      const auto kind = parse_summary(name.substr(colon + 1));
      if (!kind || j >= summary_params.durations.size()) {
        throw DataError(DataError::Kind::schema, "unrecognized feature name '" + name + "'");
      }
      const std::size_t d = j / kNumSummaries;
      row.variable = name.substr(0, colon);
      double threshold = 0.0;
      if (*kind == SummaryKind::frac_above || *kind == SummaryKind::frac_below) {
        const double phi = *kind == SummaryKind::frac_above ? summary_params.phi_plus[d]
                                                            : summary_params.phi_minus[d];
        threshold = phi * stats.std[d] + stats.mean[d];
        row.threshold_raw = threshold;
      }
      row.summary = phrase(*kind, threshold);
      row.window_end = T;
      row.window_start = is_differentiable(*kind)
                             ? window_start(summary_params.durations[j], T)
                             : std::size_t{1};
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_report_tsv(std::ostream& out, std::span<const KeyFeatureRow> rows) {
  out << "rank\tvariable\tsummary\twindow_start\twindow_end\tthreshold_raw\tcoefficient\n";
  char buf[64];
  for (const auto& r : rows) {
    out << r.rank << '\t' << r.variable << '\t' << r.summary << '\t';
    if (r.window_start) out << *r.window_start;
    out << '\t';
    if (r.window_end) out << *r.window_end;
    out << '\t';
    if (r.threshold_raw) {
      std::snprintf(buf, sizeof buf, "%.2f", *r.threshold_raw);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.6g", r.coefficient);
    out << '\t' << buf << '\n';
  }
}

void write_ablation_tsv(std::ostream& out, std::span<const AblationPoint> points) {
  out << "n\ttest_auc\n";
  char buf[64];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.6f", p.test_auc);
    out << p.n << '\t' << buf << '\n';
  }
}

double gini_concentration(std::span<const double> values) {
  std::vector<double> mag(values.size());
  std::transform(values.begin(), values.end(), mag.begin(), [](double v) { return std::abs(v); });
  std::sort(mag.begin(), mag.end());
  const double total = std::accumulate(mag.begin(), mag.end(), 0.0);
  if (mag.empty() || total <= 0.0) return 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) weighted += static_cast<double>(i + 1) * mag[i];
  const double n = static_cast<double>(mag.size());
  return 2.0 * weighted / (n * total) - (n + 1.0) / n;
}

}  // namespace tsum
