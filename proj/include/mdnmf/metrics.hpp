#pragma once

// Reconstruction quality metrics and their aggregation. Perfect
// reconstructions report the distinguished "exact" value +infinity, which
// aggregation excludes from the finite statistics but counts.

#include <mdnmf/core.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace mdnmf {

/// Marker returned when a metric's error term is exactly zero.
inline constexpr double kExactMetric = std::numeric_limits<double>::infinity();

/// Peak signal-to-noise ratio 10 * log10(peak^2 / mse) in dB, mse taken
/// over all entries. A zero mse reports the exact marker.
inline double psnr(const Matrix& reference, const Matrix& estimate,
                   double peak = 1.0) {
  check_dims(reference.rows() == estimate.rows() &&
                 reference.cols() == estimate.cols(),
             "psnr: shape mismatch");
  check_dims(reference.size() > 0, "psnr: empty input");
  check_config(std::isfinite(peak) && peak > 0.0, "psnr: peak must be > 0");
  const double mse =
      (reference - estimate).squaredNorm() / static_cast<double>(reference.size());
  if (mse == 0.0) return kExactMetric;
  return 10.0 * std::log10(peak * peak / mse);
}

/// Scale-invariant signal-to-distortion ratio in dB. Both signals are mean
/// removed; the estimate is projected onto the reference
/// (alpha = <est, ref> / ||ref||^2) and the ratio of projected power to
/// residual power is reported. A zero residual reports the exact marker.
inline double si_sdr(const Vector& reference, const Vector& estimate) {
  check_dims(reference.size() == estimate.size() && reference.size() > 0,
             "si_sdr: signals must share a non-zero length");
  check_value(reference.allFinite() && estimate.allFinite(),
              "si_sdr: signals must be finite");
  const Vector s = reference.array() - reference.mean();
  const Vector e = estimate.array() - estimate.mean();
  const double ref_power = s.squaredNorm();
  check_value(ref_power > 0.0, "si_sdr: reference is constant");
  const double alpha = e.dot(s) / ref_power;
  const double target = alpha * alpha * ref_power;
  const double err = (alpha * s - e).squaredNorm();
  if (err == 0.0) return kExactMetric;
  return 10.0 * std::log10(target / err);
}

/// Summary of per-item metric values. Statistics cover the finite values of
/// items whose weight is non-zero; `exact_count` counts excluded exact
/// markers among those items.
struct MetricReport {
  std::vector<double> values;
  double mean = 0.0;
  double median = 0.0;
  double stderr_mean = 0.0;
  Index finite_count = 0;
  Index exact_count = 0;
  Index total_count = 0;
};

/// Aggregates per-item values: weighted mean, plain median, and standard
/// error (sample stddev / sqrt(n)) over the finite included values. Items
/// with zero weight are dropped entirely.
inline MetricReport aggregate(
    const std::vector<double>& values,
    const std::optional<std::vector<double>>& weights = std::nullopt) {
  check_value(!values.empty(), "aggregate: no values");
  if (weights) {
    check_dims(weights->size() == values.size(),
               "aggregate: one weight per value required");
    for (double w : *weights)
      check_value(std::isfinite(w) && w >= 0.0,
                  "aggregate: weights must be finite and >= 0");
  }

  MetricReport report;
  report.values = values;
  report.total_count = static_cast<Index>(values.size());

  std::vector<double> finite;
  std::vector<double> finite_w;
  double weight_total = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    if (w == 0.0) continue;
    weight_total += w;
    if (std::isinf(values[i])) {
      ++report.exact_count;
      continue;
    }
    check_value(!std::isnan(values[i]), "aggregate: NaN value");
    finite.push_back(values[i]);
    finite_w.push_back(w);
  }
  check_value(weight_total > 0.0, "aggregate: all weights are zero");
  report.finite_count = static_cast<Index>(finite.size());

  if (finite.empty()) {
    report.mean = kExactMetric;
    report.median = kExactMetric;
    report.stderr_mean = 0.0;
    return report;
  }

  double wsum = 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < finite.size(); ++i) {
    acc += finite_w[i] * finite[i];
    wsum += finite_w[i];
  }
  report.mean = acc / wsum;

  std::vector<double> sorted = finite;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  report.median = (n % 2 == 1) ? sorted[n / 2]
                               : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  if (n >= 2) {
    double plain_mean = 0.0;
    for (double v : finite) plain_mean += v;
    plain_mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : finite) var += (v - plain_mean) * (v - plain_mean);
    var /= static_cast<double>(n - 1);
    report.stderr_mean = std::sqrt(var / static_cast<double>(n));
  }
  return report;
}

}  // namespace mdnmf
