#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neoseize/signal_io.hpp"

namespace neoseize {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  // NaN when the denominator is zero.
  double sensitivity() const;
  double specificity() const;
  double accuracy() const;

  ConfusionCounts& operator+=(const ConfusionCounts& o);
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// Second-by-second comparison; lengths must match.
ConfusionCounts confusion(const Mask& pred, const Mask& truth);
ConfusionCounts confusion(const AnnotationMask& pred, const AnnotationMask& truth);

// Trapezoidal ROC area over every distinct threshold; equal scores across
// classes count one half. Throws ValidationError for single-class truth.
double auc(std::span<const double> scores, std::span<const std::uint8_t> truth);

// (p_o - p_e) / (1 - p_e). When p_e = 1 both masks are constant: 1 if they are
// identical, 0 otherwise.
double cohen_kappa(const Mask& a, const Mask& b);
// Same statistic from a two-by-two table; pooled counts give the concatenated kappa.
double cohen_kappa(const ConfusionCounts& c);

struct EventMetrics {
  std::size_t n_truth = 0;
  std::size_t n_detected = 0;  // truth events overlapped by any prediction
  std::size_t n_pred = 0;
  std::size_t false_detections = 0;  // predictions overlapping no truth event
  double sdr = 0.0;                  // NaN without truth events
  double fd_per_h = 0.0;
};

// Overlap means an intersection of at least one second.
EventMetrics event_metrics(std::span<const Event> pred, std::span<const Event> truth, double duration_h);

struct Interval {
  double point = 0.0;   // statistic on the original sample
  double median = 0.0;  // of the bootstrap distribution
  double lo = 0.0;
  double hi = 0.0;
  std::size_t redraws = 0;
};

// Statistic over a resample of unit indices; nullopt (or NaN) means undefined.
using ResampleStatistic = std::function<std::optional<double>(std::span<const std::size_t>)>;

// Percentile bootstrap over units (neonates) sampled with replacement. Each
// iteration draws from its own seeded substream, so the result does not depend
// on evaluation order. Undefined resamples are redrawn and counted.
Interval bootstrap_ci(std::size_t n_units, const ResampleStatistic& stat, std::size_t iters = 1000,
                      std::uint64_t seed = 0, double level = 0.95);

// Type-7 (linear interpolation) sample quantile, q in [0, 1].
double quantile(std::vector<double> v, double q);

struct DeltaKappaRow {
  std::string expert;  // the expert the SDA is compared with
  double kappa_human = 0.0;  // kappa(E1, E2)
  double kappa_sda = 0.0;    // kappa(SDA, expert)
  Interval delta;            // kappa_human - kappa_sda
  // "non-inferior" when the CI spans zero, "superior" when it lies below
  // zero, "inferior" when it lies above.
  std::string verdict;
  bool noninferior() const { return verdict != "inferior"; }
};

// One row per expert pairing; kappas are computed on concatenations of the
// resampled neonates. All three lists must cover the same neonates in order.
std::vector<DeltaKappaRow> noninferiority_delta_kappa(std::span<const AnnotationMask> sda,
                                                      std::span<const AnnotationMask> e1,
                                                      std::span<const AnnotationMask> e2,
                                                      std::size_t iters = 1000, std::uint64_t seed = 0);

// Two-sided normal approximation with tie and continuity corrections. Zero
// differences are dropped; all-zero gives p = 1. Fewer than five non-zero
// differences is a ValidationError.
double wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);
double mann_whitney_u(std::span<const double> x, std::span<const double> y);

// Mask concatenation in list order.
Mask concatenate(std::span<const AnnotationMask> masks, std::span<const std::size_t> order);

struct MetricSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t n = 0;  // neonates where the measure is defined
};

MetricSummary summarize(std::span<const double> per_neonate);

// Inputs for one neonate: SDA per-second statistic and mask, reference mask.
struct NeonateResult {
  std::string id;
  std::vector<double> stat;
  AnnotationMask pred;
  AnnotationMask truth;
};

struct NeonateMetrics {
  std::string id;
  ConfusionCounts counts;
  EventMetrics events;
  double duration_h = 0.0;
  std::optional<double> auc;  // undefined without both classes
  double sensitivity = 0.0;   // NaN without seizure
  double specificity = 0.0;
  double kappa = 0.0;
};

struct MetricsReport {
  std::vector<NeonateMetrics> per_neonate;
  MetricSummary auc;
  MetricSummary sensitivity;
  MetricSummary specificity;
  Interval c_auc;
  Interval c_sdr;
  Interval c_fd_per_h;
  Interval c_kappa;
  std::size_t n_total = 0;
  std::size_t n_seizure = 0;  // neonates with reference seizure
  std::size_t iters = 0;
  std::uint64_t seed = 0;
};

NeonateMetrics neonate_metrics(const NeonateResult& r);
// Per-neonate and concatenated measures with bootstrap CIs.
MetricsReport evaluate(std::span<const NeonateResult> results, std::size_t iters = 1000,
                       std::uint64_t seed = 0);

// Concatenated kappa and AUC without resampling.
double concatenated_kappa(std::span<const NeonateResult> results);
double concatenated_auc(std::span<const NeonateResult> results);

}  // namespace neoseize
