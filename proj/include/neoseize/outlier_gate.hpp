#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "neoseize/features.hpp"
#include "neoseize/postprocess.hpp"
#include "neoseize/svm.hpp"

namespace neoseize {

struct OutlierParams {
  std::size_t k = 5;
  double quantile = 99.5;  // percentile of leave-self-out k-th distances that set d_max
  double d_max = 0.0;      // normalized-feature units
  double amp_max = 500.0;  // microvolts
  DenseMatrix reference;   // normalized training vectors

  // Throws ConfigError.
  void validate() const;
};

// Distance to the k-th nearest reference row. Throws ValidationError when
// k > |ref| or k == 0.
double knn_distance(std::span<const double> x, const DenseMatrix& ref, std::size_t k);

// k-th neighbour distances for several k in one sweep; `skip` excludes one
// reference row (the query itself).
std::vector<double> knn_distances(std::span<const double> x, const DenseMatrix& ref,
                                  std::span<const std::size_t> ks, std::size_t skip = SIZE_MAX);

// Leave-self-out k-th distances of every reference row: result[i][row] for ks[i].
std::vector<std::vector<double>> self_knn_distances(const DenseMatrix& ref, std::span<const std::size_t> ks);

// Strict: a point exactly at d_max or amp_max is not an outlier.
bool is_outlier(const FeatureVector& normalized, const OutlierParams& p);
bool is_outlier(double knn_dist, double max_amp, double d_max, double amp_max);

// Seeded subsample (sorted indices kept in their original order) of at most
// `max_rows` rows.
DenseMatrix build_reference(std::span<const FeatureVector> normalized, std::size_t max_rows,
                            std::uint64_t seed);

struct CalibrationGrid {
  std::vector<std::size_t> k{3, 5, 9};
  std::vector<double> quantile{99.0, 99.5, 99.9};
  std::vector<double> amp_max{300.0, 500.0, 800.0, 1000.0};
  std::vector<std::size_t> ma_len{1, 3, 5};
  std::vector<double> threshold{-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<std::size_t> collar_s{0, 8, 16};
  std::vector<std::size_t> min_dur_s{10};

  void validate() const;
};

// Cross-validated outputs for one training recording.
struct CalibrationRecording {
  EpochStats stats;
  // knn[i][row]: k-th neighbour distance (k = grid.k[i]) to the fold's reference set.
  std::vector<std::vector<double>> knn;
  std::vector<double> max_amp;  // per row
  std::vector<std::uint8_t> bad;  // per row, may be empty
  // d_max[i][j] for grid.k[i] and grid.quantile[j], from the fold's reference set.
  std::vector<std::vector<double>> d_max;
  EpochGrid grid;
  Mask truth;  // consensus, one entry per second
};

struct CalibrationResult {
  std::size_t k = 0;
  double quantile = 0.0;
  double amp_max = 0.0;
  PostprocParams post;
  double kappa = 0.0;  // concatenated kappa at the chosen point
  std::size_t evaluated = 0;
};

// Exhaustive search maximizing concatenated Cohen's kappa of the full
// post-processed output against the consensus. Ties keep the first candidate in
// grid order.
CalibrationResult calibrate(std::span<const CalibrationRecording> recs, const CalibrationGrid& grid);

}  // namespace neoseize
