#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neoseize/preprocess.hpp"
#include "neoseize/signal_io.hpp"

namespace neoseize {

inline constexpr std::size_t kNumFeatures = 22;
// Bumped whenever a definition or the column order below changes.
inline constexpr std::string_view kFeatureVersion = "neoseize-features-22.v1";

// Column order of the classifier features. The auxiliary max |amplitude|
// follows as column 23 in files.
enum FeatureIndex : std::size_t {
  kRms = 0,
  kPeakToPeak,
  kLineLength,
  kZeroCrossings,
  kLocalExtrema,
  kSkewness,
  kKurtosis,
  kSneoMean,
  kSneoVariance,
  kHjorthActivity,
  kHjorthMobility,
  kHjorthComplexity,
  kAcfFirstZeroLag,
  kAcfZeroCrossings,
  kTotalPower,
  kPeakFrequency,
  kSpectralEdge90,
  kSpectralEdge95,
  kRelDelta,
  kRelTheta,
  kRelAlpha,
  kSpectralEntropy,
};

const std::array<std::string_view, kNumFeatures + 1>& feature_names();

struct FeatureVector {
  std::array<double, kNumFeatures> values{};
  double max_amp = 0.0;  // raw microvolts, never normalized
};

// Rows are channel-major: row(c, e) = rows[c * n_epochs + e].
struct FeatureMatrix {
  std::string recording_id;
  std::size_t n_channels = 0;
  std::size_t n_epochs = 0;
  std::vector<FeatureVector> rows;

  const FeatureVector& row(std::size_t channel, std::size_t epoch) const {
    return rows[channel * n_epochs + epoch];
  }
};

// One-sided Welch estimate (Hann taper, per-segment mean removal), density scaling.
struct Psd {
  double df = 0.0;
  std::vector<double> power;  // bins 0..nfft/2

  double frequency(std::size_t bin) const { return static_cast<double>(bin) * df; }
};

Psd welch_psd(std::span<const double> x, double fs, double window_s = 4.0, double overlap = 0.5);

// Mean of the smoothed nonlinear energy operator. `window` is the length in
// samples of the rectangular smoother (odd; clamped to the operator length).
double sneo(std::span<const double> x, std::size_t window);
// 120 ms smoother rounded to the nearest odd sample count at `fs`.
double sneo(std::span<const double> x, double fs);
std::size_t sneo_window(double fs);

// Throws ValidationError naming `epoch_index` on non-finite input or a length
// other than 16 s at fs_feat.
FeatureVector extract_features(std::span<const double> segment, double fs_feat,
                               std::size_t epoch_index = 0);

// Features for every (channel, epoch) of a preprocessed recording.
FeatureMatrix compute_features(const Recording& preprocessed, const EpochGrid& grid);

struct NormStats {
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> sd{};

  // Population SD over `rows`; throws ValidationError naming a zero-SD feature.
  static NormStats fit(std::span<const FeatureVector> rows);
  void validate() const;
};

FeatureVector normalize(const FeatureVector& v, const NormStats& stats);
FeatureVector denormalize(const FeatureVector& v, const NormStats& stats);
FeatureMatrix normalize(const FeatureMatrix& fm, const NormStats& stats);

// CSV cache: header `channel,epoch,<23 feature names>`; the first line is a
// `# <feature version>,<recording id>,<n_channels>,<n_epochs>` comment.
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_feature_csv(const std::filesystem::path& path);

}  // namespace neoseize
