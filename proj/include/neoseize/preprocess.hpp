#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "neoseize/signal_io.hpp"

namespace neoseize {

inline constexpr double kEpochSeconds = 16.0;
inline constexpr double kDefaultHopSeconds = 4.0;
inline constexpr double kFeatureRate = 64.0;
inline constexpr double kBandLowHz = 0.5;
inline constexpr double kBandHighHz = 16.0;

// Epoch i covers [i*hop, i*hop + epoch_len) seconds.
struct EpochGrid {
  double epoch_len = kEpochSeconds;
  double hop = kDefaultHopSeconds;
  std::size_t n_epochs = 0;
  double fs_feat = kFeatureRate;

  std::size_t samples_per_epoch() const;
  std::size_t hop_samples() const;
  double start_s(std::size_t epoch) const { return static_cast<double>(epoch) * hop; }

  // Throws ConfigError when hop is outside (0, epoch_len] or not a whole
  // number of samples at fs_feat.
  void validate() const;
};

// floor((duration - 16)/hop) + 1 epochs; zero (with a warning) for recordings
// shorter than one epoch.
EpochGrid make_grid(double duration_s, double hop = kDefaultHopSeconds,
                    double fs_feat = kFeatureRate);

// Zero-phase Butterworth cascade: `order` must be even.
struct ButterworthBand {
  double low_hz = kBandLowHz;
  double high_hz = kBandHighHz;
  int highpass_order = 4;
  int lowpass_order = 8;
};

std::vector<double> filtfilt_band(std::span<const double> x, double fs,
                                  const ButterworthBand& band = {});

// Polyphase band-limited rate conversion between whole-Hz rates. Output length is
// round(n * fs_out / fs_in).
std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out);

// Band-pass 0.5-16 Hz (forward-backward), then resample to fs_feat.
Recording preprocess(const Recording& rec, double fs_feat = kFeatureRate);

struct Segment {
  std::size_t channel = 0;
  std::size_t epoch = 0;
  std::span<const double> samples;
};

// Channel-major list of views into `rec`; `rec` must outlive the result.
std::vector<Segment> epoch(const Recording& rec, const EpochGrid& grid);

}  // namespace neoseize
