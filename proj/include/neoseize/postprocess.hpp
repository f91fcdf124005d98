#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "neoseize/preprocess.hpp"
#include "neoseize/signal_io.hpp"

namespace neoseize {

struct PostprocParams {
  std::size_t ma_len = 3;      // epochs, odd
  double threshold = 0.0;      // on the smoothed channel-max statistic
  std::size_t collar_s = 16;   // added to both ends of each detection
  std::size_t min_dur_s = 10;  // shorter runs are dropped after the collar

  // Throws ConfigError.
  void validate() const;
};

// Per-(channel, epoch) values, channel-major like FeatureMatrix.
struct EpochStats {
  std::size_t n_channels = 0;
  std::size_t n_epochs = 0;
  std::vector<double> values;

  double at(std::size_t c, std::size_t e) const { return values[c * n_epochs + e]; }
};

// Steps before thresholding: excluded entries become -inf, each channel gets a
// centred moving average (window truncated at the edges; -inf propagates),
// then the maximum is taken across channels. `excluded` may be empty.
std::vector<double> smooth_channel_max(const EpochStats& stats, std::span<const std::uint8_t> excluded,
                                       std::size_t ma_len);

// Per-second statistic: the maximum over every epoch covering that second, or
// the lowest double where no epoch reaches. Thresholding this with `>` gives
// exactly the pre-collar mask.
std::vector<double> per_second_statistic(std::span<const double> epoch_stat, const EpochGrid& grid,
                                         std::size_t duration_s);

// Mask of seconds whose statistic is above the threshold, then collar and
// minimum-duration steps.
Mask threshold_mask(std::span<const double> second_stat, double threshold);
Mask apply_collar(const Mask& m, std::size_t collar_s);
Mask remove_short(const Mask& m, std::size_t min_dur_s);

// Full chain from per-(channel, epoch) statistics to a per-second mask.
// `outliers` and `bad` are per-(channel, epoch) flags (either may be empty).
AnnotationMask postprocess(const EpochStats& stats, std::span<const std::uint8_t> outliers,
                           std::span<const std::uint8_t> bad, const PostprocParams& p,
                           const EpochGrid& grid, std::size_t duration_s);

// Maximal runs of true seconds as half-open intervals.
std::vector<Event> extract_events(const Mask& m);

// Widens each event by `collar_s` on both sides within [0, duration_s] and
// merges overlaps.
std::vector<Event> dilate_events(std::span<const Event> events, double collar_s, double duration_s);

// Per-(channel, epoch) bad flags: an epoch is bad on a channel when any second
// it covers is marked bad.
std::vector<std::uint8_t> bad_epochs(const Recording& rec, const EpochGrid& grid);

}  // namespace neoseize
