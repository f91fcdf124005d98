#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "neoseize/evaluation.hpp"
#include "neoseize/signal_io.hpp"

namespace neoseize {

inline constexpr double kHighTotalBurdenMin = 45.0;
inline constexpr double kHighHourlyBurdenMin = 13.0;
inline constexpr std::size_t kPoiWindowS = 7200;
inline constexpr std::size_t kPoiEventS = 30;
inline constexpr std::size_t kPoiAccumulatedS = 180;

struct BurdenSeries {
  std::vector<std::size_t> hourly;  // seizure seconds per hour from recording start
  double total_min = 0.0;
  double max_hourly_min = 0.0;
};

// The trailing partial hour is its own bin.
BurdenSeries burden(const Mask& m);

struct PoiWindow {
  std::size_t index = 0;
  std::size_t start_s = 0;
  bool is_poi = false;
};

// Non-overlapping 2 h windows aligned to the recording start. A window is of
// interest when two events each have at least 30 s inside it, or when it holds
// at least 180 s of seizure.
std::vector<PoiWindow> detect_poi(const Mask& m);

enum class BurdenClass { kLow, kHigh };

struct BurdenClassification {
  BurdenClass total = BurdenClass::kLow;   // total > 45 min
  BurdenClass hourly = BurdenClass::kLow;  // max hourly > 13 min
};

BurdenClassification classify_burden(const BurdenSeries& b);
std::string to_string(BurdenClass c);

// Pearson r over concatenated hourly values. Throws ValidationError on zero
// variance or mismatched hour grids.
double pearson(std::span<const double> a, std::span<const double> b);

struct BurdenCorrelation {
  Interval r;
};

// Pearson r with a neonate-level bootstrap CI. Resamples with zero variance are
// redrawn.
BurdenCorrelation burden_correlation(std::span<const BurdenSeries> a, std::span<const BurdenSeries> b,
                                     std::size_t iters = 1000, std::uint64_t seed = 0);

// Window-level agreement; predicted window of interest counts as positive.
struct Agreement {
  ConfusionCounts counts;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
};

Agreement agreement_from_counts(const ConfusionCounts& c);
Agreement poi_agreement(std::span<const PoiWindow> pred, std::span<const PoiWindow> truth);

}  // namespace neoseize
