#include "neoseize/clinical.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "neoseize/error.hpp"

namespace neoseize {

BurdenSeries burden(const Mask& m) {
  BurdenSeries b;
  b.hourly.assign((m.size() + 3599) / 3600, 0);
  std::size_t total = 0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (m[s]) {
      ++b.hourly[s / 3600];
      ++total;
    }
  }
  b.total_min = static_cast<double>(total) / 60.0;
  const std::size_t mx = b.hourly.empty() ? 0 : *std::max_element(b.hourly.begin(), b.hourly.end());
  b.max_hourly_min = static_cast<double>(mx) / 60.0;
  return b;
}

std::vector<PoiWindow> detect_poi(const Mask& m) {
  const std::size_t n_win = (m.size() + kPoiWindowS - 1) / kPoiWindowS;
  std::vector<PoiWindow> out(n_win);
  std::vector<std::size_t> seconds(n_win, 0), long_events(n_win, 0);
  for (std::size_t w = 0; w < n_win; ++w) {
    out[w].index = w;
    out[w].start_s = w * kPoiWindowS;
  }
  std::size_t s = 0;
  while (s < m.size()) {
    if (!m[s]) {
      ++s;
      continue;
    }
    std::size_t e = s;
    while (e < m.size() && m[e]) ++e;
    // Split the event [s, e) across windows.
    for (std::size_t w = s / kPoiWindowS; w * kPoiWindowS < e; ++w) {
      const std::size_t lo = std::max(s, w * kPoiWindowS);
      const std::size_t hi = std::min(e, (w + 1) * kPoiWindowS);
      seconds[w] += hi - lo;
      if (hi - lo >= kPoiEventS) ++long_events[w];
    }
    s = e;
  }
  for (std::size_t w = 0; w < n_win; ++w) out[w].is_poi = long_events[w] >= 2 || seconds[w] >= kPoiAccumulatedS;
  return out;
}

BurdenClassification classify_burden(const BurdenSeries& b) {
  BurdenClassification c;
  c.total = b.total_min > kHighTotalBurdenMin ? BurdenClass::kHigh : BurdenClass::kLow;
  c.hourly = b.max_hourly_min > kHighHourlyBurdenMin ? BurdenClass::kHigh : BurdenClass::kLow;
  return c;
}

std::string to_string(BurdenClass c) { return c == BurdenClass::kHigh ? "high" : "low"; }

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("correlation: series lengths differ");
  if (a.size() < 2) throw ValidationError("correlation: need at least two values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw ValidationError("correlation undefined: zero variance");
  return sab / std::sqrt(saa * sbb);
}

BurdenCorrelation burden_correlation(std::span<const BurdenSeries> a, std::span<const BurdenSeries> b,
                                     std::size_t iters, std::uint64_t seed) {
  if (a.size() != b.size() || a.empty()) throw ValidationError("burden correlation: neonate lists differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].hourly.size() != b[i].hourly.size()) {
      throw ValidationError("burden correlation: hour grids differ for neonate " + std::to_string(i));
    }
  }
  auto stat = [&](std::span<const std::size_t> idx) -> std::optional<double> {
    std::vector<double> x, y;
    for (auto i : idx) {
      for (std::size_t h = 0; h < a[i].hourly.size(); ++h) {
        x.push_back(static_cast<double>(a[i].hourly[h]));
        y.push_back(static_cast<double>(b[i].hourly[h]));
      }
    }
    try {
      return pearson(x, y);
    } catch (const ValidationError&) {
      return std::nullopt;
    }
  };
  std::vector<std::size_t> all(a.size());
  std::iota(all.begin(), all.end(), 0);
  if (!stat(all)) throw ValidationError("correlation undefined: zero variance in a burden series");
  BurdenCorrelation out;
  out.r = bootstrap_ci(a.size(), stat, iters, seed);
  return out;
}

Agreement agreement_from_counts(const ConfusionCounts& c) {
  return {c, c.sensitivity(), c.specificity(), c.accuracy()};
}

Agreement poi_agreement(std::span<const PoiWindow> pred, std::span<const PoiWindow> truth) {
  if (pred.size() != truth.size()) throw ValidationError("POI agreement: window grids differ");
  Mask p(pred.size()), t(truth.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].start_s != truth[i].start_s) throw ValidationError("POI agreement: window grids differ");
    p[i] = pred[i].is_poi;
    t[i] = truth[i].is_poi;
  }
  return agreement_from_counts(confusion(p, t));
}

}  // namespace neoseize
