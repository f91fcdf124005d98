#include "neoseize/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "neoseize/error.hpp"

namespace neoseize {

void PostprocParams::validate() const {
  if (ma_len == 0 || ma_len % 2 == 0) throw ConfigError("postprocess: ma_len must be odd and >= 1");
  if (!std::isfinite(threshold)) throw ConfigError("postprocess: threshold must be finite");
  if (min_dur_s == 0) throw ConfigError("postprocess: min_dur must be positive");
}

std::vector<double> smooth_channel_max(const EpochStats& stats, std::span<const std::uint8_t> excluded,
                                       std::size_t ma_len) {
  const std::size_t nc = stats.n_channels;
  const std::size_t ne = stats.n_epochs;
  if (stats.values.size() != nc * ne) throw ValidationError("postprocess: statistic array size mismatch");
  if (!excluded.empty() && excluded.size() != nc * ne) {
    throw ValidationError("postprocess: outlier/bad flag array size mismatch");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const std::size_t half = ma_len / 2;
  std::vector<double> out(ne, kNegInf);
  std::vector<double> row(ne);
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t e = 0; e < ne; ++e) {
      const double v = stats.at(c, e);
      if (!std::isfinite(v)) throw ValidationError("postprocess: non-finite decision statistic");
      row[e] = (!excluded.empty() && excluded[c * ne + e]) ? kNegInf : v;
    }
    for (std::size_t e = 0; e < ne; ++e) {
      const std::size_t lo = e >= half ? e - half : 0;
      const std::size_t hi = std::min(ne, e + half + 1);
      double s = 0.0;
      bool neg_inf = false;
      for (std::size_t t = lo; t < hi; ++t) {
        if (row[t] == kNegInf) {
          neg_inf = true;
          break;
        }
        s += row[t];
      }
      const double m = neg_inf ? kNegInf : s / static_cast<double>(hi - lo);
      out[e] = std::max(out[e], m);
    }
  }
  return out;
}

std::vector<double> per_second_statistic(std::span<const double> epoch_stat, const EpochGrid& grid,
                                         std::size_t duration_s) {
  grid.validate();
  std::vector<double> out(duration_s, std::numeric_limits<double>::lowest());
  const auto hop = static_cast<std::size_t>(std::llround(grid.hop));
  const auto len = static_cast<std::size_t>(std::llround(grid.epoch_len));
  for (std::size_t e = 0; e < epoch_stat.size(); ++e) {
    const std::size_t start = e * hop;
    const std::size_t end = std::min(duration_s, start + len);
    for (std::size_t s = start; s < end; ++s) out[s] = std::max(out[s], epoch_stat[e]);
  }
  return out;
}

Mask threshold_mask(std::span<const double> second_stat, double threshold) {
  Mask m(second_stat.size(), 0);
  for (std::size_t s = 0; s < m.size(); ++s) m[s] = second_stat[s] > threshold ? 1 : 0;
  return m;
}

Mask apply_collar(const Mask& m, std::size_t collar_s) {
  if (collar_s == 0) return m;
  const std::size_t n = m.size();
  Mask out(n, 0);
  for (const auto& ev : extract_events(m)) {
    const auto on = static_cast<std::size_t>(ev.onset_s);
    const auto off = static_cast<std::size_t>(ev.offset_s);
    const std::size_t lo = on >= collar_s ? on - collar_s : 0;
    const std::size_t hi = std::min(n, off + collar_s);
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(lo), out.begin() + static_cast<std::ptrdiff_t>(hi), 1);
  }
  return out;
}

Mask remove_short(const Mask& m, std::size_t min_dur_s) {
  Mask out(m.size(), 0);
  for (const auto& ev : extract_events(m)) {
    if (ev.duration() < static_cast<double>(min_dur_s)) continue;
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(ev.onset_s),
              out.begin() + static_cast<std::ptrdiff_t>(ev.offset_s), 1);
  }
  return out;
}

AnnotationMask postprocess(const EpochStats& stats, std::span<const std::uint8_t> outliers,
                           std::span<const std::uint8_t> bad, const PostprocParams& p,
                           const EpochGrid& grid, std::size_t duration_s) {
  p.validate();
  if (stats.n_epochs != grid.n_epochs) throw ValidationError("postprocess: epoch count differs from grid");
  const std::size_t n = stats.values.size();
  if ((!outliers.empty() && outliers.size() != n) || (!bad.empty() && bad.size() != n)) {
    throw ValidationError("postprocess: outlier/bad flag array size mismatch");
  }
  std::vector<std::uint8_t> excluded;
  if (!outliers.empty() || !bad.empty()) {
    excluded.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      excluded[i] = (!outliers.empty() && outliers[i]) || (!bad.empty() && bad[i]);
    }
  }
  const auto epoch_stat = smooth_channel_max(stats, excluded, p.ma_len);
  const auto sec = per_second_statistic(epoch_stat, grid, duration_s);
  AnnotationMask out;
  out.rater = "sda";
  out.mask = remove_short(apply_collar(threshold_mask(sec, p.threshold), p.collar_s), p.min_dur_s);
  return out;
}

std::vector<Event> extract_events(const Mask& m) {
  std::vector<Event> ev;
  std::size_t s = 0;
  while (s < m.size()) {
    if (!m[s]) {
      ++s;
      continue;
    }
    std::size_t e = s;
    while (e < m.size() && m[e]) ++e;
    ev.push_back({static_cast<double>(s), static_cast<double>(e)});
    s = e;
  }
  return ev;
}

std::vector<Event> dilate_events(std::span<const Event> events, double collar_s, double duration_s) {
  std::vector<Event> out;
  for (const auto& e : events) {
    Event d{std::max(0.0, e.onset_s - collar_s), std::min(duration_s, e.offset_s + collar_s)};
    if (!out.empty() && d.onset_s <= out.back().offset_s) {
      out.back().offset_s = std::max(out.back().offset_s, d.offset_s);
    } else {
      out.push_back(d);
    }
  }
  return out;
}

std::vector<std::uint8_t> bad_epochs(const Recording& rec, const EpochGrid& grid) {
  const std::size_t nc = rec.channels.size();
  std::vector<std::uint8_t> out(nc * grid.n_epochs, 0);
  if (!rec.bad_electrode) return out;
  const auto hop = static_cast<std::size_t>(std::llround(grid.hop));
  const auto len = static_cast<std::size_t>(std::llround(grid.epoch_len));
  for (std::size_t c = 0; c < nc; ++c) {
    const Mask& bm = (*rec.bad_electrode)[c];
    for (std::size_t e = 0; e < grid.n_epochs; ++e) {
      const std::size_t start = e * hop;
      const std::size_t end = std::min(bm.size(), start + len);
      for (std::size_t s = start; s < end; ++s) {
        if (bm[s]) {
          out[c * grid.n_epochs + e] = 1;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace neoseize
