#include "neoseize/outlier_gate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "neoseize/error.hpp"
#include "neoseize/evaluation.hpp"
#include "neoseize/rng.hpp"

namespace neoseize {
namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

template <typename T>
void require_nonempty(const std::vector<T>& v, const char* name) {
  if (v.empty()) throw ConfigError(std::string("calibration grid '") + name + "' is empty");
}

}  // namespace

void OutlierParams::validate() const {
  if (k == 0) throw ConfigError("outlier gate: k must be >= 1");
  if (!(d_max > 0.0)) throw ConfigError("outlier gate: d_max must be positive");
  if (!(amp_max > 0.0)) throw ConfigError("outlier gate: amp_max must be positive");
  if (reference.rows == 0) throw ConfigError("outlier gate: empty reference set");
  if (k > reference.rows) throw ConfigError("outlier gate: k exceeds the reference set size");
}

std::vector<double> knn_distances(std::span<const double> x, const DenseMatrix& ref,
                                  std::span<const std::size_t> ks, std::size_t skip) {
  const std::size_t avail = ref.rows - (skip < ref.rows ? 1 : 0);
  std::size_t kmax = 0;
  for (auto k : ks) {
    if (k == 0) throw ValidationError("knn: k must be >= 1");
    if (k > avail) {
      throw ValidationError("knn: k = " + std::to_string(k) + " exceeds the reference set size " +
                            std::to_string(avail));
    }
    kmax = std::max(kmax, k);
  }
  if (x.size() != ref.cols) throw ValidationError("knn: dimension mismatch");
  std::vector<double> d;
  d.reserve(ref.rows);
  for (std::size_t i = 0; i < ref.rows; ++i) {
    if (i != skip) d.push_back(sq_dist(x, ref.row(i)));
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kmax - 1), d.end());
  std::sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kmax));
  std::vector<double> out;
  out.reserve(ks.size());
  for (auto k : ks) out.push_back(std::sqrt(d[k - 1]));
  return out;
}

double knn_distance(std::span<const double> x, const DenseMatrix& ref, std::size_t k) {
  const std::size_t ks[] = {k};
  return knn_distances(x, ref, ks)[0];
}

std::vector<std::vector<double>> self_knn_distances(const DenseMatrix& ref, std::span<const std::size_t> ks) {
  std::vector<std::vector<double>> out(ks.size(), std::vector<double>(ref.rows));
  for (std::size_t r = 0; r < ref.rows; ++r) {
    const auto d = knn_distances(ref.row(r), ref, ks, r);
    for (std::size_t i = 0; i < ks.size(); ++i) out[i][r] = d[i];
  }
  return out;
}

bool is_outlier(double knn_dist, double max_amp, double d_max, double amp_max) {
  return max_amp > amp_max || knn_dist > d_max;
}

bool is_outlier(const FeatureVector& normalized, const OutlierParams& p) {
  if (normalized.max_amp > p.amp_max) return true;
  return knn_distance(normalized.values, p.reference, p.k) > p.d_max;
}

DenseMatrix build_reference(std::span<const FeatureVector> normalized, std::size_t max_rows,
                            std::uint64_t seed) {
  if (normalized.empty()) throw ValidationError("outlier gate: no training vectors for the reference set");
  std::vector<std::size_t> idx(normalized.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (max_rows > 0 && idx.size() > max_rows) {
    Rng rng(mix_seed(seed));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_rows);
    std::sort(idx.begin(), idx.end());
  }
  DenseMatrix ref(0, kNumFeatures);
  ref.data.reserve(idx.size() * kNumFeatures);
  for (auto i : idx) ref.push_row(normalized[i].values);
  return ref;
}

void CalibrationGrid::validate() const {
  require_nonempty(k, "k");
  require_nonempty(quantile, "quantile");
  require_nonempty(amp_max, "amp_max");
  require_nonempty(ma_len, "ma_len");
  require_nonempty(threshold, "threshold");
  require_nonempty(collar_s, "collar");
  require_nonempty(min_dur_s, "min_dur");
  for (auto v : k) {
    if (v == 0) throw ConfigError("calibration grid: k must be >= 1");
  }
  for (auto q : quantile) {
    if (!(q > 0.0 && q <= 100.0)) throw ConfigError("calibration grid: quantiles must lie in (0, 100]");
  }
  for (auto a : amp_max) {
    if (!(a > 0.0)) throw ConfigError("calibration grid: amp_max must be positive");
  }
  for (auto m : ma_len) {
    if (m == 0 || m % 2 == 0) throw ConfigError("calibration grid: ma_len values must be odd");
  }
  for (auto m : min_dur_s) {
    if (m == 0) throw ConfigError("calibration grid: min_dur must be positive");
  }
}

CalibrationResult calibrate(std::span<const CalibrationRecording> recs, const CalibrationGrid& grid) {
  grid.validate();
  if (recs.empty()) throw ValidationError("calibration: no recordings");
  for (const auto& r : recs) {
    const std::size_t n = r.stats.values.size();
    if (r.knn.size() != grid.k.size() || r.d_max.size() != grid.k.size() || r.max_amp.size() != n ||
        (!r.bad.empty() && r.bad.size() != n)) {
      throw ValidationError("calibration: recording inputs do not match the grid");
    }
    for (std::size_t i = 0; i < grid.k.size(); ++i) {
      if (r.knn[i].size() != n || r.d_max[i].size() != grid.quantile.size()) {
        throw ValidationError("calibration: recording inputs do not match the grid");
      }
    }
  }

  CalibrationResult best;
  best.kappa = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<std::uint8_t>> excluded(recs.size());
  std::vector<std::vector<double>> second_stat(recs.size());
  for (std::size_t ki = 0; ki < grid.k.size(); ++ki) {
    for (std::size_t qi = 0; qi < grid.quantile.size(); ++qi) {
      for (double amp : grid.amp_max) {
        for (std::size_t r = 0; r < recs.size(); ++r) {
          const auto& rec = recs[r];
          const double dmax = rec.d_max[ki][qi];
          auto& ex = excluded[r];
          ex.assign(rec.stats.values.size(), 0);
          for (std::size_t i = 0; i < ex.size(); ++i) {
            ex[i] = is_outlier(rec.knn[ki][i], rec.max_amp[i], dmax, amp) || (!rec.bad.empty() && rec.bad[i]);
          }
        }
        for (auto ma : grid.ma_len) {
          for (std::size_t r = 0; r < recs.size(); ++r) {
            const auto es = smooth_channel_max(recs[r].stats, excluded[r], ma);
            second_stat[r] = per_second_statistic(es, recs[r].grid, recs[r].truth.size());
          }
          for (double thr : grid.threshold) {
            std::vector<Mask> raw(recs.size());
            for (std::size_t r = 0; r < recs.size(); ++r) raw[r] = threshold_mask(second_stat[r], thr);
            for (auto collar : grid.collar_s) {
              std::vector<Mask> collared(recs.size());
              for (std::size_t r = 0; r < recs.size(); ++r) collared[r] = apply_collar(raw[r], collar);
              for (auto md : grid.min_dur_s) {
                ConfusionCounts c;
                for (std::size_t r = 0; r < recs.size(); ++r) {
                  c += confusion(remove_short(collared[r], md), recs[r].truth);
                }
                const double kappa = cohen_kappa(c);
                ++best.evaluated;
                if (kappa > best.kappa) {
                  best.kappa = kappa;
                  best.k = grid.k[ki];
                  best.quantile = grid.quantile[qi];
                  best.amp_max = amp;
                  best.post = {ma, thr, collar, md};
                }
              }
            }
          }
        }
      }
    }
  }
  return best;
}

}  // namespace neoseize
