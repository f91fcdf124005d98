#include "neoseize/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "fft.hpp"
#include "neoseize/error.hpp"

namespace neoseize {
namespace {

struct Moments {
  double mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
};

Moments central_moments(std::span<const double> x) {
  Moments m;
  const auto n = static_cast<double>(x.size());
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  for (double v : x) {
    const double d = v - m.mean;
    const double d2 = d * d;
    m.m2 += d2;
    m.m3 += d2 * d;
    m.m4 += d2 * d2;
  }
  m.m2 /= n;
  m.m3 /= n;
  m.m4 /= n;
  return m;
}

double variance(std::span<const double> x) { return central_moments(x).m2; }

std::vector<double> diff(std::span<const double> x) {
  std::vector<double> d(x.size() > 1 ? x.size() - 1 : 0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i + 1] - x[i];
  return d;
}

// Sign change between consecutive values, with zero counted as non-negative.
bool crosses(double a, double b) { return (a < 0.0) != (b < 0.0); }

std::size_t count_crossings(std::span<const double> x) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < x.size(); ++i) n += crosses(x[i - 1], x[i]) ? 1 : 0;
  return n;
}

std::vector<double> sneo_smoothed(std::span<const double> x, std::size_t window) {
  if (x.size() < 3) throw ValidationError("SNEO needs at least 3 samples");
  std::vector<double> psi(x.size() - 2);
  for (std::size_t n = 1; n + 1 < x.size(); ++n) {
    psi[n - 1] = x[n] * x[n] - x[n - 1] * x[n + 1];
  }
  window = std::clamp<std::size_t>(window, 1, psi.size());
  std::vector<double> out(psi.size() - window + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < window; ++j) s += psi[i + j];
    out[i] = s / static_cast<double>(window);
  }
  return out;
}

// Normalized autocorrelation r[0..n-1] of the mean-removed signal via a
// zero-padded FFT. All zeros when the signal is constant.
std::vector<double> autocorrelation(std::span<const double> x) {
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::size_t nfft = 1;
  while (nfft < 2 * n) nfft <<= 1;
  std::vector<double> buf(nfft, 0.0);
  for (std::size_t i = 0; i < n; ++i) buf[i] = x[i] - mean;
  std::vector<std::complex<double>> spec(nfft / 2 + 1);
  detail::forward_real(buf, spec);
  for (auto& c : spec) c = std::norm(c);
  detail::inverse_real(spec, buf);
  std::vector<double> r(n, 0.0);
  if (!(buf[0] > 0.0)) return r;
  for (std::size_t k = 0; k < n; ++k) r[k] = buf[k] / buf[0];
  return r;
}

}  // namespace

const std::array<std::string_view, kNumFeatures + 1>& feature_names() {
  static const std::array<std::string_view, kNumFeatures + 1> names = {
      "rms",           "peak_to_peak",     "line_length",        "zero_crossings",
      "local_extrema", "skewness",         "kurtosis",           "sneo_mean",
      "sneo_variance", "hjorth_activity",  "hjorth_mobility",    "hjorth_complexity",
      "acf_zero_lag_s", "acf_zero_crossings", "total_power",     "peak_frequency",
      "spectral_edge_90", "spectral_edge_95", "rel_power_delta", "rel_power_theta",
      "rel_power_alpha", "spectral_entropy", "max_amplitude"};
  return names;
}

Psd welch_psd(std::span<const double> x, double fs, double window_s, double overlap) {
  const auto nseg = static_cast<std::size_t>(std::llround(window_s * fs));
  if (nseg < 2 || x.size() < nseg) throw ValidationError("welch_psd: signal shorter than window");
  const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(nseg * (1.0 - overlap))));

  // Symmetric Hann, so the estimate is invariant to time reversal.
  std::vector<double> w(nseg);
  double wss = 0.0;
  for (std::size_t i = 0; i < nseg; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(nseg - 1));
    wss += w[i] * w[i];
  }

  Psd psd;
  psd.df = fs / static_cast<double>(nseg);
  psd.power.assign(nseg / 2 + 1, 0.0);
  std::vector<double> seg(nseg), pw(nseg / 2 + 1);
  std::size_t count = 0;
  for (std::size_t start = 0; start + nseg <= x.size(); start += step, ++count) {
    const auto s = x.subspan(start, nseg);
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(nseg);
    for (std::size_t i = 0; i < nseg; ++i) seg[i] = (s[i] - mean) * w[i];
    detail::power_spectrum(seg, pw);
    for (std::size_t k = 0; k < pw.size(); ++k) psd.power[k] += pw[k];
  }
  const double scale = 1.0 / (fs * wss * static_cast<double>(count));
  for (std::size_t k = 0; k < psd.power.size(); ++k) {
    const bool edge = k == 0 || (nseg % 2 == 0 && k == nseg / 2);
    psd.power[k] *= scale * (edge ? 1.0 : 2.0);
  }
  return psd;
}

std::size_t sneo_window(double fs) {
  const double w = 0.12 * fs;
  return static_cast<std::size_t>(2.0 * std::round((w - 1.0) / 2.0) + 1.0);
}

double sneo(std::span<const double> x, std::size_t window) {
  const auto s = sneo_smoothed(x, window);
  return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
}

double sneo(std::span<const double> x, double fs) { return sneo(x, sneo_window(fs)); }

FeatureVector extract_features(std::span<const double> x, double fs, std::size_t epoch_index) {
  const auto expected = static_cast<std::size_t>(std::llround(kEpochSeconds * fs));
  if (x.size() != expected) {
    throw ValidationError("epoch " + std::to_string(epoch_index) + ": expected " +
                          std::to_string(expected) + " samples, got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw ValidationError("epoch " + std::to_string(epoch_index) + ": non-finite sample");
    }
  }

  FeatureVector f;
  auto& v = f.values;
  const auto n = static_cast<double>(x.size());

  // Amplitude and shape.
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  f.max_amp = std::max(std::abs(*lo), std::abs(*hi));
  v[kRms] = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0) / n);
  v[kPeakToPeak] = *hi - *lo;
  const auto dx = diff(x);
  double ll = 0.0;
  for (double d : dx) ll += std::abs(d);
  v[kLineLength] = ll;
  v[kZeroCrossings] = static_cast<double>(count_crossings(x));
  std::size_t extrema = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if ((x[i] - x[i - 1]) * (x[i + 1] - x[i]) < 0.0) ++extrema;
  }
  v[kLocalExtrema] = static_cast<double>(extrema);
  const Moments m = central_moments(x);
  if (m.m2 > 0.0) {
    v[kSkewness] = m.m3 / std::pow(m.m2, 1.5);
    v[kKurtosis] = m.m4 / (m.m2 * m.m2);
  }

  // Nonlinear energy.
  const auto s = sneo_smoothed(x, sneo_window(fs));
  const Moments sm = central_moments(s);
  v[kSneoMean] = sm.mean;
  v[kSneoVariance] = sm.m2;

  // Hjorth parameters.
  const double var_x = m.m2;
  const double var_dx = variance(dx);
  const double var_ddx = variance(diff(dx));
  v[kHjorthActivity] = var_x;
  if (var_x > 0.0 && var_dx > 0.0) {
    const double mobility = std::sqrt(var_dx / var_x);
    v[kHjorthMobility] = mobility;
    v[kHjorthComplexity] = std::sqrt(var_ddx / var_dx) / mobility;
  }

  // Autocorrelation.
  const auto r = autocorrelation(x);
  if (r[0] > 0.0) {
    std::size_t k = 1;
    while (k < r.size() && r[k] > 0.0) ++k;
    v[kAcfFirstZeroLag] = static_cast<double>(k) / fs;
    const auto horizon = std::min(r.size(), static_cast<std::size_t>(std::llround(0.5 * fs)) + 1);
    v[kAcfZeroCrossings] = static_cast<double>(count_crossings(std::span(r).first(horizon)));
  }

  // Spectrum over the 0.5-16 Hz analysis band.
  const Psd psd = welch_psd(x, fs);
  const auto first_bin = static_cast<std::size_t>(std::ceil(kBandLowHz / psd.df - 1e-9));
  const auto last_bin = std::min(psd.power.size() - 1,
                                 static_cast<std::size_t>(std::floor(kBandHighHz / psd.df + 1e-9)));
  double total = 0.0, delta = 0.0, theta = 0.0, alpha = 0.0;
  std::size_t peak = first_bin;
  for (std::size_t k = first_bin; k <= last_bin; ++k) {
    const double p = psd.power[k];
    const double fk = psd.frequency(k);
    total += p;
    if (fk < 4.0) {
      delta += p;
    } else if (fk < 8.0) {
      theta += p;
    } else if (fk < 13.0) {
      alpha += p;
    }
    if (p > psd.power[peak]) peak = k;
  }
  v[kTotalPower] = total * psd.df;
  if (total > 0.0) {
    v[kPeakFrequency] = psd.frequency(peak);
    double cum = 0.0;
    bool have90 = false;
    for (std::size_t k = first_bin; k <= last_bin; ++k) {
      cum += psd.power[k];
      if (!have90 && cum >= 0.90 * total) {
        v[kSpectralEdge90] = psd.frequency(k);
        have90 = true;
      }
      if (cum >= 0.95 * total) {
        v[kSpectralEdge95] = psd.frequency(k);
        break;
      }
    }
    v[kRelDelta] = delta / total;
    v[kRelTheta] = theta / total;
    v[kRelAlpha] = alpha / total;
    double h = 0.0;
    for (std::size_t k = first_bin; k <= last_bin; ++k) {
      const double p = psd.power[k] / total;
      if (p > 0.0) h -= p * std::log(p);
    }
    v[kSpectralEntropy] = h / std::log(static_cast<double>(last_bin - first_bin + 1));
  }
  return f;
}

FeatureMatrix compute_features(const Recording& rec, const EpochGrid& grid) {
  FeatureMatrix fm;
  fm.recording_id = rec.id;
  fm.n_channels = rec.channels.size();
  fm.n_epochs = grid.n_epochs;
  fm.rows.reserve(fm.n_channels * fm.n_epochs);
  for (const auto& seg : epoch(rec, grid)) {
    fm.rows.push_back(extract_features(seg.samples, grid.fs_feat, seg.epoch));
  }
  return fm;
}

NormStats NormStats::fit(std::span<const FeatureVector> rows) {
  if (rows.empty()) throw ValidationError("normalization needs at least one training row");
  NormStats st;
  const auto n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) st.mean[j] += r.values[j];
  }
  for (auto& m : st.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      const double d = r.values[j] - st.mean[j];
      st.sd[j] += d * d;
    }
  }
  for (auto& s : st.sd) s = std::sqrt(s / n);
  st.validate();
  return st;
}

void NormStats::validate() const {
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (!(sd[j] > 0.0) || !std::isfinite(sd[j])) {
      throw ValidationError("feature '" + std::string(feature_names()[j]) +
                            "' has zero standard deviation in the training data");
    }
  }
}

FeatureVector normalize(const FeatureVector& v, const NormStats& stats) {
  FeatureVector out = v;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    out.values[j] = (v.values[j] - stats.mean[j]) / stats.sd[j];
  }
  return out;
}

FeatureVector denormalize(const FeatureVector& v, const NormStats& stats) {
  FeatureVector out = v;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    out.values[j] = v.values[j] * stats.sd[j] + stats.mean[j];
  }
  return out;
}

FeatureMatrix normalize(const FeatureMatrix& fm, const NormStats& stats) {
  stats.validate();
  FeatureMatrix out = fm;
  for (auto& r : out.rows) r = normalize(r, stats);
  return out;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& fm) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open '" + path.string() + "' for writing");
  out << "# " << kFeatureVersion << ',' << fm.recording_id << ',' << fm.n_channels << ','
      << fm.n_epochs << '\n';
  out << "channel,epoch";
  for (auto name : feature_names()) out << ',' << name;
  out << '\n';
  char buf[32];
  for (std::size_t c = 0; c < fm.n_channels; ++c) {
    for (std::size_t e = 0; e < fm.n_epochs; ++e) {
      const auto& r = fm.row(c, e);
      out << c << ',' << e;
      for (double v : r.values) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        out << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.17g", r.max_amp);
      out << buf << '\n';
    }
  }
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw FormatError(path.string() + ": missing feature-version comment line");
  }
  std::stringstream meta(line.substr(2));
  std::string version, id, nc, ne;
  std::getline(meta, version, ',');
  std::getline(meta, id, ',');
  std::getline(meta, nc, ',');
  std::getline(meta, ne, ',');
  if (version != kFeatureVersion) {
    throw FormatError(path.string() + ": feature version '" + version + "' does not match '" +
                      std::string(kFeatureVersion) + "'");
  }
  FeatureMatrix fm;
  fm.recording_id = id;
  fm.n_channels = std::stoul(nc);
  fm.n_epochs = std::stoul(ne);
  std::getline(in, line);  // column header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
    if (cells.size() != kNumFeatures + 3) {
      throw FormatError(path.string() + ": row with " + std::to_string(cells.size()) + " columns");
    }
    FeatureVector r;
    std::copy(cells.begin() + 2, cells.begin() + 2 + kNumFeatures, r.values.begin());
    r.max_amp = cells.back();
    fm.rows.push_back(r);
  }
  if (fm.rows.size() != fm.n_channels * fm.n_epochs) {
    throw FormatError(path.string() + ": row count does not match channels x epochs");
  }
  return fm;
}

}  // namespace neoseize
