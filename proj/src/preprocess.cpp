#include "neoseize/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "neoseize/error.hpp"
#include "neoseize/log.hpp"

namespace neoseize {
namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;  // a0 normalized to 1
};

// RBJ cookbook sections; with Butterworth Q values the cascade is the
// bilinear-transformed Butterworth prototype, prewarped at f0.
Biquad lowpass_section(double f0, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
          (1.0 - alpha) / a0};
}

Biquad highpass_section(double f0, double fs, double q) {
  const double w0 = 2.0 * std::numbers::pi * f0 / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double c = std::cos(w0);
  const double a0 = 1.0 + alpha;
  return {(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0, -2.0 * c / a0,
          (1.0 - alpha) / a0};
}

std::vector<double> butterworth_q(int order) {
  if (order < 2 || order % 2 != 0) throw ConfigError("Butterworth order must be even and >= 2");
  std::vector<double> q;
  for (int k = 0; k < order / 2; ++k) {
    q.push_back(1.0 / (2.0 * std::cos(std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order))));
  }
  return q;
}

void run_section(const Biquad& s, std::vector<double>& x) {
  double z1 = 0.0, z2 = 0.0;  // transposed direct form II
  for (double& v : x) {
    const double y = s.b0 * v + z1;
    z1 = s.b1 * v - s.a1 * y + z2;
    z2 = s.b2 * v - s.a2 * y;
    v = y;
  }
}

}  // namespace

std::size_t EpochGrid::samples_per_epoch() const {
  return static_cast<std::size_t>(std::llround(epoch_len * fs_feat));
}

std::size_t EpochGrid::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop * fs_feat));
}

void EpochGrid::validate() const {
  if (epoch_len != kEpochSeconds) throw ConfigError("epoch length must be 16 s");
  if (!(hop > 0.0) || hop > epoch_len) throw ConfigError("hop must lie in (0, 16] s");
  if (std::abs(hop * fs_feat - std::round(hop * fs_feat)) > 1e-9) {
    throw ConfigError("hop must be a whole number of samples at the feature rate");
  }
  if (hop != std::floor(hop)) {
    throw ConfigError("hop must be a whole number of seconds");
  }
}

EpochGrid make_grid(double duration_s, double hop, double fs_feat) {
  EpochGrid g;
  g.hop = hop;
  g.fs_feat = fs_feat;
  g.validate();
  if (duration_s + 1e-9 < g.epoch_len) {
    log::warn("recording of " + std::to_string(duration_s) +
              " s is shorter than one 16 s epoch; no epochs produced");
    return g;
  }
  g.n_epochs = static_cast<std::size_t>(std::floor((duration_s - g.epoch_len) / hop + 1e-9)) + 1;
  return g;
}

std::vector<double> filtfilt_band(std::span<const double> x, double fs, const ButterworthBand& band) {
  if (x.empty()) return {};
  if (!(band.high_hz < fs / 2.0) || !(band.low_hz > 0.0) || band.low_hz >= band.high_hz) {
    throw ConfigError("band edges must satisfy 0 < low < high < fs/2");
  }
  std::vector<Biquad> sections;
  for (double q : butterworth_q(band.highpass_order)) sections.push_back(highpass_section(band.low_hz, fs, q));
  for (double q : butterworth_q(band.lowpass_order)) sections.push_back(lowpass_section(band.high_hz, fs, q));

  // Mean removal plus odd reflection about the end samples keeps start-up
  // transients out of the retained span.
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  const std::size_t n = x.size();
  const std::size_t pad = std::min(n - 1, static_cast<std::size_t>(std::ceil(10.0 * fs)));
  std::vector<double> y(n + 2 * pad);
  const double first = x.front() - mean;
  const double last = x.back() - mean;
  for (std::size_t i = 0; i < pad; ++i) y[i] = 2.0 * first - (x[pad - i] - mean);
  for (std::size_t i = 0; i < n; ++i) y[pad + i] = x[i] - mean;
  for (std::size_t i = 0; i < pad; ++i) y[pad + n + i] = 2.0 * last - (x[n - 2 - i] - mean);

  for (const auto& s : sections) run_section(s, y);
  std::reverse(y.begin(), y.end());
  for (const auto& s : sections) run_section(s, y);
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(pad),
          y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) throw ConfigError("sampling rates must be positive");
  if (fs_in != std::floor(fs_in) || fs_out != std::floor(fs_out)) {
    throw ConfigError("resample: sampling rates must be whole numbers of Hz");
  }
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(x.size()) * fs_out / fs_in));
  if (fs_in == fs_out || x.empty()) return {x.begin(), x.end()};

  // Polyphase Kaiser-windowed sinc, cutoff at 0.45 * min(fs_in, fs_out).
  // Output m sits at input position m*M/L; phase (m*M mod L) selects the taps.
  const auto g = std::gcd(static_cast<long long>(fs_in), static_cast<long long>(fs_out));
  const auto up = static_cast<long long>(fs_out) / g;
  const auto down = static_cast<long long>(fs_in) / g;
  constexpr double kBeta = 8.0;
  constexpr int kZeroCrossings = 12;
  const double cutoff = 0.45 * std::min(fs_in, fs_out);
  const double half_width = kZeroCrossings * fs_in / (2.0 * cutoff);  // input samples
  const double norm = std::cyl_bessel_i(0.0, kBeta);

  struct Phase {
    long long first;  // offset of taps[0] relative to floor(position)
    std::vector<double> taps;
  };
  std::vector<Phase> phases(static_cast<std::size_t>(up));
  for (long long p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p) / static_cast<double>(up);
    auto& ph = phases[static_cast<std::size_t>(p)];
    ph.first = static_cast<long long>(std::ceil(frac - half_width));
    const auto last = static_cast<long long>(std::floor(frac + half_width));
    double sum = 0.0;
    for (long long k = ph.first; k <= last; ++k) {
      const double d = static_cast<double>(k) - frac;
      const double r = std::min(1.0, std::abs(d) / half_width);
      const double arg = 2.0 * cutoff / fs_in * d;
      const double sinc =
          arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double w = sinc * std::cyl_bessel_i(0.0, kBeta * std::sqrt(1.0 - r * r)) / norm;
      ph.taps.push_back(w);
      sum += w;
    }
    for (double& w : ph.taps) w /= sum;
  }

  const auto n_in = static_cast<long long>(x.size());
  auto at = [&](long long j) {
    // Mirror about the end samples.
    if (j < 0) j = -j;
    if (j >= n_in) j = 2 * (n_in - 1) - j;
    return x[static_cast<std::size_t>(std::clamp<long long>(j, 0, n_in - 1))];
  };
  std::vector<double> out(n_out, 0.0);
  for (std::size_t m = 0; m < n_out; ++m) {
    const long long pos = static_cast<long long>(m) * down;
    const long long base = pos / up;
    const auto& ph = phases[static_cast<std::size_t>(pos % up)];
    const long long j0 = base + ph.first;
    double acc = 0.0;
    if (j0 >= 0 && j0 + static_cast<long long>(ph.taps.size()) <= n_in) {
      const double* src = x.data() + j0;
      for (std::size_t k = 0; k < ph.taps.size(); ++k) acc += ph.taps[k] * src[k];
    } else {
      for (std::size_t k = 0; k < ph.taps.size(); ++k) {
        acc += ph.taps[k] * at(j0 + static_cast<long long>(k));
      }
    }
    out[m] = acc;
  }
  return out;
}

Recording preprocess(const Recording& rec, double fs_feat) {
  rec.validate();
  if (rec.fs < fs_feat) {
    throw ValidationError("recording '" + rec.id + "' sampled at " + std::to_string(rec.fs) +
                          " Hz; at least " + std::to_string(fs_feat) + " Hz is required");
  }
  Recording out;
  out.id = rec.id;
  out.fs = fs_feat;
  out.start_time = rec.start_time;
  out.bad_electrode = rec.bad_electrode;
  for (const auto& ch : rec.channels) {
    Channel c;
    c.label = ch.label;
    c.unit = ch.unit;
    c.samples = resample(filtfilt_band(ch.samples, rec.fs), rec.fs, fs_feat);
    out.channels.push_back(std::move(c));
  }
  return out;
}

std::vector<Segment> epoch(const Recording& rec, const EpochGrid& grid) {
  std::vector<Segment> out;
  if (grid.n_epochs == 0) return out;
  if (std::abs(rec.fs - grid.fs_feat) > 1e-9) {
    throw ValidationError("epoch: recording rate differs from grid feature rate");
  }
  const std::size_t len = grid.samples_per_epoch();
  const std::size_t hop = grid.hop_samples();
  out.reserve(rec.channels.size() * grid.n_epochs);
  for (std::size_t c = 0; c < rec.channels.size(); ++c) {
    const auto& x = rec.channels[c].samples;
    for (std::size_t e = 0; e < grid.n_epochs; ++e) {
      const std::size_t start = e * hop;
      if (start + len > x.size()) {
        throw ValidationError("epoch grid exceeds recording length");
      }
      out.push_back({c, e, std::span<const double>(x).subspan(start, len)});
    }
  }
  return out;
}

}  // namespace neoseize
