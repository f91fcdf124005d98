#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "neoseize/error.hpp"
#include "neoseize/log.hpp"
#include "neoseize/preprocess.hpp"

using namespace neoseize;

namespace {

std::vector<double> sine(double f, double fs, double seconds, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(static_cast<std::size_t>(std::llround(fs * seconds)));
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + phase);
  }
  return x;
}

// RMS over the middle of the signal, away from edge transients.
double central_rms(const std::vector<double>& x, double fs, double skip_s = 8.0) {
  const auto skip = static_cast<std::size_t>(skip_s * fs);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = skip; i + skip < x.size(); ++i, ++n) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(n));
}

Recording single(std::vector<double> x, double fs) {
  Recording r;
  r.id = "t";
  r.fs = fs;
  r.channels = {{"F3-P3", std::move(x)}};
  return r;
}

// Squared magnitude of the bilinear Butterworth band: the forward-backward gain.
double analytic_gain(double f, double fs, const ButterworthBand& b) {
  const double w = std::tan(std::numbers::pi * f / fs);
  const double lo = std::tan(std::numbers::pi * b.low_hz / fs);
  const double hi = std::tan(std::numbers::pi * b.high_hz / fs);
  const double hp = 1.0 / (1.0 + std::pow(lo / w, 2 * b.highpass_order));
  const double lp = 1.0 / (1.0 + std::pow(w / hi, 2 * b.lowpass_order));
  return hp * lp;
}

}  // namespace

TEST_CASE("preprocess attenuates the stopband and keeps the passband") {
  for (double fs : {256.0, 250.0}) {
    CAPTURE(fs);
    const auto stop = preprocess(single(sine(20.0, fs, 60.0, 50.0), fs));
    CHECK(stop.fs == 64.0);
    CHECK(stop.n_samples() == 60 * 64);
    CHECK(central_rms(stop.channels[0].samples, 64.0) < 0.05 * 50.0 / std::sqrt(2.0));

    const auto pass = preprocess(single(sine(3.0, fs, 60.0, 50.0), fs));
    const double ratio = central_rms(pass.channels[0].samples, 64.0) / (50.0 / std::sqrt(2.0));
    CHECK(ratio == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("filter response matches the analytic Butterworth magnitude at probe frequencies") {
  const double fs = 256.0;
  const ButterworthBand band;
  for (double f : {0.5, 1.0, 3.0, 8.0, 12.0, 16.0, 18.0, 20.0}) {
    CAPTURE(f);
    const auto y = filtfilt_band(sine(f, fs, 120.0), fs, band);
    const double gain = central_rms(y, fs, 30.0) / (1.0 / std::sqrt(2.0));
    CHECK(gain == doctest::Approx(analytic_gain(f, fs, band)).epsilon(0.01));
  }
}

TEST_CASE("preprocess removes DC offsets") {
  std::vector<double> x(256 * 40, 100.0);
  const auto y = preprocess(single(x, 256.0));
  double mean = 0.0;
  for (double v : y.channels[0].samples) mean += v;
  mean /= static_cast<double>(y.n_samples());
  CHECK(std::abs(mean) < 1e-6);
  for (double v : y.channels[0].samples) CHECK(std::abs(v) < 1e-6);
}

TEST_CASE("preprocess rejects rates below the feature rate") {
  CHECK_THROWS_AS(preprocess(single(std::vector<double>(100, 0.0), 32.0)), ValidationError);
}

TEST_CASE("filtering in-band content twice equals filtering once") {
  const double fs = 64.0;
  auto x = sine(5.0, fs, 120.0, 30.0);
  const auto y = sine(7.0, fs, 120.0, 10.0, 0.4);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  const auto once = filtfilt_band(x, fs);
  const auto twice = filtfilt_band(once, fs);
  std::vector<double> d(once.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = twice[i] - once[i];
  CHECK(central_rms(d, fs, 30.0) / central_rms(once, fs, 30.0) < 1e-6);
}

TEST_CASE("resample preserves length and band-limited content") {
  const auto x = sine(2.0, 250.0, 20.0);
  const auto y = resample(x, 250.0, 64.0);
  CHECK(y.size() == 20 * 64);
  const auto ref = sine(2.0, 64.0, 20.0);
  for (std::size_t i = 64; i + 64 < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-3);
  CHECK(resample(std::vector<double>(1001, 0.0), 250.0, 64.0).size() == 256);
}

TEST_CASE("epoch grid arithmetic") {
  CHECK(make_grid(64.0, 4.0).n_epochs == 13);
  CHECK(make_grid(16.0, 4.0).n_epochs == 1);
  CHECK(make_grid(3600.0, 4.0).n_epochs == 897);
  int warnings = 0;
  {
    log::ScopedSink sink([&](const std::string&) { ++warnings; });
    CHECK(make_grid(15.0, 4.0).n_epochs == 0);
  }
  CHECK(warnings == 1);
  CHECK_THROWS_AS(make_grid(64.0, 0.0), ConfigError);
  CHECK_THROWS_AS(make_grid(64.0, 17.0), ConfigError);
}

TEST_CASE("epoch segments tile the recording bijectively") {
  std::vector<double> x(64 * 64);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
  Recording r = single(x, 64.0);
  r.channels.push_back({"F4-P4", x});
  const auto grid = make_grid(64.0, 4.0);
  const auto segs = epoch(r, grid);
  REQUIRE(segs.size() == 2 * 13);
  for (const auto& s : segs) {
    REQUIRE(s.samples.size() == 16 * 64);
    for (std::size_t k = 0; k < s.samples.size(); ++k) {
      // Sample value encodes its index: (epoch, offset) -> epoch*hop + offset.
      CHECK(s.samples[k] == static_cast<double>(s.epoch * grid.hop_samples() + k));
    }
  }
  CHECK(segs[13].channel == 1);
  CHECK(segs[13].epoch == 0);
}
