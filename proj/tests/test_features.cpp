#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "neoseize/error.hpp"
#include "neoseize/features.hpp"
#include "test_util.hpp"

using namespace neoseize;

namespace {

constexpr double kFs = 64.0;
constexpr std::size_t kN = 1024;

std::vector<double> pink(std::uint64_t seed, double scale = 20.0) {
  // Kellet's economy pink filter over Gaussian white noise.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  double b0 = 0, b1 = 0, b2 = 0;
  std::vector<double> x(kN);
  for (auto& v : x) {
    const double w = nd(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    v = scale * (b0 + b1 + b2 + w * 0.1848);
  }
  return x;
}

std::vector<double> tone(double f, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(kN);
  for (std::size_t i = 0; i < kN; ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / kFs + phase);
  }
  return x;
}

bool close(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("SNEO closed forms") {
  CHECK(sneo(std::vector<double>(100, 3.5), std::size_t{7}) == 0.0);

  const double amp = 2.5, omega = 0.3;
  std::vector<double> x(500);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = amp * std::sin(omega * static_cast<double>(n));
  CHECK(sneo(x, std::size_t{7}) == doctest::Approx(amp * amp * std::sin(omega) * std::sin(omega)).epsilon(1e-9));

  CHECK_THROWS_AS(sneo(std::vector<double>{1.0, 2.0}, std::size_t{1}), ValidationError);
  CHECK(sneo_window(64.0) == 7);
  CHECK(sneo_window(256.0) == 31);
}

TEST_CASE("SNEO of white noise has mean equal to the variance (Monte-Carlo)") {
  const double sigma = 2.0;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0.0, sigma);
  const int trials = 400;
  std::vector<double> vals;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x(kN);
    for (auto& v : x) v = nd(rng);
    vals.push_back(sneo(x, kFs));
  }
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= trials;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / (trials - 1) / trials);
  CHECK(std::abs(mean - sigma * sigma) < 3.0 * se);
}

TEST_CASE("zero epoch yields sentinel values") {
  const auto f = extract_features(std::vector<double>(kN, 0.0), kFs);
  for (double v : f.values) CHECK(v == 0.0);
  CHECK(f.max_amp == 0.0);
}

TEST_CASE("1 Hz unit sinusoid") {
  // Cosine phase puts 32 sign changes inside the 16 s window.
  const auto f = extract_features(tone(1.0, 1.0, std::numbers::pi / 2.0), kFs);
  CHECK(f.values[kZeroCrossings] == 32.0);
  CHECK(std::abs(f.values[kPeakFrequency] - 1.0) <= 0.25);
  CHECK(f.values[kRelDelta] > 0.95);
  CHECK(f.values[kRms] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-3));
  CHECK(f.max_amp == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.values[kLocalExtrema] == doctest::Approx(32.0).epsilon(0.04));
  CHECK(f.values[kAcfFirstZeroLag] == doctest::Approx(0.25).epsilon(0.07));
}

TEST_CASE("pink-noise features are finite and bit-reproducible") {
  const auto x = pink(3);
  const auto a = extract_features(x, kFs);
  const auto b = extract_features(x, kFs);
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    CHECK(std::isfinite(a.values[j]));
    CHECK(std::memcmp(&a.values[j], &b.values[j], sizeof(double)) == 0);
  }
  CHECK(std::memcmp(&a.max_amp, &b.max_amp, sizeof(double)) == 0);
  CHECK(a.values[kTotalPower] >= 0.0);
  CHECK(a.values[kRelDelta] >= 0.0);
  CHECK(a.values[kRelDelta] + a.values[kRelTheta] + a.values[kRelAlpha] <= 1.0 + 1e-12);
  CHECK(a.values[kSpectralEntropy] >= 0.0);
  CHECK(a.values[kSpectralEntropy] <= 1.0);
}

TEST_CASE("relative band powers partition the analysis band") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto x = pink(seed);
    const auto f = extract_features(x, kFs);
    const Psd psd = welch_psd(x, kFs);
    double total = 0.0, beta = 0.0;
    for (std::size_t k = 0; k < psd.power.size(); ++k) {
      const double fk = psd.frequency(k);
      if (fk < 0.5 || fk > 16.0) continue;
      total += psd.power[k];
      if (fk >= 13.0) beta += psd.power[k];
    }
    CHECK(f.values[kRelDelta] + f.values[kRelTheta] + f.values[kRelAlpha] + beta / total ==
          doctest::Approx(1.0).epsilon(1e-6));
    CHECK(f.values[kTotalPower] == doctest::Approx(total * psd.df).epsilon(1e-9));
  }
}

TEST_CASE("amplitude scaling acts on each feature as its definition predicts") {
  const auto x = pink(7);
  const double c = 3.7;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = c * x[i];
  const auto a = extract_features(x, kFs);
  const auto b = extract_features(y, kFs);
  const double rel = 1e-9;
  for (auto j : {kRms, kPeakToPeak, kLineLength}) CHECK(close(b.values[j], c * a.values[j], rel));
  CHECK(close(b.max_amp, c * a.max_amp, rel));
  for (auto j : {kSneoMean, kHjorthActivity, kTotalPower}) CHECK(close(b.values[j], c * c * a.values[j], rel));
  CHECK(close(b.values[kSneoVariance], c * c * c * c * a.values[kSneoVariance], rel));
  for (auto j : {kZeroCrossings, kLocalExtrema, kSkewness, kKurtosis, kHjorthMobility,
                 kHjorthComplexity, kAcfFirstZeroLag, kAcfZeroCrossings, kPeakFrequency,
                 kSpectralEdge90, kSpectralEdge95, kRelDelta, kRelTheta, kRelAlpha,
                 kSpectralEntropy}) {
    CAPTURE(feature_names()[j]);
    CHECK(close(b.values[j], a.values[j], rel));
  }
}

TEST_CASE("features are invariant to time reversal") {
  for (std::uint64_t seed : {11, 12}) {
    auto x = pink(seed);
    const auto a = extract_features(x, kFs);
    std::reverse(x.begin(), x.end());
    const auto b = extract_features(x, kFs);
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      CAPTURE(feature_names()[j]);
      CHECK(close(a.values[j], b.values[j], 1e-9));
    }
    CHECK(a.max_amp == b.max_amp);
  }
}

TEST_CASE("extract_features validates its input") {
  auto x = pink(1);
  x[100] = std::nan("");
  try {
    extract_features(x, kFs, 42);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("epoch 42") != std::string::npos);
  }
  CHECK_THROWS_AS(extract_features(std::vector<double>(100, 0.0), kFs), ValidationError);
}

TEST_CASE("normalization") {
  std::vector<FeatureVector> train;
  for (std::uint64_t s = 0; s < 30; ++s) {
    auto x = pink(100 + s);
    const auto t = tone(1.0 + 0.4 * static_cast<double>(s), 200.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += t[i];
    train.push_back(extract_features(x, kFs));
  }
  const auto stats = NormStats::fit(train);

  FeatureVector at_mean;
  at_mean.values = stats.mean;
  at_mean.max_amp = 123.0;
  const auto z = normalize(at_mean, stats);
  for (double v : z.values) CHECK(v == 0.0);
  CHECK(z.max_amp == 123.0);

  std::array<double, kNumFeatures> m{}, s{};
  for (const auto& r : train) {
    const auto n = normalize(r, stats);
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      m[j] += n.values[j];
      s[j] += n.values[j] * n.values[j];
    }
  }
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    CHECK(std::abs(m[j] / 30.0) < 1e-9);
    CHECK(std::abs(std::sqrt(s[j] / 30.0) - 1.0) < 1e-9);
  }

  // Stats from A applied to B then inverted recover B.
  for (std::uint64_t seed = 500; seed < 505; ++seed) {
    const auto b = extract_features(pink(seed, 55.0), kFs);
    const auto back = denormalize(normalize(b, stats), stats);
    for (std::size_t j = 0; j < kNumFeatures; ++j) CHECK(close(back.values[j], b.values[j], 1e-12));
    CHECK(back.max_amp == b.max_amp);
  }

  std::vector<FeatureVector> constant(5, train[0]);
  try {
    NormStats::fit(constant);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("rms") != std::string::npos);
  }
}

TEST_CASE("feature CSV cache round trip") {
  testutil::TempDir dir;
  FeatureMatrix fm;
  fm.recording_id = "n01";
  fm.n_channels = 2;
  fm.n_epochs = 2;
  for (std::uint64_t s = 0; s < 4; ++s) fm.rows.push_back(extract_features(pink(s), kFs));
  write_feature_csv(dir / "f.csv", fm);
  const auto back = read_feature_csv(dir / "f.csv");
  CHECK(back.recording_id == "n01");
  REQUIRE(back.rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.rows[i].values == fm.rows[i].values);
    CHECK(back.rows[i].max_amp == fm.rows[i].max_amp);
  }
}
