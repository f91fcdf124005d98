#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "neoseize/clinical.hpp"
#include "neoseize/error.hpp"

using namespace neoseize;

namespace {

Mask with_runs(std::size_t n, std::initializer_list<std::pair<std::size_t, std::size_t>> runs) {
  Mask m(n, 0);
  for (auto [a, b] : runs) {
    for (std::size_t s = a; s < b; ++s) m[s] = 1;
  }
  return m;
}

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace

TEST_CASE("hourly burden") {
  const auto zero = burden(Mask(7200, 0));
  CHECK(zero.hourly == std::vector<std::size_t>{0, 0});
  CHECK(zero.total_min == 0.0);

  const auto one = burden(with_runs(3600, {{100, 220}}));
  CHECK(one.hourly[0] == 120);
  CHECK(one.total_min == 2.0);

  const auto straddle = burden(with_runs(7200, {{3590, 3610}}));
  CHECK(straddle.hourly[0] == 10);
  CHECK(straddle.hourly[1] == 10);

  const auto partial = burden(with_runs(3700, {{3650, 3700}}));
  CHECK(partial.hourly.size() == 2);
  CHECK(partial.hourly[1] == 50);

  // Hourly bins account for every true second.
  std::mt19937_64 rng(2);
  Mask m(20000);
  std::size_t on = 0;
  for (auto& v : m) {
    v = rng() % 5 == 0;
    on += v;
  }
  const auto b = burden(m);
  std::size_t sum = 0;
  for (auto h : b.hourly) sum += h;
  CHECK(sum == on);
  CHECK(b.total_min == doctest::Approx(static_cast<double>(on) / 60.0));
}

TEST_CASE("periods of interest") {
  CHECK(detect_poi(with_runs(7200, {{100, 130}, {1000, 1030}}))[0].is_poi);
  CHECK_FALSE(detect_poi(with_runs(7200, {{100, 200}}))[0].is_poi);
  CHECK(detect_poi(with_runs(7200, {{100, 300}}))[0].is_poi);
  CHECK_FALSE(detect_poi(with_runs(7200, {{100, 129}, {1000, 1030}}))[0].is_poi);

  // An event split by a window edge counts where at least 30 s of it lies.
  const auto w = detect_poi(with_runs(14400, {{7180, 7240}, {8000, 8030}}));
  REQUIRE(w.size() == 2);
  CHECK_FALSE(w[0].is_poi);
  CHECK(w[1].is_poi);
  CHECK(w[1].start_s == 7200);

  // Adding seizure seconds never turns a window off.
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    Mask m(7200, 0);
    for (int k = 0; k < 3; ++k) {
      const std::size_t a = rng() % 7000, len = rng() % 100;
      for (std::size_t s = a; s < a + len; ++s) m[s] = 1;
    }
    const bool before = detect_poi(m)[0].is_poi;
    const std::size_t a = rng() % 7000, len = rng() % 100;
    for (std::size_t s = a; s < a + len; ++s) m[s] = 1;
    if (before) CHECK(detect_poi(m)[0].is_poi);
  }
}

TEST_CASE("burden classification") {
  BurdenSeries b;
  b.total_min = 46;
  CHECK(classify_burden(b).total == BurdenClass::kHigh);
  b.total_min = 45;
  CHECK(classify_burden(b).total == BurdenClass::kLow);
  b.max_hourly_min = 13;
  CHECK(classify_burden(b).hourly == BurdenClass::kLow);
  b.max_hourly_min = 13.0 + 1.0 / 60.0;
  CHECK(classify_burden(b).hourly == BurdenClass::kHigh);
  CHECK(classify_burden(BurdenSeries{}).total == BurdenClass::kLow);
}

TEST_CASE("burden correlation") {
  CHECK(pearson(std::vector<double>{1, 2, 4}, std::vector<double>{1, 2, 4}) == doctest::Approx(1.0));
  CHECK(pearson(std::vector<double>{1, 2, 4}, std::vector<double>{2, 4, 8}) == doctest::Approx(1.0));
  // Hand value: sxy = 3, sxx = 2, syy = 14/3, so r = 3 / sqrt(28/3).
  CHECK(pearson(std::vector<double>{0, 1, 2}, std::vector<double>{0, 2, 3}) ==
        doctest::Approx(3.0 / std::sqrt(28.0 / 3.0)));
  CHECK(round3(pearson(std::vector<double>{0, 1, 2}, std::vector<double>{0, 2, 3})) == 0.982);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{0, 2, 3}), ValidationError);

  std::vector<BurdenSeries> a;
  for (std::size_t n = 0; n < 6; ++n) a.push_back(burden(with_runs(7200, {{100, 100 + 50 * n}})));
  const auto same = burden_correlation(a, a, 200, 1);
  CHECK(same.r.point == doctest::Approx(1.0));
  CHECK(same.r.lo == doctest::Approx(1.0));
}

TEST_CASE("window agreement reproduces published rates") {
  const auto poi = agreement_from_counts({151, 716, 103, 30});
  CHECK(round3(poi.sensitivity) == 0.834);
  CHECK(round3(poi.specificity) == 0.874);
  CHECK(round3(poi.accuracy) == 0.867);
  const auto total = agreement_from_counts({11, 15, 0, 2});
  CHECK(round3(total.sensitivity) == 0.846);
  CHECK(total.specificity == 1.0);
  const auto hourly = agreement_from_counts({11, 14, 0, 3});
  CHECK(round3(hourly.sensitivity) == 0.786);
  CHECK(hourly.specificity == 1.0);

  const auto w = detect_poi(with_runs(14400, {{100, 400}}));
  CHECK(poi_agreement(w, w).accuracy == 1.0);
  CHECK_THROWS_AS(poi_agreement(w, detect_poi(Mask(7200, 0))), ValidationError);
}
