#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "neoseize/error.hpp"
#include "neoseize/evaluation.hpp"
#include "neoseize/log.hpp"
#include "oracles.hpp"

using namespace neoseize;

TEST_CASE("confusion counts") {
  const auto c = confusion(Mask{1, 0, 1, 0}, Mask{1, 0, 1, 0});
  CHECK(c == ConfusionCounts{2, 2, 0, 0});
  const auto d = confusion(Mask{1, 1}, Mask{1, 0});
  CHECK(d.tp == 1);
  CHECK(d.fp == 1);
  CHECK_THROWS_AS(confusion(Mask{1}, Mask{1, 0}), ValidationError);

  const ConfusionCounts poi{151, 716, 103, 30};
  CHECK(std::round(poi.sensitivity() * 1000) / 1000 == 0.834);
  CHECK(std::round(poi.specificity() * 1000) / 1000 == 0.874);
}

TEST_CASE("AUC") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(oracle::pairwise_auc(s, y) == 0.75);
  CHECK(auc(s, y) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(auc(std::vector<double>{1, 2, 3, 4}, std::vector<std::uint8_t>{0, 0, 1, 1}) == 1.0);
  CHECK_THROWS_AS(auc(std::vector<double>{1, 2}, std::vector<std::uint8_t>{1, 1}), ValidationError);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 199;
    std::vector<double> sc(n);
    std::vector<std::uint8_t> lab(n);
    for (std::size_t i = 0; i < n; ++i) {
      sc[i] = static_cast<double>(rng() % 20);  // coarse grid forces ties
      lab[i] = rng() % 2;
    }
    lab[0] = 0;
    lab[1] = 1;
    CHECK(std::abs(auc(sc, lab) - oracle::pairwise_auc(sc, lab)) < 1e-12);
  }

  // Labels independent of scores.
  const std::size_t n = 20000;
  std::vector<double> sc(n);
  std::vector<std::uint8_t> lab(n);
  std::normal_distribution<double> nd;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sc[i] = nd(rng);
    lab[i] = rng() % 2;
    npos += lab[i];
  }
  const double n1 = static_cast<double>(npos), n2 = static_cast<double>(n - npos);
  const double se = std::sqrt((n1 + n2 + 1.0) / (12.0 * n1 * n2));
  CHECK(std::abs(auc(sc, lab) - 0.5) < 3.0 * se);
}

TEST_CASE("Cohen's kappa") {
  const Mask a{1, 1, 0, 0}, b{1, 0, 0, 0};
  CHECK(oracle::hand_kappa(a, b) == doctest::Approx(0.5));
  CHECK(cohen_kappa(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cohen_kappa(a, a) == 1.0);
  CHECK(cohen_kappa(a, Mask{0, 0, 1, 1}) == doctest::Approx(-1.0));
  CHECK(cohen_kappa(Mask(5, 0), Mask(5, 0)) == 1.0);
  CHECK(cohen_kappa(Mask(5, 1), Mask(5, 0)) == 0.0);
  CHECK_THROWS_AS(cohen_kappa(Mask{}, Mask{}), ValidationError);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    Mask x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng() % 2;
      y[i] = rng() % 2;
    }
    CHECK(std::abs(cohen_kappa(x, y) - oracle::hand_kappa(x, y)) < 1e-12);
    CHECK(cohen_kappa(x, y) == cohen_kappa(y, x));
    Mask nx(n), ny(n);
    for (std::size_t i = 0; i < n; ++i) {
      nx[i] = !x[i];
      ny[i] = !y[i];
    }
    CHECK(std::abs(cohen_kappa(nx, ny) - cohen_kappa(x, y)) < 1e-12);
  }
}

TEST_CASE("event metrics") {
  const std::vector<Event> t{{100, 200}, {500, 560}};
  auto m = event_metrics(t, t, 1.0);
  CHECK(m.sdr == 1.0);
  CHECK(m.fd_per_h == 0.0);

  const std::vector<Event> inside{{110, 120}, {150, 170}};
  m = event_metrics(inside, std::vector<Event>{{100, 200}}, 1.0);
  CHECK(m.sdr == 1.0);
  CHECK(m.false_detections == 0);

  const std::vector<Event> three{{0, 10}, {20, 30}, {40, 50}};
  m = event_metrics(three, {}, 10.0);
  CHECK(m.fd_per_h == doctest::Approx(0.3));
  CHECK(std::isnan(m.sdr));

  // Touching intervals share no second.
  m = event_metrics(std::vector<Event>{{200, 210}}, std::vector<Event>{{100, 200}}, 1.0);
  CHECK(m.n_detected == 0);
  CHECK(m.false_detections == 1);
  CHECK_THROWS_AS(event_metrics({}, {}, 0.0), ValidationError);
}

TEST_CASE("bootstrap basics") {
  const auto constant = [](std::span<const std::size_t>) -> std::optional<double> { return 0.42; };
  const auto ci = bootstrap_ci(10, constant, 200, 1);
  CHECK(ci.lo == 0.42);
  CHECK(ci.hi == 0.42);

  std::vector<double> vals{1, 5, 2, 8, 3, 9, 4};
  const auto mean = [&](std::span<const std::size_t> idx) -> std::optional<double> {
    double s = 0.0;
    for (auto i : idx) s += vals[i];
    return s / static_cast<double>(idx.size());
  };
  const auto a = bootstrap_ci(vals.size(), mean, 500, 77);
  const auto b = bootstrap_ci(vals.size(), mean, 500, 77);
  CHECK(a.lo == b.lo);
  CHECK(a.hi == b.hi);
  CHECK(a.lo <= a.point);
  CHECK(a.point <= a.hi);

  const auto single = bootstrap_ci(1, mean, 100, 3);
  CHECK(single.lo == single.point);
  CHECK(single.hi == single.point);

  // Undefined when unit 0 is absent: every such resample is redrawn.
  const auto needs_zero = [](std::span<const std::size_t> idx) -> std::optional<double> {
    for (auto i : idx) {
      if (i == 0) return 1.0;
    }
    return std::nullopt;
  };
  log::ScopedSink quiet([](const std::string&) {});
  const auto r = bootstrap_ci(5, needs_zero, 200, 9);
  CHECK(r.redraws > 0);
  CHECK(r.lo == 1.0);
}

TEST_CASE("quantile is type 7") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
  CHECK(quantile({1, 2, 3, 4}, 0.25) == 1.75);
  CHECK(quantile({7}, 0.9) == 7);
}

TEST_CASE("Wilcoxon signed-rank") {
  const std::vector<double> x{1, 2, 3, 4, 5, 6}, zero(6, 0.0);
  CHECK(wilcoxon_signed_rank(x, x) == 1.0);
  CHECK(oracle::exact_wilcoxon(x, zero) == doctest::Approx(0.03125));
  CHECK(std::abs(wilcoxon_signed_rank(x, zero) - 0.03125) < 0.02);
  const std::vector<double> sym{-1, 1, -2, 2, -3, 3};
  CHECK(oracle::exact_wilcoxon(sym, zero) > 0.9);
  CHECK(wilcoxon_signed_rank(sym, zero) > 0.9);
  CHECK_THROWS_AS(wilcoxon_signed_rank(std::vector<double>{1, 2}, std::vector<double>{0, 0}), ValidationError);

  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng() % 6;
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = nd(rng) + 0.5;
      b[i] = nd(rng);
    }
    CHECK(std::abs(wilcoxon_signed_rank(a, b) - oracle::exact_wilcoxon(a, b)) < 0.05);
  }
}

TEST_CASE("Mann-Whitney U") {
  const std::vector<double> x{1, 2, 3}, y{10, 11, 12};
  CHECK(oracle::exact_mann_whitney(x, y) == doctest::Approx(0.1));
  CHECK(std::abs(mann_whitney_u(x, y) - 0.1) < 0.05);
  CHECK(mann_whitney_u(x, y) == mann_whitney_u(y, x));
  CHECK(mann_whitney_u(x, x) > 0.9);
  CHECK_THROWS_AS(mann_whitney_u({}, y), ValidationError);

  std::mt19937_64 rng(13);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n1 = 3 + rng() % 8, n2 = 3 + rng() % 8;
    std::vector<double> a(n1), b(n2);
    for (auto& v : a) v = nd(rng);
    for (auto& v : b) v = nd(rng) + 0.7;
    CHECK(std::abs(mann_whitney_u(a, b) - oracle::exact_mann_whitney(a, b)) < 0.05);
  }

  // Tiny and tied samples go through the exact distribution.
  CHECK(mann_whitney_u(std::vector<double>{1}, std::vector<double>{2, 3}) == doctest::Approx(2.0 / 3.0));
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n1 = 1 + rng() % 10, n2 = 1 + rng() % 10;
    std::vector<double> a(n1), b(n2);
    for (auto& v : a) v = static_cast<double>(rng() % 4);
    for (auto& v : b) v = static_cast<double>(rng() % 5);
    CHECK(mann_whitney_u(a, b) == doctest::Approx(oracle::exact_mann_whitney(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("non-inferiority of kappa") {
  std::mt19937_64 rng(4);
  std::vector<AnnotationMask> e1, e2, bad;
  for (int n = 0; n < 12; ++n) {
    Mask t(600, 0);
    const std::size_t on = 50 + rng() % 300, len = 60 + rng() % 120;
    for (std::size_t s = on; s < on + len; ++s) t[s] = 1;
    Mask a = t, b = t, c = t;
    for (std::size_t s = 0; s < 600; ++s) {
      if (rng() % 100 < 3) a[s] = !a[s];
      if (rng() % 100 < 3) b[s] = !b[s];
      if (rng() % 100 < 30) c[s] = !c[s];
    }
    e1.push_back({"E1", a});
    e2.push_back({"E2", b});
    bad.push_back({"sda", c});
  }
  const auto same = noninferiority_delta_kappa(e1, e1, e2, 300, 1);
  REQUIRE(same.size() == 2);
  CHECK(same[1].delta.lo == 0.0);
  CHECK(same[1].delta.hi == 0.0);
  CHECK(same[1].verdict == "non-inferior");
  CHECK(same[0].verdict == "superior");
  for (const auto& r : same) CHECK(r.noninferior());

  const auto worse = noninferiority_delta_kappa(bad, e1, e2, 300, 1);
  for (const auto& r : worse) {
    CHECK(r.delta.lo > 0.0);
    CHECK(r.verdict == "inferior");
  }
  CHECK_THROWS_AS(noninferiority_delta_kappa(bad, e1, {}, 10, 1), ValidationError);
}

TEST_CASE("report on perfect predictions") {
  std::vector<NeonateResult> rs;
  for (int n = 0; n < 4; ++n) {
    NeonateResult r;
    r.id = "n" + std::to_string(n);
    r.truth.mask.assign(3600, 0);
    for (std::size_t s = 100 + 200 * n; s < 300 + 200 * n; ++s) r.truth.mask[s] = 1;
    r.pred = r.truth;
    for (auto v : r.truth.mask) r.stat.push_back(v ? 1.0 : -1.0);
    rs.push_back(r);
  }
  const auto rep = evaluate(rs, 200, 5);
  CHECK(rep.c_auc.point == 1.0);
  CHECK(rep.c_kappa.point == 1.0);
  CHECK(rep.c_fd_per_h.point == 0.0);
  CHECK(rep.c_sdr.point == 1.0);
  CHECK(rep.auc.median == 1.0);
  CHECK(rep.sensitivity.median == 1.0);
  CHECK(rep.n_seizure == 4);
  CHECK(concatenated_kappa(rs) == 1.0);
  CHECK(concatenated_auc(rs) == 1.0);
}
