#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "neoseize/error.hpp"
#include "neoseize/log.hpp"
#include "neoseize/signal_io.hpp"
#include "test_util.hpp"

using namespace neoseize;
using testutil::EdfSignal;
using testutil::TempDir;

namespace {

Recording two_channel(std::vector<double> a, std::vector<double> b) {
  Recording r;
  r.id = "r";
  r.fs = 1.0;
  r.channels = {{"F3", std::move(a)}, {"P3", std::move(b)}};
  return r;
}

}  // namespace

TEST_CASE("read_edf accepts version 0 and maps digital range endpoints exactly") {
  EdfSignal s;
  s.samples = {-32768, 32767, 0, 1};
  const auto bytes = testutil::make_edf({s}, 4, 1);
  const Recording rec = parse_edf(bytes, "x");
  REQUIRE(rec.channels.size() == 1);
  CHECK(rec.fs == 4.0);
  const auto& x = rec.channels[0].samples;
  CHECK(x[0] == doctest::Approx(-3276.8).epsilon(1e-12));
  CHECK(x[1] == doctest::Approx(3276.7).epsilon(1e-12));
  CHECK(std::abs(x[2]) < 1e-4);
  CHECK(x[3] == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(rec.start_time > 0.0);
}

TEST_CASE("read_edf rejects malformed headers with byte offsets") {
  EdfSignal s;
  s.samples = {1, 2, 3, 4, 5, 6, 7, 8};

  SUBCASE("bad version") {
    const auto bytes = testutil::make_edf({s}, 4, 2, "1");
    try {
      parse_edf(bytes, "x");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("truncated data record") {
    auto bytes = testutil::make_edf({s}, 4, 2);
    bytes.resize(bytes.size() - 3);
    try {
      parse_edf(bytes, "x");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 512 + 8);  // header + one complete record
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
  SUBCASE("header shorter than 256 bytes") {
    const std::string bytes(100, ' ');
    CHECK_THROWS_AS(parse_edf(bytes, "x"), ParseError);
  }
  SUBCASE("non-numeric samples-per-record") {
    auto bytes = testutil::make_edf({s}, 4, 2);
    bytes.replace(256 + 216, 8, "abc     ");
    try {
      parse_edf(bytes, "x");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset() == 256 + 216);
    }
  }
  SUBCASE("mixed sampling rates") {
    EdfSignal t = s;
    t.label = "P3";
    auto bytes = testutil::make_edf({s, t}, 4, 1);
    bytes.replace(256 + 2 * 216 + 8, 8, "2       ");
    CHECK_THROWS_AS(parse_edf(bytes, "x"), ParseError);
  }
}

TEST_CASE("read_edf warns on non-microvolt units and passes values through") {
  EdfSignal s;
  s.unit = "mV";
  s.samples = {100, -100};
  std::vector<std::string> warnings;
  log::ScopedSink sink([&](const std::string& m) { warnings.push_back(m); });
  const auto rec = parse_edf(testutil::make_edf({s}, 2, 1), "x");
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("mV") != std::string::npos);
  CHECK(rec.channels[0].unit == "mV");
  CHECK(rec.channels[0].samples[0] == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("write_edf output is readable by read_edf within quantization") {
  TempDir dir;
  Recording rec;
  rec.id = "syn";
  rec.fs = 256.0;
  rec.start_time = 1600000000.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 40.0);
  for (const char* label : {"F3", "F4", "P3", "P4"}) {
    Channel ch{label, {}};
    for (int i = 0; i < 256 * 3; ++i) ch.samples.push_back(nd(rng));
    rec.channels.push_back(std::move(ch));
  }
  write_edf(rec, dir / "syn.edf");
  const Recording back = read_edf(dir / "syn.edf");
  CHECK(back.id == "syn");
  CHECK(back.fs == 256.0);
  CHECK(back.start_time == rec.start_time);
  REQUIRE(back.channels.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(back.channels[c].label == rec.channels[c].label);
    double peak = 0.0;
    for (double v : rec.channels[c].samples) peak = std::max(peak, std::abs(v));
    const double step = std::ceil(peak) / 32767.0;
    for (std::size_t i = 0; i < rec.n_samples(); ++i) {
      CHECK(std::abs(back.channels[c].samples[i] - rec.channels[c].samples[i]) <= step);
    }
  }
}

TEST_CASE("apply_montage subtracts cathode from anode") {
  const auto rec = two_channel({1, 2}, {1, 1});
  const auto out = apply_montage(rec, Montage::parse("F3-P3"));
  REQUIRE(out.channels.size() == 1);
  CHECK(out.channels[0].label == "F3-P3");
  CHECK(out.channels[0].samples == std::vector<double>{0, 1});

  const auto self = apply_montage(rec, Montage::parse("F3-F3"));
  CHECK(self.channels[0].samples == std::vector<double>{0, 0});

  CHECK_THROWS_AS(apply_montage(rec, Montage::parse("F3-Cz")), ConfigError);
  CHECK_THROWS_AS(Montage::parse("F3-P3,F3-P3"), ConfigError);
  CHECK_THROWS_AS(Montage::parse("F3P3"), ConfigError);
}

TEST_CASE("apply_montage is exactly linear and unions bad-electrode masks") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-500, 500);
  std::vector<double> a(64), b(64);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  auto rec = two_channel(a, b);
  rec.bad_electrode = std::vector<Mask>{Mask(64, 0), Mask(64, 0)};
  (*rec.bad_electrode)[0][3] = 1;
  (*rec.bad_electrode)[1][7] = 1;
  const auto out = apply_montage(rec, Montage::parse("F3-P3,P3-F3"));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(out.channels[0].samples[i] == a[i] - b[i]);
    CHECK(out.channels[1].samples[i] == b[i] - a[i]);
  }
  REQUIRE(out.bad_electrode);
  CHECK((*out.bad_electrode)[0][3] == 1);
  CHECK((*out.bad_electrode)[0][7] == 1);
  CHECK((*out.bad_electrode)[0][4] == 0);
}

TEST_CASE("load_annotations builds a 1 Hz mask") {
  TempDir dir;
  SUBCASE("single event") {
    testutil::write_text(dir / "a.csv", "onset_s,offset_s\n10,20\n");
    const auto m = load_annotations(dir / "a.csv", 30);
    REQUIRE(m.mask.size() == 30);
    for (std::size_t s = 0; s < 30; ++s) CHECK(m.mask[s] == (s >= 10 && s < 20 ? 1 : 0));
  }
  SUBCASE("empty file") {
    testutil::write_text(dir / "a.csv", "");
    const auto m = load_annotations(dir / "a.csv", 30);
    CHECK(m.positives() == 0);
    CHECK(m.mask.size() == 30);
  }
  SUBCASE("offset not after onset") {
    testutil::write_text(dir / "a.csv", "5,5\n");
    CHECK_THROWS_AS(load_annotations(dir / "a.csv", 30), FormatError);
  }
  SUBCASE("events beyond duration are clipped with a warning") {
    testutil::write_text(dir / "a.csv", "25,40\n");
    int warnings = 0;
    log::ScopedSink sink([&](const std::string&) { ++warnings; });
    const auto m = load_annotations(dir / "a.csv", 30);
    CHECK(warnings == 1);
    CHECK(m.positives() == 5);
  }
  SUBCASE("fractional bounds mark every intersected second") {
    testutil::write_text(dir / "a.csv", "2.5,4.2\n");
    const auto m = load_annotations(dir / "a.csv", 10);
    CHECK(m.mask == Mask{0, 0, 1, 1, 1, 0, 0, 0, 0, 0});
  }
}

TEST_CASE("overlapping events equal their union (brute-force oracle)") {
  TempDir dir;
  testutil::write_text(dir / "a.csv", "5,15\n10,20\n");
  testutil::write_text(dir / "b.csv", "5,20\n");
  const auto a = load_annotations(dir / "a.csv", 30);
  const auto b = load_annotations(dir / "b.csv", 30);
  CHECK(a.mask == b.mask);

  // Random event sets against a per-second intersection oracle.
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 100);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Event> ev;
    for (int i = 0; i < 4; ++i) {
      double x = u(rng), y = u(rng);
      if (x == y) continue;
      ev.push_back({std::min(x, y), std::max(x, y)});
    }
    const auto m = mask_from_events(ev, 100);
    for (std::size_t s = 0; s < 100; ++s) {
      bool hit = false;
      for (const auto& e : ev) hit = hit || (e.onset_s < s + 1.0 && e.offset_s > static_cast<double>(s));
      CHECK(m.mask[s] == (hit ? 1 : 0));
    }
  }
}

TEST_CASE("consensus is per-second unanimity") {
  const std::vector<AnnotationMask> two = {{"a", {1, 1, 0}}, {"b", {1, 0, 0}}};
  const auto c = consensus(two);
  CHECK(c.rater == "consensus");
  CHECK(c.mask == Mask{1, 0, 0});

  const std::vector<AnnotationMask> same = {{"a", {1, 0, 1, 1}}, {"b", {1, 0, 1, 1}}};
  CHECK(consensus(same).mask == same[0].mask);

  const std::vector<AnnotationMask> three = {{"a", {1, 1, 1}}, {"b", {1, 1, 0}}, {"c", {1, 0, 0}}};
  CHECK(consensus(three).mask == Mask{1, 0, 0});

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<AnnotationMask> raters(3, AnnotationMask{"r", Mask(50)});
    for (auto& r : raters) {
      for (auto& v : r.mask) v = static_cast<std::uint8_t>(rng() & 1);
    }
    const auto got = consensus(raters);
    for (std::size_t s = 0; s < 50; ++s) {
      CHECK(got.mask[s] == (raters[0].mask[s] && raters[1].mask[s] && raters[2].mask[s]));
    }
  }

  const std::vector<AnnotationMask> bad = {{"a", {1, 0}}, {"b", {1, 0, 0}}};
  CHECK_THROWS_AS(consensus(bad), ValidationError);
  const std::vector<AnnotationMask> one = {{"a", {1, 0}}};
  CHECK_THROWS_AS(consensus(one), ValidationError);
}

TEST_CASE("bad-electrode sidecar marks channel seconds") {
  TempDir dir;
  auto rec = two_channel(std::vector<double>(10, 0.0), std::vector<double>(10, 0.0));
  testutil::write_text(dir / "bad.csv", "second,channel_label\n2,F3\n3,P3\n");
  load_bad_electrodes(rec, dir / "bad.csv");
  REQUIRE(rec.bad_electrode);
  CHECK((*rec.bad_electrode)[0][2] == 1);
  CHECK((*rec.bad_electrode)[1][3] == 1);
  CHECK((*rec.bad_electrode)[0][3] == 0);
  testutil::write_text(dir / "bad2.csv", "1,Cz\n");
  CHECK_THROWS_AS(load_bad_electrodes(rec, dir / "bad2.csv"), FormatError);
}

TEST_CASE("mask CSV round trip") {
  TempDir dir;
  const AnnotationMask m{"sda", {0, 1, 1, 0, 1}};
  write_mask_csv(dir / "m.csv", m);
  CHECK(testutil::read_bytes(dir / "m.csv") == "second,label\n0,0\n1,1\n2,1\n3,0\n4,1\n");
  CHECK(read_mask_csv(dir / "m.csv").mask == m.mask);
}
