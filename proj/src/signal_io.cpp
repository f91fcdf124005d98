#include "neoseize/signal_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "neoseize/error.hpp"
#include "neoseize/log.hpp"

namespace neoseize {
namespace {

constexpr std::size_t kFixedHeader = 256;
constexpr std::size_t kPerSignalHeader = 256;

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string field(std::span<const char> bytes, std::size_t offset, std::size_t len) {
  return trim(std::string_view(bytes.data() + offset, len));
}

double number_field(std::span<const char> bytes, std::size_t offset, std::size_t len,
                    const char* what) {
  const std::string text = field(bytes, offset, len);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
    throw ParseError(std::string("EDF header: bad ") + what + " '" + text + "'", offset);
  }
  return v;
}

bool is_microvolt(const std::string& unit) {
  return unit == "uV" || unit == "\xB5V" || unit == "\xC2\xB5V" || unit == "microV";
}

double parse_start_time(std::span<const char> bytes) {
  const std::string date = field(bytes, 168, 8);
  const std::string time = field(bytes, 176, 8);
  int dd = 0, mm = 0, yy = 0, hh = 0, mi = 0, ss = 0;
  if (std::sscanf(date.c_str(), "%d.%d.%d", &dd, &mm, &yy) != 3) {
    throw ParseError("EDF header: bad start date '" + date + "'", 168);
  }
  if (std::sscanf(time.c_str(), "%d.%d.%d", &hh, &mi, &ss) != 3) {
    throw ParseError("EDF header: bad start time '" + time + "'", 176);
  }
  std::tm tm{};
  tm.tm_year = (yy >= 85 ? 1900 + yy : 2000 + yy) - 1900;
  tm.tm_mon = mm - 1;
  tm.tm_mday = dd;
  tm.tm_hour = hh;
  tm.tm_min = mi;
  tm.tm_sec = ss;
  return static_cast<double>(timegm(&tm));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return in;
}

}  // namespace

std::size_t Recording::duration_seconds() const {
  return static_cast<std::size_t>(std::ceil(duration_s() - 1e-9));
}

const Channel* Recording::find(const std::string& label) const {
  for (const auto& ch : channels) {
    if (ch.label == label) return &ch;
  }
  return nullptr;
}

void Recording::validate() const {
  if (!(fs > 0.0)) throw FormatError("recording '" + id + "': sampling rate must be positive");
  std::set<std::string> labels;
  for (const auto& ch : channels) {
    if (ch.samples.size() != n_samples()) {
      throw FormatError("recording '" + id + "': channel '" + ch.label + "' has " +
                        std::to_string(ch.samples.size()) + " samples, expected " +
                        std::to_string(n_samples()));
    }
    if (!labels.insert(ch.label).second) {
      throw FormatError("recording '" + id + "': duplicate channel label '" + ch.label + "'");
    }
  }
  if (bad_electrode) {
    if (bad_electrode->size() != channels.size()) {
      throw FormatError("recording '" + id + "': bad-electrode mask channel count mismatch");
    }
    for (const auto& m : *bad_electrode) {
      if (m.size() != duration_seconds()) {
        throw FormatError("recording '" + id + "': bad-electrode mask length mismatch");
      }
    }
  }
}

Montage Montage::parse(const std::string& text) {
  Montage m;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& item : split_csv_line(text)) {
    if (item.empty()) continue;
    const auto dash = item.find('-');
    if (dash == std::string::npos || item.find('-', dash + 1) != std::string::npos || dash == 0 ||
        dash + 1 == item.size()) {
      throw ConfigError("montage entry '" + item + "' must look like ANODE-CATHODE");
    }
    MontagePair p{item.substr(0, dash), item.substr(dash + 1)};
    if (!seen.emplace(p.anode, p.cathode).second) {
      throw ConfigError("montage pair '" + item + "' repeated");
    }
    m.pairs.push_back(std::move(p));
  }
  if (m.pairs.empty()) throw ConfigError("montage is empty");
  return m;
}

std::string Montage::to_string() const {
  std::string out;
  for (const auto& p : pairs) {
    if (!out.empty()) out += ',';
    out += p.label();
  }
  return out;
}

std::size_t AnnotationMask::positives() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

Recording read_edf(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_edf(bytes, path.stem().string());
}

Recording parse_edf(std::span<const char> bytes, const std::string& id) {
  if (bytes.size() < kFixedHeader) {
    throw ParseError("EDF header shorter than 256 bytes", bytes.size());
  }
  if (field(bytes, 0, 8) != "0") {
    throw ParseError("EDF version field must be \"0\"", 0);
  }
  const auto header_bytes = static_cast<std::size_t>(number_field(bytes, 184, 8, "header size"));
  const auto ns = static_cast<std::size_t>(number_field(bytes, 252, 4, "signal count"));
  if (ns == 0) throw ParseError("EDF header declares no signals", 252);
  if (header_bytes != kFixedHeader + ns * kPerSignalHeader) {
    throw ParseError("EDF header size " + std::to_string(header_bytes) +
                         " inconsistent with signal count " + std::to_string(ns),
                     184);
  }
  if (bytes.size() < header_bytes) {
    throw ParseError("EDF signal headers truncated", bytes.size());
  }
  long long n_records = std::llround(number_field(bytes, 236, 8, "record count"));
  const double record_duration = number_field(bytes, 244, 8, "record duration");
  if (!(record_duration > 0.0)) throw ParseError("EDF record duration must be positive", 244);

  // Per-signal header fields are stored column-wise: all labels, then all transducers, ...
  auto col = [&](std::size_t col_offset, std::size_t width, std::size_t i) {
    return kFixedHeader + ns * col_offset + i * width;
  };
  struct SignalHeader {
    std::string label, unit;
    double pmin, pmax, dmin, dmax;
    std::size_t samples;
  };
  std::vector<SignalHeader> sig(ns);
  std::size_t record_bytes = 0;
  for (std::size_t i = 0; i < ns; ++i) {
    auto& s = sig[i];
    s.label = field(bytes, col(0, 16, i), 16);
    s.unit = field(bytes, col(96, 8, i), 8);
    s.pmin = number_field(bytes, col(104, 8, i), 8, "physical minimum");
    s.pmax = number_field(bytes, col(112, 8, i), 8, "physical maximum");
    s.dmin = number_field(bytes, col(120, 8, i), 8, "digital minimum");
    s.dmax = number_field(bytes, col(128, 8, i), 8, "digital maximum");
    const double spr = number_field(bytes, col(216, 8, i), 8, "samples per record");
    if (spr < 1 || spr != std::floor(spr)) {
      throw ParseError("EDF signal '" + s.label + "': bad samples per record", col(216, 8, i));
    }
    s.samples = static_cast<std::size_t>(spr);
    if (s.dmax <= s.dmin) {
      throw ParseError("EDF signal '" + s.label + "': digital maximum not above minimum",
                       col(128, 8, i));
    }
    record_bytes += 2 * s.samples;
  }

  const std::size_t data_bytes = bytes.size() - header_bytes;
  if (n_records < 0) {
    n_records = static_cast<long long>(data_bytes / record_bytes);
  }
  const std::size_t expected = static_cast<std::size_t>(n_records) * record_bytes;
  if (data_bytes < expected) {
    const std::size_t complete = data_bytes / record_bytes;
    throw ParseError("EDF data truncated: header declares " + std::to_string(n_records) +
                         " records, file holds " + std::to_string(complete) + " complete",
                     header_bytes + complete * record_bytes);
  }
  if (data_bytes > expected) {
    log::warn("EDF '" + id + "': " + std::to_string(data_bytes - expected) +
              " trailing bytes ignored");
  }

  Recording rec;
  rec.id = id;
  rec.start_time = parse_start_time(bytes);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ns; ++i) {
    if (sig[i].label == "EDF Annotations") {
      log::warn("EDF '" + id + "': skipping EDF+ annotation signal");
      continue;
    }
    const double fs = static_cast<double>(sig[i].samples) / record_duration;
    if (keep.empty()) {
      rec.fs = fs;
    } else if (std::abs(fs - rec.fs) > 1e-9 * rec.fs) {
      throw ParseError("EDF signal '" + sig[i].label + "' sampled at " + std::to_string(fs) +
                           " Hz, others at " + std::to_string(rec.fs) + " Hz",
                       col(216, 8, i));
    }
    if (!is_microvolt(sig[i].unit)) {
      log::warn("EDF '" + id + "': channel '" + sig[i].label + "' has unit '" + sig[i].unit +
                "', expected uV; values passed through");
    }
    keep.push_back(i);
  }
  if (keep.empty()) throw ParseError("EDF holds no data signals", kFixedHeader);

  rec.channels.resize(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto& s = sig[keep[k]];
    rec.channels[k].label = s.label;
    rec.channels[k].unit = is_microvolt(s.unit) ? "uV" : s.unit;
    rec.channels[k].samples.reserve(static_cast<std::size_t>(n_records) * s.samples);
  }

  std::vector<std::size_t> signal_offset(ns, 0);
  for (std::size_t i = 1; i < ns; ++i) signal_offset[i] = signal_offset[i - 1] + 2 * sig[i - 1].samples;

  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + header_bytes);
  for (long long r = 0; r < n_records; ++r) {
    const auto* rec_base = data + static_cast<std::size_t>(r) * record_bytes;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      const auto& s = sig[keep[k]];
      const double scale = (s.pmax - s.pmin) / (s.dmax - s.dmin);
      const auto* p = rec_base + signal_offset[keep[k]];
      auto& out = rec.channels[k].samples;
      for (std::size_t j = 0; j < s.samples; ++j) {
        const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[2 * j]) |
                                                   (static_cast<std::uint16_t>(p[2 * j + 1]) << 8));
        out.push_back((static_cast<double>(raw) - s.dmin) * scale + s.pmin);
      }
    }
  }
  rec.validate();
  return rec;
}

void write_edf(const Recording& rec, const std::filesystem::path& path) {
  rec.validate();
  const double spr_d = rec.fs;
  if (spr_d != std::floor(spr_d)) {
    throw ValidationError("write_edf: sampling rate must be an integer number of Hz");
  }
  const auto spr = static_cast<std::size_t>(spr_d);
  if (rec.n_samples() % spr != 0) {
    throw ValidationError("write_edf: recording must span a whole number of seconds");
  }
  const std::size_t n_records = rec.n_samples() / spr;
  const std::size_t ns = rec.channels.size();

  std::string header(kFixedHeader + ns * kPerSignalHeader, ' ');
  auto put = [&](std::size_t offset, std::size_t width, const std::string& value) {
    if (value.size() > width) throw ValidationError("EDF field overflow: '" + value + "'");
    std::copy(value.begin(), value.end(), header.begin() + static_cast<std::ptrdiff_t>(offset));
  };
  const auto t = static_cast<std::time_t>(rec.start_time);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  put(0, 8, "0");
  put(8, 80, "X X X X");
  put(88, 80, "Startdate X X X X");
  std::snprintf(buf, sizeof buf, "%02d.%02d.%02d", tm.tm_mday, tm.tm_mon + 1, tm.tm_year % 100);
  put(168, 8, buf);
  std::snprintf(buf, sizeof buf, "%02d.%02d.%02d", tm.tm_hour, tm.tm_min, tm.tm_sec);
  put(176, 8, buf);
  put(184, 8, std::to_string(header.size()));
  put(236, 8, std::to_string(n_records));
  put(244, 8, "1");
  put(252, 4, std::to_string(ns));

  constexpr double kDigital = 32767.0;
  std::vector<double> pmax(ns);
  for (std::size_t i = 0; i < ns; ++i) {
    double peak = 0.0;
    for (double v : rec.channels[i].samples) peak = std::max(peak, std::abs(v));
    pmax[i] = std::max(1.0, std::ceil(peak));
    auto col = [&](std::size_t col_offset, std::size_t width) {
      return kFixedHeader + ns * col_offset + i * width;
    };
    put(col(0, 16), 16, rec.channels[i].label);
    put(col(16, 80), 80, "");
    put(col(96, 8), 8, rec.channels[i].unit);
    put(col(104, 8), 8, std::to_string(-static_cast<long long>(pmax[i])));
    put(col(112, 8), 8, std::to_string(static_cast<long long>(pmax[i])));
    put(col(120, 8), 8, "-32767");
    put(col(128, 8), 8, "32767");
    put(col(136, 80), 80, "");
    put(col(216, 8), 8, std::to_string(spr));
  }

  std::ofstream out = open_out(path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<char> record(ns * spr * 2);
  for (std::size_t r = 0; r < n_records; ++r) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < ns; ++i) {
      const auto& x = rec.channels[i].samples;
      for (std::size_t j = 0; j < spr; ++j) {
        const double d = std::round(x[r * spr + j] / pmax[i] * kDigital);
        const auto v = static_cast<std::int16_t>(std::clamp(d, -kDigital, kDigital));
        const auto u = static_cast<std::uint16_t>(v);
        record[pos++] = static_cast<char>(u & 0xff);
        record[pos++] = static_cast<char>(u >> 8);
      }
    }
    out.write(record.data(), static_cast<std::streamsize>(record.size()));
  }
  if (!out) throw RuntimeError("write failed for '" + path.string() + "'");
}

Recording apply_montage(const Recording& rec, const Montage& montage) {
  Recording out;
  out.id = rec.id;
  out.fs = rec.fs;
  out.start_time = rec.start_time;
  if (rec.bad_electrode) out.bad_electrode.emplace();

  auto index_of = [&](const std::string& label) {
    for (std::size_t i = 0; i < rec.channels.size(); ++i) {
      if (rec.channels[i].label == label) return i;
    }
    throw ConfigError("montage references channel '" + label + "' absent from recording '" +
                      rec.id + "'");
  };
  for (const auto& pair : montage.pairs) {
    const std::size_t a = index_of(pair.anode);
    const std::size_t c = index_of(pair.cathode);
    Channel ch;
    ch.label = pair.label();
    ch.unit = rec.channels[a].unit;
    const auto& xa = rec.channels[a].samples;
    const auto& xc = rec.channels[c].samples;
    ch.samples.resize(xa.size());
    for (std::size_t n = 0; n < xa.size(); ++n) ch.samples[n] = xa[n] - xc[n];
    out.channels.push_back(std::move(ch));
    if (rec.bad_electrode) {
      const auto& ma = (*rec.bad_electrode)[a];
      const auto& mc = (*rec.bad_electrode)[c];
      Mask m(ma.size());
      for (std::size_t s = 0; s < m.size(); ++s) m[s] = ma[s] | mc[s];
      out.bad_electrode->push_back(std::move(m));
    }
  }
  return out;
}

std::vector<Event> read_events_csv(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<Event> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cols = split_csv_line(t);
    double on = 0.0, off = 0.0;
    if (cols.size() != 2 || !parse_double(cols[0], on) || !parse_double(cols[1], off)) {
      if (lineno == 1 && !events.size()) continue;  // header row
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'onset_s,offset_s'");
    }
    if (!(off > on)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": offset must be greater than onset");
    }
    events.push_back({on, off});
  }
  return events;
}

void write_events_csv(const std::filesystem::path& path, std::span<const Event> events) {
  std::ofstream out = open_out(path);
  out << "onset_s,offset_s\n";
  char buf[64];
  for (const auto& e : events) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", e.onset_s, e.offset_s);
    out << buf;
  }
}

AnnotationMask mask_from_events(std::span<const Event> events, std::size_t duration_s,
                                std::string rater) {
  AnnotationMask m{std::move(rater), Mask(duration_s, 0)};
  const auto dur = static_cast<double>(duration_s);
  for (const auto& e : events) {
    if (!(e.offset_s > e.onset_s)) throw FormatError("event offset must be greater than onset");
    double on = e.onset_s, off = e.offset_s;
    if (on < 0.0 || off > dur) {
      log::warn("event [" + std::to_string(on) + ", " + std::to_string(off) +
                ") clipped to recording duration " + std::to_string(duration_s) + " s");
      on = std::max(on, 0.0);
      off = std::min(off, dur);
    }
    if (!(off > on)) continue;
    const auto first = static_cast<std::size_t>(std::floor(on));
    const auto last = static_cast<std::size_t>(std::ceil(off));  // exclusive
    for (std::size_t s = first; s < last && s < duration_s; ++s) m.mask[s] = 1;
  }
  return m;
}

AnnotationMask load_annotations(const std::filesystem::path& path, std::size_t duration_s,
                                std::string rater) {
  const auto events = read_events_csv(path);
  return mask_from_events(events, duration_s, std::move(rater));
}

AnnotationMask consensus(std::span<const AnnotationMask> masks) {
  if (masks.size() < 2) throw ValidationError("consensus needs at least two raters");
  AnnotationMask out{"consensus", masks.front().mask};
  for (const auto& m : masks.subspan(1)) {
    if (m.mask.size() != out.mask.size()) {
      throw ValidationError("consensus: rater '" + m.rater + "' mask length " +
                            std::to_string(m.mask.size()) + " differs from " +
                            std::to_string(out.mask.size()));
    }
    for (std::size_t s = 0; s < out.mask.size(); ++s) out.mask[s] &= m.mask[s];
  }
  return out;
}

void load_bad_electrodes(Recording& rec, const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  const std::size_t seconds = rec.duration_seconds();
  std::vector<Mask> bad(rec.channels.size(), Mask(seconds, 0));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cols = split_csv_line(t);
    double sec = 0.0;
    if (cols.size() != 2 || !parse_double(cols[0], sec)) {
      if (lineno == 1) continue;
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": expected 'second,channel_label'");
    }
    std::size_t idx = rec.channels.size();
    for (std::size_t i = 0; i < rec.channels.size(); ++i) {
      if (rec.channels[i].label == cols[1]) idx = i;
    }
    if (idx == rec.channels.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": unknown channel '" +
                        cols[1] + "'");
    }
    if (sec < 0.0 || sec >= static_cast<double>(seconds)) {
      log::warn(path.string() + ":" + std::to_string(lineno) + ": second outside recording, ignored");
      continue;
    }
    bad[idx][static_cast<std::size_t>(sec)] = 1;
  }
  rec.bad_electrode = std::move(bad);
}

void write_mask_csv(const std::filesystem::path& path, const AnnotationMask& mask) {
  std::ofstream out = open_out(path);
  out << "second,label\n";
  for (std::size_t s = 0; s < mask.mask.size(); ++s) {
    out << s << ',' << static_cast<int>(mask.mask[s]) << '\n';
  }
}

AnnotationMask read_mask_csv(const std::filesystem::path& path, std::string rater) {
  std::ifstream in = open_in(path);
  AnnotationMask m{std::move(rater), {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto cols = split_csv_line(t);
    double sec = 0.0, label = 0.0;
    if (cols.size() != 2 || !parse_double(cols[0], sec) || !parse_double(cols[1], label)) {
      if (lineno == 1) continue;
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'second,label'");
    }
    if (sec != static_cast<double>(m.mask.size())) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                        ": seconds must be consecutive from 0");
    }
    if (label != 0.0 && label != 1.0) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
    }
    m.mask.push_back(static_cast<std::uint8_t>(label));
  }
  return m;
}

}  // namespace neoseize
