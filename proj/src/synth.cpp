#include "neoseize/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "neoseize/error.hpp"
#include "neoseize/log.hpp"
#include "neoseize/rng.hpp"

namespace neoseize {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::size_t kMaxPlacementTries = 10000;
constexpr double kSeizureGapS = 60.0;  // minimum spacing between seizures
constexpr double kEdgeS = 20.0;        // keep events away from the recording edges

double mean_log_uniform(double a, double b) { return a == b ? a : (b - a) / std::log(b / a); }

bool clear_of(const std::vector<Event>& evs, double on, double off, double gap) {
  return std::none_of(evs.begin(), evs.end(),
                      [&](const Event& e) { return on < e.offset_s + gap && off > e.onset_s - gap; });
}

std::string neonate_id(const SynthSpec& spec, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", index);
  return spec.id_prefix + buf;
}

std::vector<Event> jitter(const std::vector<Event>& truth, Rng& rng, const SynthSpec& spec) {
  std::vector<Event> out;
  const double d = static_cast<double>(spec.duration_s);
  for (const auto& e : truth) {
    const double u = uniform(rng, 0.0, 1.0);
    const double j_on = uniform(rng, -spec.expert_jitter_s, spec.expert_jitter_s);
    const double j_off = uniform(rng, -spec.expert_jitter_s, spec.expert_jitter_s);
    if (e.duration() < 60.0 && u < spec.expert_miss_prob) continue;
    const double on = std::clamp(e.onset_s + j_on, 0.0, d);
    const double off = std::clamp(e.offset_s + j_off, 0.0, d);
    if (off - on >= 1.0) out.push_back({on, off});
  }
  return out;
}

void add_seizure(Recording& rec, const Event& ev, const SeizureMorphology& m, Rng& rng) {
  const double fs = rec.fs;
  const double amp = uniform(rng, m.amp_min_uv, m.amp_max_uv);
  const double am_rate = uniform(rng, 0.02, 0.08);
  const double am_phase = uniform(rng, 0.0, kTwoPi);
  const double phase0 = uniform(rng, 0.0, kTwoPi);
  // Random nonempty electrode subset with distinct gains, so bipolar pairs
  // never cancel exactly.
  const std::size_t ne = rec.channels.size();
  std::vector<double> gain(ne, 0.0);
  while (std::all_of(gain.begin(), gain.end(), [](double g) { return g == 0.0; })) {
    for (auto& g : gain) g = uniform(rng, 0.0, 1.0) < 0.6 ? uniform(rng, 0.4, 1.0) : 0.0;
  }
  const double dur = ev.duration();
  const double taper = std::min(5.0, dur / 4.0);
  const auto i0 = static_cast<std::size_t>(std::llround(ev.onset_s * fs));
  const auto i1 = std::min(rec.n_samples(), static_cast<std::size_t>(std::llround(ev.offset_s * fs)));
  double phase = phase0;
  for (std::size_t i = i0; i < i1; ++i) {
    const double t = static_cast<double>(i - i0) / fs;
    const double f = m.f_start_hz + (m.f_end_hz - m.f_start_hz) * t / dur;
    phase += kTwoPi * f / fs;
    double env = 1.0;
    if (t < taper) env = 0.5 - 0.5 * std::cos(std::numbers::pi * t / taper);
    if (dur - t < taper) env = std::min(env, 0.5 - 0.5 * std::cos(std::numbers::pi * (dur - t) / taper));
    env *= 1.0 + 0.3 * std::sin(kTwoPi * am_rate * t + am_phase);
    double w = 0.0;
    for (std::size_t h = 0; h < m.harmonics.size(); ++h) w += m.harmonics[h] * std::sin(static_cast<double>(h + 1) * phase);
    const double v = amp * env * w;
    for (std::size_t c = 0; c < ne; ++c) rec.channels[c].samples[i] += gain[c] * v;
  }
}

void add_artifact(Recording& rec, const Event& ev, double amp, Rng& rng) {
  const double fs = rec.fs;
  const std::size_t c = uniform_index(rng, rec.channels.size());
  const double f = uniform(rng, 3.0, 8.0);
  const double dur = ev.duration();
  const auto i0 = static_cast<std::size_t>(std::llround(ev.onset_s * fs));
  const auto i1 = std::min(rec.n_samples(), static_cast<std::size_t>(std::llround(ev.offset_s * fs)));
  for (std::size_t i = i0; i < i1; ++i) {
    const double t = static_cast<double>(i - i0) / fs;
    const double win = std::sin(std::numbers::pi * t / dur);
    rec.channels[c].samples[i] += amp * win * std::sin(kTwoPi * f * t);
  }
}

}  // namespace

void SynthSpec::validate() const {
  if (n_neonates == 0) throw ConfigError("synth: n_neonates must be positive");
  if (duration_s < 120) throw ConfigError("synth: duration must be at least 120 s");
  if (!(fs >= 64.0) || fs != std::floor(fs)) throw ConfigError("synth: fs must be a whole number >= 64 Hz");
  if (electrodes.size() < 2) throw ConfigError("synth: need at least two electrodes");
  if (seizure_rate_per_h < 0.0 || artifact_rate_per_h < 0.0) throw ConfigError("synth: rates must be >= 0");
  if (seizure_min_s < 30.0 || seizure_max_s < seizure_min_s) {
    throw ConfigError("synth: seizure durations must satisfy 30 <= min <= max");
  }
  if (seizure_rate_per_h > 0.0 && seizure_max_s + 2.0 * kEdgeS > static_cast<double>(duration_s)) {
    throw ConfigError("synth: longest seizure does not fit in the recording");
  }
  const double busy = seizure_rate_per_h / 3600.0 * (mean_log_uniform(seizure_min_s, seizure_max_s) + kSeizureGapS);
  if (busy >= 0.5) {
    throw ConfigError("synth: seizure rate " + std::to_string(seizure_rate_per_h) +
                      "/h implies overlapping seizures at these durations");
  }
  if (!(background_rms_uv > 0.0)) throw ConfigError("synth: background RMS must be positive");
  if (morphology.harmonics.empty() || !(morphology.f_start_hz > 0.0) || !(morphology.f_end_hz > 0.0) ||
      morphology.amp_min_uv > morphology.amp_max_uv || morphology.amp_min_uv < 0.0) {
    throw ConfigError("synth: invalid seizure morphology");
  }
  if (artifact_amp_min_uv > artifact_amp_max_uv || artifact_amp_min_uv <= 0.0) {
    throw ConfigError("synth: invalid artifact amplitude range");
  }
  if (expert_jitter_s < 0.0 || expert_miss_prob < 0.0 || expert_miss_prob > 1.0) {
    throw ConfigError("synth: invalid expert model");
  }
}

std::vector<double> pink_noise(std::size_t n, double rms, std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  std::normal_distribution<double> nd(0.0, 1.0);
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  std::vector<double> x(n);
  // Burn in the slow pole before keeping samples.
  for (int i = 0; i < 4096; ++i) {
    const double w = nd(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
  }
  double mean = 0.0;
  for (auto& v : x) {
    const double w = nd(rng);
    b0 = 0.99765 * b0 + w * 0.0990460;
    b1 = 0.96300 * b1 + w * 0.2965164;
    b2 = 0.57000 * b2 + w * 1.0526913;
    v = b0 + b1 + b2 + w * 0.1848;
    mean += v;
  }
  mean /= static_cast<double>(std::max<std::size_t>(n, 1));
  double ss = 0.0;
  for (auto& v : x) {
    v -= mean;
    ss += v * v;
  }
  const double scale = ss > 0.0 ? rms / std::sqrt(ss / static_cast<double>(n)) : 0.0;
  for (auto& v : x) v *= scale;
  return x;
}

SynthNeonate generate_neonate(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  Rng rng = substream(spec.seed, index);
  SynthNeonate out;
  Recording& rec = out.recording;
  rec.id = neonate_id(spec, index);
  rec.fs = spec.fs;
  const auto n = static_cast<std::size_t>(spec.duration_s * static_cast<std::size_t>(spec.fs));
  const double d = static_cast<double>(spec.duration_s);

  for (std::size_t c = 0; c < spec.electrodes.size(); ++c) {
    rec.channels.push_back({spec.electrodes[c], pink_noise(n, spec.background_rms_uv, rng())});
  }
  if (spec.burst_suppression) {
    const auto& bs = *spec.burst_suppression;
    const double period = bs.burst_s + bs.suppression_s;
    const double offset = uniform(rng, 0.0, period);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = std::fmod(static_cast<double>(i) / spec.fs + offset, period);
      const double g = t < bs.burst_s ? bs.burst_gain : bs.suppression_gain;
      for (auto& ch : rec.channels) ch.samples[i] *= g;
    }
  }

  // Seizures: Poisson count, log-uniform whole-second durations, no overlap.
  std::poisson_distribution<int> n_sz(spec.seizure_rate_per_h * d / 3600.0);
  const int count = n_sz(rng);
  for (int s = 0; s < count; ++s) {
    const double dur = std::round(std::exp(uniform(rng, std::log(spec.seizure_min_s), std::log(spec.seizure_max_s))));
    bool placed = false;
    for (std::size_t t = 0; t < kMaxPlacementTries && !placed; ++t) {
      const double on = std::floor(uniform(rng, kEdgeS, d - kEdgeS - dur));
      if (clear_of(out.truth, on, on + dur, kSeizureGapS)) {
        out.truth.push_back({on, on + dur});
        placed = true;
      }
    }
    // A full recording keeps the seizures already placed.
    if (!placed) {
      log::warn("synth: " + rec.id + ": placed " + std::to_string(out.truth.size()) + " of " + std::to_string(count) +
                " seizures, the recording is full");
      break;
    }
  }
  std::sort(out.truth.begin(), out.truth.end(), [](const Event& a, const Event& b) { return a.onset_s < b.onset_s; });
  for (const auto& ev : out.truth) add_seizure(rec, ev, spec.morphology, rng);

  // Artifacts stay clear of seizures so their false detections are attributable.
  std::poisson_distribution<int> n_art(spec.artifact_rate_per_h * d / 3600.0);
  const int n_a = n_art(rng);
  for (int a = 0; a < n_a; ++a) {
    const double dur = uniform(rng, 1.0, 2.0);
    for (std::size_t t = 0; t < kMaxPlacementTries; ++t) {
      const double on = uniform(rng, kEdgeS, d - kEdgeS - dur);
      if (clear_of(out.truth, on, on + dur, 30.0) && clear_of(out.artifacts, on, on + dur, 5.0)) {
        out.artifacts.push_back({on, on + dur});
        break;
      }
    }
  }
  std::sort(out.artifacts.begin(), out.artifacts.end(),
            [](const Event& a, const Event& b) { return a.onset_s < b.onset_s; });
  for (const auto& ev : out.artifacts) {
    add_artifact(rec, ev, uniform(rng, spec.artifact_amp_min_uv, spec.artifact_amp_max_uv), rng);
  }

  out.expert1 = jitter(out.truth, rng, spec);
  out.expert2 = jitter(out.truth, rng, spec);
  return out;
}

std::vector<SynthNeonate> generate(const SynthSpec& spec) {
  std::vector<SynthNeonate> out;
  for (std::size_t i = 0; i < spec.n_neonates; ++i) out.push_back(generate_neonate(spec, spec.first_index + i));
  return out;
}

std::vector<std::filesystem::path> write_neonate(const SynthNeonate& n, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string& id = n.recording.id;
  std::vector<std::filesystem::path> paths{dir / (id + ".edf"), dir / (id + ".ann.truth.csv"),
                                           dir / (id + ".ann.e1.csv"), dir / (id + ".ann.e2.csv"),
                                           dir / (id + ".artifacts.csv")};
  write_edf(n.recording, paths[0]);
  write_events_csv(paths[1], n.truth);
  write_events_csv(paths[2], n.expert1);
  write_events_csv(paths[3], n.expert2);
  write_events_csv(paths[4], n.artifacts);
  return paths;
}

}  // namespace neoseize
