#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neoseize/signal_io.hpp"

namespace neoseize {

struct BurstSuppression {
  double burst_s = 3.0;
  double suppression_s = 8.0;
  double burst_gain = 3.0;
  double suppression_gain = 0.1;
};

// Seizure waveform: a chirp from f_start to f_end Hz with harmonics, under a
// tapered and slowly modulated envelope.
struct SeizureMorphology {
  double f_start_hz = 2.0;
  double f_end_hz = 1.0;
  std::vector<double> harmonics{1.0, 0.5, 0.25};  // amplitude of harmonic n+1
  double amp_min_uv = 50.0;
  double amp_max_uv = 150.0;
};

struct SynthSpec {
  std::size_t n_neonates = 1;
  std::size_t first_index = 0;  // ids are <prefix><index>, zero padded
  std::string id_prefix = "syn";
  std::size_t duration_s = 3600;
  double fs = 256.0;
  std::vector<std::string> electrodes{"F3", "F4", "P3", "P4"};
  double seizure_rate_per_h = 2.0;
  double seizure_min_s = 30.0;
  double seizure_max_s = 300.0;  // durations are log-uniform on [min, max]
  SeizureMorphology morphology;
  double background_rms_uv = 25.0;
  std::optional<BurstSuppression> burst_suppression;
  double artifact_rate_per_h = 0.0;
  double artifact_amp_min_uv = 2000.0;
  double artifact_amp_max_uv = 4000.0;
  double expert_jitter_s = 5.0;
  double expert_miss_prob = 0.05;  // applies to events shorter than 60 s
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
};

struct SynthNeonate {
  Recording recording;  // electrode channels, not yet a montage
  std::vector<Event> truth;
  std::vector<Event> expert1;
  std::vector<Event> expert2;
  std::vector<Event> artifacts;
};

// One neonate; `index` selects its seed substream.
SynthNeonate generate_neonate(const SynthSpec& spec, std::size_t index);
std::vector<SynthNeonate> generate(const SynthSpec& spec);

// <id>.edf, <id>.ann.truth.csv, <id>.ann.e1.csv, <id>.ann.e2.csv and
// <id>.artifacts.csv. Returns the written paths.
std::vector<std::filesystem::path> write_neonate(const SynthNeonate& n, const std::filesystem::path& dir);

// Kellet pink-noise filter over unit Gaussian noise, scaled to `rms`.
std::vector<double> pink_noise(std::size_t n, double rms, std::uint64_t seed);

}  // namespace neoseize
