#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace neoseize {

using Mask = std::vector<std::uint8_t>;

struct Channel {
  std::string label;
  std::vector<double> samples;  // microvolts
  std::string unit = "uV";
};

// Multichannel EEG sampled at a common rate.
struct Recording {
  std::string id;
  std::vector<Channel> channels;
  double fs = 0.0;
  double start_time = 0.0;  // seconds since the Unix epoch
  // Per-channel, per-second "bad electrode" flags, aligned with `channels`.
  std::optional<std::vector<Mask>> bad_electrode;

  std::size_t n_samples() const { return channels.empty() ? 0 : channels.front().samples.size(); }
  double duration_s() const { return fs > 0.0 ? static_cast<double>(n_samples()) / fs : 0.0; }
  // Whole seconds covered by the recording (the 1 Hz annotation grid length).
  std::size_t duration_seconds() const;

  const Channel* find(const std::string& label) const;

  // Throws FormatError when the channel-length, rate or label invariants fail.
  void validate() const;
};

struct MontagePair {
  std::string anode;
  std::string cathode;

  std::string label() const { return anode + "-" + cathode; }
};

struct Montage {
  std::vector<MontagePair> pairs;

  // "F3-P3,F4-P4,P3-P4". Throws ConfigError on malformed or repeated pairs.
  static Montage parse(const std::string& text);
  static Montage neonatal_default() { return parse("F3-P3,F4-P4,P3-P4"); }

  std::string to_string() const;
};

// Half-open interval [onset_s, offset_s) in seconds from recording start.
struct Event {
  double onset_s = 0.0;
  double offset_s = 0.0;

  double duration() const { return offset_s - onset_s; }
  friend bool operator==(const Event&, const Event&) = default;
};

// Binary seizure labels at 1 Hz for one rater.
struct AnnotationMask {
  std::string rater;
  Mask mask;

  std::size_t duration_s() const { return mask.size(); }
  std::size_t positives() const;
};

// EDF (1992) reader. Physical values are reconstructed from the per-channel
// digital/physical ranges; "EDF Annotations" signals are skipped.
Recording read_edf(const std::filesystem::path& path);
Recording parse_edf(std::span<const char> bytes, const std::string& id);

// Writes 1 s data records; requires an integer sampling rate and an integral
// number of seconds.
void write_edf(const Recording& rec, const std::filesystem::path& path);

Recording apply_montage(const Recording& rec, const Montage& montage);

// `onset_s,offset_s` lines; blank lines and `#` comments ignored, an optional
// non-numeric header line is accepted.
std::vector<Event> read_events_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, std::span<const Event> events);

// True for every second [s, s+1) that intersects an event; events are clipped
// to [0, duration_s] with a warning.
AnnotationMask mask_from_events(std::span<const Event> events, std::size_t duration_s,
                                std::string rater = {});
AnnotationMask load_annotations(const std::filesystem::path& path, std::size_t duration_s,
                                std::string rater = {});

// Per-second unanimity across raters.
AnnotationMask consensus(std::span<const AnnotationMask> masks);

// `second,channel_label` rows flag a channel as bad for that second. Unknown
// labels are a FormatError.
void load_bad_electrodes(Recording& rec, const std::filesystem::path& path);

// `second,label` per-second mask files.
void write_mask_csv(const std::filesystem::path& path, const AnnotationMask& mask);
AnnotationMask read_mask_csv(const std::filesystem::path& path, std::string rater = {});

}  // namespace neoseize
