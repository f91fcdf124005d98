#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neoseize/model.hpp"
#include "neoseize/signal_io.hpp"

namespace neoseize {

// Montaged, filtered recording with its epoch grid and features.
struct PreparedRecording {
  std::string id;
  EpochGrid grid;
  FeatureMatrix features;
  std::vector<std::uint8_t> bad;  // per (channel, epoch)
  std::size_t duration_s = 0;
};

// Uses the montage channels directly when the recording already holds every
// pair label; otherwise derives them from electrodes (ConfigError when one is
// missing).
PreparedRecording prepare(const Recording& raw, const Montage& montage, double hop_s = kDefaultHopSeconds);

struct Detection {
  std::string id;
  EpochGrid grid;
  EpochStats stats;                    // raw SVM margins per (channel, epoch)
  std::vector<std::uint8_t> outliers;  // per (channel, epoch)
  std::vector<double> second_stat;     // thresholded to give the pre-collar mask
  AnnotationMask mask;
};

Detection detect(const SdaModel& model, const PreparedRecording& rec);
Detection detect(const SdaModel& model, const Recording& raw);

// Files for one neonate in a corpus directory: <id>.edf, <id>.ann.<rater>.csv
// and an optional <id>.bad.csv.
struct CorpusEntry {
  std::string id;
  std::filesystem::path edf;
  std::map<std::string, std::filesystem::path> annotations;
  std::optional<std::filesystem::path> bad;
};

// Entries sorted by id. Throws ValidationError when the directory holds no EDF.
std::vector<CorpusEntry> scan_corpus(const std::filesystem::path& dir);

// Raters used for training labels: every rater other than "truth" and "sda";
// "truth" alone when no other rater exists.
std::vector<std::string> expert_raters(const CorpusEntry& entry);

Recording load_recording(const CorpusEntry& entry);
LabeledNeonate load_labeled(const CorpusEntry& entry, const Montage& montage, double hop_s = kDefaultHopSeconds);
LabeledNeonate to_labeled(const PreparedRecording& rec, Mask consensus);

}  // namespace neoseize
