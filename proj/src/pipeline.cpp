#include "neoseize/pipeline.hpp"

#include <algorithm>

#include "neoseize/error.hpp"
#include "neoseize/features.hpp"
#include "neoseize/preprocess.hpp"

namespace neoseize {
namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Recording select_montage(const Recording& raw, const Montage& montage) {
  Recording out;
  out.id = raw.id;
  out.fs = raw.fs;
  out.start_time = raw.start_time;
  if (raw.bad_electrode) out.bad_electrode.emplace();
  for (const auto& pair : montage.pairs) {
    for (std::size_t i = 0; i < raw.channels.size(); ++i) {
      if (raw.channels[i].label == pair.label()) {
        out.channels.push_back(raw.channels[i]);
        if (raw.bad_electrode) out.bad_electrode->push_back((*raw.bad_electrode)[i]);
      }
    }
  }
  return out;
}

}  // namespace

PreparedRecording prepare(const Recording& raw, const Montage& montage, double hop_s) {
  raw.validate();
  if (montage.pairs.empty()) throw ConfigError("montage has no channel pairs");
  const bool bipolar = std::all_of(montage.pairs.begin(), montage.pairs.end(),
                                   [&](const MontagePair& p) { return raw.find(p.label()) != nullptr; });
  const Recording mont = bipolar ? select_montage(raw, montage) : apply_montage(raw, montage);
  const Recording pre = preprocess(mont);
  PreparedRecording out;
  out.id = raw.id;
  out.duration_s = raw.duration_seconds();
  out.grid = make_grid(static_cast<double>(out.duration_s), hop_s);
  if (out.grid.n_epochs == 0) {
    throw ValidationError("recording '" + raw.id + "' is shorter than one " + std::to_string(kEpochSeconds) +
                          " s epoch");
  }
  out.features = compute_features(pre, out.grid);
  out.bad = bad_epochs(mont, out.grid);
  return out;
}

Detection detect(const SdaModel& model, const PreparedRecording& rec) {
  if (std::abs(rec.grid.hop - model.hop_s) > 1e-9) {
    throw ValidationError("recording was prepared with a " + std::to_string(rec.grid.hop) + " s hop, the model uses " +
                          std::to_string(model.hop_s) + " s");
  }
  Detection d;
  d.id = rec.id;
  d.grid = rec.grid;
  d.stats = decision_statistic(model, rec.features);
  d.outliers = outlier_flags(model, rec.features);
  std::vector<std::uint8_t> excluded = d.outliers;
  for (std::size_t i = 0; i < rec.bad.size() && i < excluded.size(); ++i) excluded[i] |= rec.bad[i];
  d.second_stat = per_second_statistic(smooth_channel_max(d.stats, excluded, model.post.ma_len), rec.grid,
                                       rec.duration_s);
  d.mask = postprocess(d.stats, d.outliers, rec.bad, model.post, rec.grid, rec.duration_s);
  return d;
}

Detection detect(const SdaModel& model, const Recording& raw) {
  const Montage montage = model.montage.empty() ? Montage::neonatal_default() : Montage::parse(model.montage);
  return detect(model, prepare(raw, montage, model.hop_s));
}

std::vector<CorpusEntry> scan_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ValidationError("corpus directory '" + dir.string() + "' not found");
  std::map<std::string, CorpusEntry> by_id;
  std::vector<std::pair<std::string, std::filesystem::path>> others;
  for (const auto& de : std::filesystem::directory_iterator(dir)) {
    if (!de.is_regular_file()) continue;
    const std::string name = de.path().filename().string();
    if (ends_with(name, ".edf")) {
      const std::string id = name.substr(0, name.size() - 4);
      by_id[id].id = id;
      by_id[id].edf = de.path();
    } else {
      others.emplace_back(name, de.path());
    }
  }
  if (by_id.empty()) throw ValidationError("no .edf recordings in '" + dir.string() + "'");
  for (const auto& [name, path] : others) {
    for (auto& [id, e] : by_id) {
      const std::string ann = id + ".ann.";
      if (name.rfind(ann, 0) == 0 && ends_with(name, ".csv")) {
        e.annotations[name.substr(ann.size(), name.size() - ann.size() - 4)] = path;
      } else if (name == id + ".bad.csv") {
        e.bad = path;
      }
    }
  }
  std::vector<CorpusEntry> out;
  for (auto& [id, e] : by_id) out.push_back(std::move(e));
  return out;
}

std::vector<std::string> expert_raters(const CorpusEntry& entry) {
  std::vector<std::string> out;
  for (const auto& [rater, path] : entry.annotations) {
    if (rater != "truth" && rater != "sda") out.push_back(rater);
  }
  if (out.empty() && entry.annotations.count("truth")) out.push_back("truth");
  return out;
}

Recording load_recording(const CorpusEntry& entry) {
  Recording rec = read_edf(entry.edf);
  rec.id = entry.id;
  if (entry.bad) load_bad_electrodes(rec, *entry.bad);
  return rec;
}

LabeledNeonate to_labeled(const PreparedRecording& rec, Mask consensus) {
  if (consensus.size() != rec.duration_s) throw ValidationError("labels for '" + rec.id + "' do not match its duration");
  return {rec.id, rec.features, rec.grid, std::move(consensus), rec.bad};
}

LabeledNeonate load_labeled(const CorpusEntry& entry, const Montage& montage, double hop_s) {
  const auto raters = expert_raters(entry);
  if (raters.empty()) throw ValidationError("neonate '" + entry.id + "' has no annotation files");
  const PreparedRecording prep = prepare(load_recording(entry), montage, hop_s);
  std::vector<AnnotationMask> masks;
  for (const auto& r : raters) masks.push_back(load_annotations(entry.annotations.at(r), prep.duration_s, r));
  return to_labeled(prep, masks.size() == 1 ? masks.front().mask : consensus(masks).mask);
}

}  // namespace neoseize
