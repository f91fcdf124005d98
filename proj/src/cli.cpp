#include "neoseize/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "neoseize/clinical.hpp"
#include "neoseize/error.hpp"
#include "neoseize/evaluation.hpp"
#include "neoseize/pipeline.hpp"

namespace neoseize {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------- config

// Reads keys from one JSON object and rejects the ones nobody asked for.
class ConfigObject {
 public:
  ConfigObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + name() + "' must be an object");
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, std::size_t& out) {
    if (const json* v = find(key)) out = as_count(*v, key);
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) fail(key, "an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of non-negative integers");
      out.clear();
      for (const auto& x : *v) out.push_back(as_count(x, key));
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "an array of strings");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_string()) fail(key, "an array of strings");
        out.push_back(x.get<std::string>());
      }
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + key_path(it.key()) + "'");
    }
  }

 private:
  std::string name() const { return path_.empty() ? "<root>" : path_; }
  [[noreturn]] void fail(const std::string& key, const char* what) const {
    throw ConfigError("config: '" + key_path(key) + "' must be " + what);
  }
  std::size_t as_count(const json& v, const std::string& key) const {
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::size_t>(v.get<std::int64_t>());
    fail(key, "a non-negative integer");
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_post(ConfigObject& o, PostprocParams& p) {
  o.get("ma_len", p.ma_len);
  o.get("threshold", p.threshold);
  o.get("collar_s", p.collar_s);
  o.get("min_dur_s", p.min_dur_s);
  o.finish();
}

json post_json(const PostprocParams& p) {
  return {{"ma_len", p.ma_len}, {"threshold", p.threshold}, {"collar_s", p.collar_s}, {"min_dur_s", p.min_dur_s}};
}

json interval_json(const Interval& i) {
  return {{"point", i.point}, {"median", i.median}, {"lo", i.lo}, {"hi", i.hi}, {"redraws", i.redraws}};
}

json summary_json(const MetricSummary& s) {
  return {{"median", s.median}, {"q1", s.q1}, {"q3", s.q3}, {"n", s.n}};
}

// ---------------------------------------------------------------- files

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num(double v) { return fmt("%.17g", v); }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw RuntimeError("failed writing '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_stat_csv(const fs::path& path, std::span<const double> stat) {
  std::string s = "second,statistic\n";
  for (std::size_t i = 0; i < stat.size(); ++i) s += std::to_string(i) + "," + num(stat[i]) + "\n";
  write_file(path, s);
}

std::vector<double> read_stat_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<double> out;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'second,statistic'");
    char* end = nullptr;
    const double v = std::strtod(line.c_str() + comma + 1, &end);
    if (end == line.c_str() + comma + 1) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    out.push_back(v);
  }
  return out;
}

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& config, fs::path out_dir)
      : command_(std::move(command)), config_(json::parse(config_to_json(config))), out_(std::move(out_dir)),
        seed_(config.seed) {}

  void input(const fs::path& p) { inputs_[p.generic_string()] = sha256_file(p); }

  // Writes a file and records it; `rel` is relative to the output directory
  // unless absolute.
  fs::path output(const fs::path& rel, const std::string& text) {
    const fs::path p = rel.is_absolute() ? rel : out_ / rel;
    write_file(p, text);
    return record(rel);
  }
  fs::path path(const fs::path& rel) const { return rel.is_absolute() ? rel : out_ / rel; }
  fs::path record(const fs::path& rel) {
    const fs::path p = path(rel);
    outputs_[rel.generic_string()] = sha256_file(p);
    return p;
  }

  void write() const {
    json j;
    j["tool"] = "neoseize";
    j["version"] = kToolVersion;
    j["feature_version"] = std::string(kFeatureVersion);
    j["command"] = command_;
    j["seed"] = seed_;
    j["config"] = config_;
    j["inputs"] = json::array();
    for (const auto& [p, h] : inputs_) j["inputs"].push_back({{"path", p}, {"sha256", h}});
    j["outputs"] = json::array();
    for (const auto& [p, h] : outputs_) j["outputs"].push_back({{"path", p}, {"sha256", h}});
    write_file(out_ / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_;
  json config_;
  fs::path out_;
  std::uint64_t seed_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

// ---------------------------------------------------------------- reports

json report_json(const MetricsReport& r) {
  json j;
  j["n_total"] = r.n_total;
  j["n_seizure"] = r.n_seizure;
  j["bootstrap"] = {{"iters", r.iters}, {"seed", r.seed}};
  j["auc"] = summary_json(r.auc);
  j["sensitivity"] = summary_json(r.sensitivity);
  j["specificity"] = summary_json(r.specificity);
  j["c_auc"] = interval_json(r.c_auc);
  j["c_sdr"] = interval_json(r.c_sdr);
  j["c_fd_per_h"] = interval_json(r.c_fd_per_h);
  j["c_kappa"] = interval_json(r.c_kappa);
  j["per_neonate"] = json::array();
  for (const auto& n : r.per_neonate) {
    json p;
    p["id"] = n.id;
    p["duration_h"] = n.duration_h;
    p["auc"] = n.auc ? json(*n.auc) : json(nullptr);
    p["sensitivity"] = n.sensitivity;
    p["specificity"] = n.specificity;
    p["kappa"] = n.kappa;
    p["tp"] = n.counts.tp;
    p["tn"] = n.counts.tn;
    p["fp"] = n.counts.fp;
    p["fn"] = n.counts.fn;
    p["truth_events"] = n.events.n_truth;
    p["detected_events"] = n.events.n_detected;
    p["predicted_events"] = n.events.n_pred;
    p["false_detections"] = n.events.false_detections;
    p["sdr"] = n.events.sdr;
    p["fd_per_h"] = n.events.fd_per_h;
    j["per_neonate"].push_back(std::move(p));
  }
  return j;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

// Undefined measures print as "-".
std::string num(const char* f, double v) { return std::isnan(v) ? "-" : fmt(f, v); }

std::string report_text(const MetricsReport& r, const std::string& title) {
  std::ostringstream o;
  o << title << "\n";
  o << "neonates: " << r.n_total << " (with reference seizures: " << r.n_seizure << "), bootstrap iterations: "
    << r.iters << ", seed: " << r.seed << "\n\n";
  o << pad("measure", 30) << pad("value", 10) << "interval\n";
  auto summ = [&](const char* name, const MetricSummary& s) {
    o << pad(name, 30) << pad(num("%.3f", s.median), 10) << "IQR " << num("%.3f", s.q1) << "-" << num("%.3f", s.q3)
      << " (n=" << s.n << ")\n";
  };
  auto ci = [&](const char* name, const Interval& i) {
    o << pad(name, 30) << pad(num("%.3f", i.point), 10) << "95% CI " << num("%.3f", i.lo) << "-" << num("%.3f", i.hi)
      << "\n";
  };
  summ("AUC (median)", r.auc);
  summ("Sensitivity (median)", r.sensitivity);
  summ("Specificity (median)", r.specificity);
  ci("cAUC", r.c_auc);
  ci("cSDR", r.c_sdr);
  ci("cFD/h", r.c_fd_per_h);
  ci("cKappa", r.c_kappa);
  o << "\n"
    << pad("id", 16) << pad("hours", 8) << pad("AUC", 8) << pad("sens", 8) << pad("spec", 8) << pad("kappa", 8)
    << pad("events", 8) << pad("SDR", 8) << "FD/h\n";
  for (const auto& n : r.per_neonate) {
    o << pad(n.id, 16) << pad(fmt("%.2f", n.duration_h), 8) << pad(n.auc ? fmt("%.3f", *n.auc) : "-", 8)
      << pad(num("%.3f", n.sensitivity), 8) << pad(num("%.3f", n.specificity), 8) << pad(num("%.3f", n.kappa), 8)
      << pad(std::to_string(n.events.n_truth), 8) << pad(num("%.3f", n.events.sdr), 8)
      << fmt("%.2f", n.events.fd_per_h) << "\n";
  }
  return o.str();
}

json delta_json(std::span<const DeltaKappaRow> rows) {
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"expert", r.expert},
                 {"kappa_human", r.kappa_human},
                 {"kappa_sda", r.kappa_sda},
                 {"delta", interval_json(r.delta)},
                 {"verdict", r.verdict}});
  }
  return j;
}

std::string delta_text(std::span<const DeltaKappaRow> rows) {
  std::ostringstream o;
  o << pad("pairing", 16) << pad("kappa E1-E2", 14) << pad("kappa SDA-E", 14) << pad("delta", 10) << pad("95% CI", 20)
    << "verdict\n";
  for (const auto& r : rows) {
    o << pad("SDA vs " + r.expert, 16) << pad(fmt("%.3f", r.kappa_human), 14) << pad(fmt("%.3f", r.kappa_sda), 14)
      << pad(fmt("%.3f", r.delta.point), 10) << pad(fmt("%.3f", r.delta.lo) + " to " + fmt("%.3f", r.delta.hi), 20)
      << r.verdict << "\n";
  }
  return o.str();
}

json agreement_json(const Agreement& a) {
  return {{"tp", a.counts.tp},           {"tn", a.counts.tn},           {"fp", a.counts.fp},
          {"fn", a.counts.fn},           {"sensitivity", a.sensitivity}, {"specificity", a.specificity},
          {"accuracy", a.accuracy}};
}

// ---------------------------------------------------------------- inputs

using Annotations = std::map<std::string, std::map<std::string, fs::path>>;

// <id>.ann.<rater>.csv files of a directory.
Annotations scan_annotations(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("directory '" + dir.string() + "' not found");
  Annotations out;
  for (const auto& de : fs::directory_iterator(dir)) {
    if (!de.is_regular_file()) continue;
    const std::string name = de.path().filename().string();
    const auto pos = name.find(".ann.");
    if (pos == std::string::npos || name.size() < 4 || name.substr(name.size() - 4) != ".csv") continue;
    const std::string rater = name.substr(pos + 5, name.size() - 4 - pos - 5);
    if (!rater.empty()) out[name.substr(0, pos)][rater] = de.path();
  }
  return out;
}

// <id>.mask.csv files of a directory, sorted by id.
std::map<std::string, fs::path> scan_masks(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("directory '" + dir.string() + "' not found");
  std::map<std::string, fs::path> out;
  for (const auto& de : fs::directory_iterator(dir)) {
    const std::string name = de.path().filename().string();
    if (de.is_regular_file() && name.size() > 9 && name.substr(name.size() - 9) == ".mask.csv") {
      out[name.substr(0, name.size() - 9)] = de.path();
    }
  }
  if (out.empty()) throw ValidationError("no <id>.mask.csv files in '" + dir.string() + "'");
  return out;
}

void check_orphans(const std::set<std::string>& a, const std::set<std::string>& b, const std::string& a_name,
                   const std::string& b_name) {
  std::vector<std::string> only_a, only_b;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(only_a));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(only_b));
  if (only_a.empty() && only_b.empty()) return;
  std::string msg = "neonate ids do not match:";
  auto list = [&](const std::vector<std::string>& v, const std::string& where) {
    if (v.empty()) return;
    msg += " only in " + where + ":";
    for (const auto& id : v) msg += " " + id;
    msg += ";";
  };
  list(only_a, a_name);
  list(only_b, b_name);
  msg.pop_back();
  throw ValidationError(msg);
}

// Reference mask for one neonate: a named rater, or the consensus of the experts.
AnnotationMask reference_mask(const std::string& id, const std::map<std::string, fs::path>& raters,
                              const std::string& reference, std::size_t duration, Manifest& manifest) {
  std::vector<std::string> names;
  if (reference == "consensus") {
    CorpusEntry e;
    e.id = id;
    e.annotations = raters;
    names = expert_raters(e);
  } else {
    names = {reference};
  }
  if (names.empty()) throw ValidationError("neonate '" + id + "' has no reference annotations");
  std::vector<AnnotationMask> masks;
  for (const auto& n : names) {
    const auto it = raters.find(n);
    if (it == raters.end()) throw ValidationError("neonate '" + id + "' has no annotations from rater '" + n + "'");
    manifest.input(it->second);
    masks.push_back(load_annotations(it->second, duration, n));
  }
  AnnotationMask out = masks.size() == 1 ? masks.front() : consensus(masks);
  out.rater = reference;
  return out;
}

std::vector<LabeledNeonate> load_corpus(const fs::path& dir, const RunConfig& cfg, Manifest& manifest) {
  const Montage montage = Montage::parse(cfg.montage);
  std::vector<LabeledNeonate> out;
  for (const auto& e : scan_corpus(dir)) {
    manifest.input(e.edf);
    for (const auto& r : expert_raters(e)) manifest.input(e.annotations.at(r));
    if (e.bad) manifest.input(*e.bad);
    out.push_back(load_labeled(e, montage, cfg.hop_s));
  }
  return out;
}

void write_hyper(Manifest& m, const HyperResult& h) {
  std::string s = "c,gamma,kappa\n";
  for (const auto& row : h.table) s += num(row[0]) + "," + num(row[1]) + "," + num(row[2]) + "\n";
  m.output("hyperparameters.csv", s);
}

void write_training_outputs(Manifest& man, const TrainResult& res, const RunConfig& cfg, const std::string& model,
                            std::size_t n_base) {
  if (model.empty()) {
    res.model.validate();
    man.output("model.json", model_to_json(res.model));
  } else {
    save_model(res.model, model);
    man.record(fs::absolute(model));
  }
  write_hyper(man, res.hyper);
  json cal;
  cal["k"] = res.calibration.k;
  cal["quantile"] = res.calibration.quantile;
  cal["amp_max"] = res.calibration.amp_max;
  cal["post"] = post_json(res.calibration.post);
  cal["kappa"] = res.calibration.kappa;
  cal["evaluated"] = res.calibration.evaluated;
  cal["c"] = res.hyper.c;
  cal["gamma"] = res.hyper.gamma;
  json audit = json::array();
  for (const auto& a : res.cv.audit) {
    audit.push_back({{"fold", a.fold}, {"test", a.test_ids}, {"train", a.train_ids}, {"train_rows", a.train_rows}});
  }
  cal["folds"] = audit;
  cal["training_rows"] = res.set.size();
  cal["training_seizure_rows"] = res.set.n_seizure();
  man.output("calibration.json", cal.dump(2) + "\n");
  for (std::size_t f = 0; f < res.cv.fold_models.size(); ++f) {
    char name[32];
    std::snprintf(name, sizeof name, "folds/fold_%02zu.json", res.cv.audit[f].fold);
    man.output(name, model_to_json(res.cv.fold_models[f]));
  }
  // Out-of-fold masks and statistics, in the layout `evaluate` and `burden` read.
  for (const auto& r : res.cv_results) {
    const fs::path mask = fs::path("cv") / (r.id + ".mask.csv");
    fs::create_directories(man.path(mask).parent_path());
    write_mask_csv(man.path(mask), r.pred);
    man.record(mask);
    const fs::path stat = fs::path("cv") / (r.id + ".stat.csv");
    write_stat_csv(man.path(stat), r.stat);
    man.record(stat);
  }
  const std::span<const NeonateResult> all(res.cv_results);
  const std::string title =
      "Cross-validated performance (" + std::to_string(res.plan.n_folds) + "-fold, by neonate)";
  const MetricsReport rep = evaluate(all, cfg.bootstrap_iters, cfg.seed);
  man.output("cv_report.json", report_json(rep).dump(2) + "\n");
  man.output("cv_report.txt", report_text(rep, title));
  std::cout << report_text(rep, title);
  if (n_base < res.cv_results.size()) {
    const MetricsReport base = evaluate(all.first(n_base), cfg.bootstrap_iters, cfg.seed);
    man.output("cv_report_base.json", report_json(base).dump(2) + "\n");
    man.output("cv_report_base.txt", report_text(base, "Cross-validated performance on the original corpus"));
  }
}

}  // namespace

// ---------------------------------------------------------------- config API

void RunConfig::finalize() {
  Montage::parse(montage);
  EpochGrid g;
  g.hop = hop_s;
  g.validate();
  if (bootstrap_iters == 0) throw ConfigError("config: 'bootstrap_iters' must be positive");
  train.seed = seed;
  train.montage = montage;
  train.hop_s = hop_s;
  synth.seed = seed;
  train.validate();
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  ConfigObject root(j, "");
  if (const json* v = root.find("seed")) {
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      throw ConfigError("config: 'seed' must be a non-negative integer");
    }
    c.seed = v->get<std::uint64_t>();
  }
  root.get("montage", c.montage);
  root.get("hop_s", c.hop_s);
  root.get("bootstrap_iters", c.bootstrap_iters);
  if (const json* t = root.find("train")) {
    ConfigObject o(*t, "train");
    std::string kernel = to_string(c.train.kernel);
    o.get("kernel", kernel);
    c.train.kernel = kernel_from_string(kernel);
    o.get("C", c.train.hyper.c);
    o.get("gamma", c.train.hyper.gamma);
    o.get("inner_folds", c.train.hyper.inner_folds);
    o.get("folds", c.train.n_folds);
    o.get("balance_ratio", c.train.balance.ratio);
    o.get("max_rows", c.train.balance.max_rows);
    o.get("reference_rows", c.train.reference_rows);
    o.get("smo_tolerance", c.train.smo.tolerance);
    o.get("max_iterations", c.train.smo.max_iterations);
    if (const json* p = o.find("search_post")) {
      ConfigObject po(*p, "train.search_post");
      read_post(po, c.train.search_post);
    }
    o.finish();
  }
  if (const json* t = root.find("calibration")) {
    ConfigObject o(*t, "calibration");
    auto& g = c.train.calibration;
    o.get("k", g.k);
    o.get("quantile", g.quantile);
    o.get("amp_max", g.amp_max);
    o.get("ma_len", g.ma_len);
    o.get("threshold", g.threshold);
    o.get("collar_s", g.collar_s);
    o.get("min_dur_s", g.min_dur_s);
    o.finish();
  }
  if (const json* t = root.find("synth")) {
    ConfigObject o(*t, "synth");
    auto& s = c.synth;
    o.get("n_neonates", s.n_neonates);
    o.get("first_index", s.first_index);
    o.get("id_prefix", s.id_prefix);
    o.get("duration_s", s.duration_s);
    o.get("fs", s.fs);
    o.get("electrodes", s.electrodes);
    o.get("seizure_rate_per_h", s.seizure_rate_per_h);
    o.get("seizure_min_s", s.seizure_min_s);
    o.get("seizure_max_s", s.seizure_max_s);
    o.get("background_rms_uv", s.background_rms_uv);
    o.get("artifact_rate_per_h", s.artifact_rate_per_h);
    o.get("artifact_amp_min_uv", s.artifact_amp_min_uv);
    o.get("artifact_amp_max_uv", s.artifact_amp_max_uv);
    o.get("expert_jitter_s", s.expert_jitter_s);
    o.get("expert_miss_prob", s.expert_miss_prob);
    if (const json* m = o.find("morphology")) {
      ConfigObject mo(*m, "synth.morphology");
      mo.get("f_start_hz", s.morphology.f_start_hz);
      mo.get("f_end_hz", s.morphology.f_end_hz);
      mo.get("harmonics", s.morphology.harmonics);
      mo.get("amp_min_uv", s.morphology.amp_min_uv);
      mo.get("amp_max_uv", s.morphology.amp_max_uv);
      mo.finish();
    }
    if (const json* b = o.find("burst_suppression")) {
      if (b->is_null()) {
        s.burst_suppression.reset();
      } else {
        ConfigObject bo(*b, "synth.burst_suppression");
        BurstSuppression bs;
        bo.get("burst_s", bs.burst_s);
        bo.get("suppression_s", bs.suppression_s);
        bo.get("burst_gain", bs.burst_gain);
        bo.get("suppression_gain", bs.suppression_gain);
        bo.finish();
        s.burst_suppression = bs;
      }
    }
    o.finish();
  }
  root.finish();
  c.finalize();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["montage"] = c.montage;
  j["hop_s"] = c.hop_s;
  j["bootstrap_iters"] = c.bootstrap_iters;
  const auto& t = c.train;
  j["train"] = {{"kernel", to_string(t.kernel)},
                {"C", t.hyper.c},
                {"gamma", t.hyper.gamma},
                {"inner_folds", t.hyper.inner_folds},
                {"folds", t.n_folds},
                {"balance_ratio", t.balance.ratio},
                {"max_rows", t.balance.max_rows},
                {"reference_rows", t.reference_rows},
                {"smo_tolerance", t.smo.tolerance},
                {"max_iterations", t.smo.max_iterations},
                {"search_post", post_json(t.search_post)}};
  const auto& g = t.calibration;
  j["calibration"] = {{"k", g.k},           {"quantile", g.quantile},   {"amp_max", g.amp_max},
                      {"ma_len", g.ma_len}, {"threshold", g.threshold}, {"collar_s", g.collar_s},
                      {"min_dur_s", g.min_dur_s}};
  const auto& s = c.synth;
  j["synth"] = {{"n_neonates", s.n_neonates},
                {"first_index", s.first_index},
                {"id_prefix", s.id_prefix},
                {"duration_s", s.duration_s},
                {"fs", s.fs},
                {"electrodes", s.electrodes},
                {"seizure_rate_per_h", s.seizure_rate_per_h},
                {"seizure_min_s", s.seizure_min_s},
                {"seizure_max_s", s.seizure_max_s},
                {"background_rms_uv", s.background_rms_uv},
                {"artifact_rate_per_h", s.artifact_rate_per_h},
                {"artifact_amp_min_uv", s.artifact_amp_min_uv},
                {"artifact_amp_max_uv", s.artifact_amp_max_uv},
                {"expert_jitter_s", s.expert_jitter_s},
                {"expert_miss_prob", s.expert_miss_prob},
                {"morphology",
                 {{"f_start_hz", s.morphology.f_start_hz},
                  {"f_end_hz", s.morphology.f_end_hz},
                  {"harmonics", s.morphology.harmonics},
                  {"amp_min_uv", s.morphology.amp_min_uv},
                  {"amp_max_uv", s.morphology.amp_max_uv}}}};
  if (s.burst_suppression) {
    const auto& b = *s.burst_suppression;
    j["synth"]["burst_suppression"] = {{"burst_s", b.burst_s},
                                       {"suppression_s", b.suppression_s},
                                       {"burst_gain", b.burst_gain},
                                       {"suppression_gain", b.suppression_gain}};
  } else {
    j["synth"]["burst_suppression"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw RuntimeError("SHA-256 initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

// ---------------------------------------------------------------- commands

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  std::size_t iters = 0;
  CLI::Option* iters_opt = nullptr;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, bool iters) {
  sub->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  c.seed_opt = sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  if (iters) c.iters_opt = sub->add_option("--iters", c.iters, "bootstrap iterations (overrides the config)");
  sub->add_option("--out", c.out, "output directory")->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed_opt && c.seed_opt->count()) cfg.seed = c.seed;
  if (c.iters_opt && c.iters_opt->count()) cfg.bootstrap_iters = c.iters;
  cfg.finalize();
  return cfg;
}

int cmd_train(const Common& c, const std::string& data, std::string model, std::size_t folds, bool folds_set) {
  RunConfig cfg = resolve(c);
  if (folds_set) cfg.train.n_folds = folds;
  cfg.finalize();
  const fs::path out(c.out);
  fs::create_directories(out);
  Manifest man("train", cfg, out);
  if (!c.config.empty()) man.input(c.config);
  const auto neonates = load_corpus(data, cfg, man);
  const TrainResult res = train(neonates, cfg.train);
  write_training_outputs(man, res, cfg, model, neonates.size());
  man.write();
  return 0;
}

int cmd_retrain(const Common& c, const std::string& base_dir, const std::string& new_dir, std::string model) {
  const RunConfig cfg = resolve(c);
  const fs::path out(c.out);
  fs::create_directories(out);
  Manifest man("retrain", cfg, out);
  if (!c.config.empty()) man.input(c.config);
  const auto base = load_corpus(base_dir, cfg, man);
  const auto added = load_corpus(new_dir, cfg, man);
  const TrainingSet base_set = balanced_training_set(base, cfg.train.balance, cfg.seed);
  const TrainResult res = retrain_augmented(base, base_set, added, cfg.train);
  write_training_outputs(man, res, cfg, model, base.size());
  man.write();
  return 0;
}

int cmd_detect(const Common& c, const std::string& model_path, const std::string& input) {
  const RunConfig cfg = resolve(c);
  const fs::path out(c.out);
  fs::create_directories(out);
  Manifest man("detect", cfg, out);
  man.input(model_path);
  const SdaModel model = load_model(model_path);
  std::vector<CorpusEntry> entries;
  if (fs::is_directory(input)) {
    entries = scan_corpus(input);
  } else {
    CorpusEntry e;
    e.edf = input;
    e.id = fs::path(input).stem().string();
    entries.push_back(e);
  }
  std::size_t total = 0;
  for (const auto& e : entries) {
    man.input(e.edf);
    if (e.bad) man.input(*e.bad);
    const Detection d = detect(model, load_recording(e));
    write_mask_csv(out / (e.id + ".mask.csv"), d.mask);
    man.record(e.id + ".mask.csv");
    const auto events = extract_events(d.mask.mask);
    write_events_csv(out / (e.id + ".ann.sda.csv"), events);
    man.record(e.id + ".ann.sda.csv");
    write_stat_csv(out / (e.id + ".stat.csv"), d.second_stat);
    man.record(e.id + ".stat.csv");
    total += events.size();
    std::cout << e.id << ": " << events.size() << " detections, " << d.mask.positives() << " s\n";
  }
  std::cout << "total detections: " << total << "\n";
  man.write();
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& pred_dir, const std::string& truth_dir,
                 const std::string& reference, const std::vector<std::string>& experts, const std::string& baseline) {
  const RunConfig cfg = resolve(c);
  const fs::path out(c.out);
  fs::create_directories(out);
  Manifest man("evaluate", cfg, out);
  const auto preds = scan_masks(pred_dir);
  const auto truth = scan_annotations(truth_dir);
  std::set<std::string> pred_ids, truth_ids;
  for (const auto& [id, p] : preds) pred_ids.insert(id);
  for (const auto& [id, r] : truth) truth_ids.insert(id);
  check_orphans(pred_ids, truth_ids, "predictions", "references");

  std::vector<NeonateResult> results;
  std::vector<AnnotationMask> sda, e1, e2;
  for (const auto& [id, mask_path] : preds) {
    man.input(mask_path);
    NeonateResult r;
    r.id = id;
    r.pred = read_mask_csv(mask_path, "sda");
    const fs::path stat_path = fs::path(pred_dir) / (id + ".stat.csv");
    if (fs::exists(stat_path)) {
      man.input(stat_path);
      r.stat = read_stat_csv(stat_path);
      if (r.stat.size() != r.pred.mask.size()) throw ValidationError("'" + stat_path.string() + "' length differs from its mask");
    } else {
      r.stat.assign(r.pred.mask.begin(), r.pred.mask.end());
    }
    r.truth = reference_mask(id, truth.at(id), reference, r.pred.mask.size(), man);
    if (!experts.empty()) {
      sda.push_back(r.pred);
      e1.push_back(reference_mask(id, truth.at(id), experts[0], r.pred.mask.size(), man));
      e2.push_back(reference_mask(id, truth.at(id), experts[1], r.pred.mask.size(), man));
    }
    results.push_back(std::move(r));
  }
  const MetricsReport rep = evaluate(results, cfg.bootstrap_iters, cfg.seed);
  json j = report_json(rep);
  j["reference"] = reference;
  std::string text = report_text(rep, "Performance against reference '" + reference + "'");
  if (!baseline.empty()) {
    man.input(baseline);
    json b;
    try {
      b = json::parse(read_file(baseline));
    } catch (const json::exception& e) {
      throw FormatError("baseline report '" + baseline + "': " + e.what());
    }
    std::vector<double> base_auc, cur_auc;
    for (const auto& n : b.at("per_neonate")) {
      if (!n.at("auc").is_null()) base_auc.push_back(n.at("auc").get<double>());
    }
    for (const auto& n : rep.per_neonate) {
      if (n.auc) cur_auc.push_back(*n.auc);
    }
    const double p = mann_whitney_u(base_auc, cur_auc);
    j["generalizability"] = {{"baseline", fs::path(baseline).filename().string()},
                             {"n_baseline", base_auc.size()},
                             {"n_current", cur_auc.size()},
                             {"mann_whitney_p", p},
                             {"generalizes", p >= 0.05}};
    text += "\nGeneralizability (Mann-Whitney U on per-neonate AUC): p = " + fmt("%.4f", p) +
            (p >= 0.05 ? ", difference not significant: generalizes\n" : ", significant difference\n");
  }
  man.output("report.json", j.dump(2) + "\n");
  std::string per = "id,duration_h,auc,sensitivity,specificity,kappa,tp,tn,fp,fn,sdr,fd_per_h\n";
  for (const auto& n : rep.per_neonate) {
    per += n.id + "," + num(n.duration_h) + "," + (n.auc ? num(*n.auc) : "") + "," + num(n.sensitivity) + "," +
           num(n.specificity) + "," + num(n.kappa) + "," + std::to_string(n.counts.tp) + "," +
           std::to_string(n.counts.tn) + "," + std::to_string(n.counts.fp) + "," + std::to_string(n.counts.fn) + "," +
           num(n.events.sdr) + "," + num(n.events.fd_per_h) + "\n";
  }
  man.output("per_neonate.csv", per);
  if (!experts.empty()) {
    auto rows = noninferiority_delta_kappa(sda, e1, e2, cfg.bootstrap_iters, cfg.seed);
    for (auto& r : rows) r.expert = r.expert == "E1" ? experts[0] : experts[1];
    man.output("delta_kappa.json", delta_json(rows).dump(2) + "\n");
    const std::string dt = delta_text(rows);
    man.output("delta_kappa.txt", dt);
    text += "\nNon-inferiority (kappa E1-E2 minus kappa SDA-E):\n" + dt;
  }
  man.output("report.txt", text);
  std::cout << text;
  man.write();
  return 0;
}

int cmd_burden(const Common& c, const std::string& mask_dir, const std::string& reference_dir) {
  const RunConfig cfg = resolve(c);
  const fs::path out(c.out);
  fs::create_directories(out);
  Manifest man("burden", cfg, out);
  const auto masks = scan_masks(mask_dir);

  std::string cls = "id,total_min,max_hourly_min,total_class,hourly_class\n";
  std::vector<BurdenSeries> pred_b, ref_b;
  std::vector<PoiWindow> pred_poi, ref_poi;
  ConfusionCounts total_c, hourly_c;
  for (const auto& [id, path] : masks) {
    man.input(path);
    const AnnotationMask m = read_mask_csv(path);
    const BurdenSeries b = burden(m.mask);
    const auto poi = detect_poi(m.mask);
    const auto k = classify_burden(b);
    std::string bs = "hour,seconds\n", plot = "hour_start_h,hour_end_h,burden_min\n", ps = "window,start_s,is_poi\n";
    for (std::size_t h = 0; h < b.hourly.size(); ++h) {
      bs += std::to_string(h) + "," + std::to_string(b.hourly[h]) + "\n";
      const double end_h = std::min(static_cast<double>(h + 1), static_cast<double>(m.mask.size()) / 3600.0);
      plot += std::to_string(h) + "," + num(end_h) + "," + num(static_cast<double>(b.hourly[h]) / 60.0) + "\n";
    }
    for (const auto& w : poi) ps += std::to_string(w.index) + "," + std::to_string(w.start_s) + "," + (w.is_poi ? "1" : "0") + "\n";
    man.output(id + ".burden.csv", bs);
    man.output(id + ".burden_plot.csv", plot);
    man.output(id + ".poi.csv", ps);
    cls += id + "," + num(b.total_min) + "," + num(b.max_hourly_min) + "," + to_string(k.total) + "," +
           to_string(k.hourly) + "\n";
    if (!reference_dir.empty()) {
      const fs::path rmask = fs::path(reference_dir) / (id + ".mask.csv");
      AnnotationMask ref;
      if (fs::exists(rmask)) {
        man.input(rmask);
        ref = read_mask_csv(rmask);
      } else {
        const auto anns = scan_annotations(reference_dir);
        if (!anns.count(id)) throw ValidationError("reference directory has no annotations for '" + id + "'");
        ref = reference_mask(id, anns.at(id), "consensus", m.mask.size(), man);
      }
      if (ref.mask.size() != m.mask.size()) throw ValidationError("reference mask for '" + id + "' has a different length");
      const BurdenSeries rb = burden(ref.mask);
      const auto rk = classify_burden(rb);
      const auto rpoi = detect_poi(ref.mask);
      pred_b.push_back(b);
      ref_b.push_back(rb);
      pred_poi.insert(pred_poi.end(), poi.begin(), poi.end());
      ref_poi.insert(ref_poi.end(), rpoi.begin(), rpoi.end());
      auto tally = [](ConfusionCounts& cc, BurdenClass p, BurdenClass t) {
        const bool ph = p == BurdenClass::kHigh, th = t == BurdenClass::kHigh;
        (ph ? (th ? cc.tp : cc.fp) : (th ? cc.fn : cc.tn)) += 1;
      };
      tally(total_c, k.total, rk.total);
      tally(hourly_c, k.hourly, rk.hourly);
    }
  }
  man.output("classification.csv", cls);
  if (!reference_dir.empty()) {
    json j;
    std::ostringstream t;
    try {
      const auto corr = burden_correlation(pred_b, ref_b, cfg.bootstrap_iters, cfg.seed);
      j["hourly_correlation"] = interval_json(corr.r);
      t << "hourly burden correlation r = " << fmt("%.3f", corr.r.point) << " (95% CI " << fmt("%.3f", corr.r.lo)
        << "-" << fmt("%.3f", corr.r.hi) << ")\n";
    } catch (const ValidationError& e) {
      j["hourly_correlation"] = nullptr;
      j["hourly_correlation_error"] = e.what();
      t << "hourly burden correlation undefined: " << e.what() << "\n";
    }
    const Agreement poi = poi_agreement(pred_poi, ref_poi);
    const Agreement tot = agreement_from_counts(total_c);
    const Agreement hr = agreement_from_counts(hourly_c);
    j["poi"] = agreement_json(poi);
    j["total_burden"] = agreement_json(tot);
    j["max_hourly_burden"] = agreement_json(hr);
    auto row = [&](const char* name, const Agreement& a) {
      t << pad(name, 22) << "TP " << a.counts.tp << "  FN " << a.counts.fn << "  FP " << a.counts.fp << "  TN "
        << a.counts.tn << "  sens " << fmt("%.3f", a.sensitivity) << "  spec " << fmt("%.3f", a.specificity)
        << "  acc " << fmt("%.3f", a.accuracy) << "\n";
    };
    row("POI windows", poi);
    row("total burden", tot);
    row("max hourly burden", hr);
    man.output("burden_report.json", j.dump(2) + "\n");
    man.output("burden_report.txt", t.str());
    std::cout << t.str();
  }
  man.write();
  return 0;
}

int cmd_synth(const Common& c, std::optional<std::size_t> n, std::optional<std::size_t> duration,
              std::optional<std::size_t> first, std::optional<double> artifact_rate, std::optional<double> seizure_rate,
              const std::string& prefix) {
  RunConfig cfg = resolve(c);
  if (n) cfg.synth.n_neonates = *n;
  if (duration) cfg.synth.duration_s = *duration;
  if (first) cfg.synth.first_index = *first;
  if (artifact_rate) cfg.synth.artifact_rate_per_h = *artifact_rate;
  if (seizure_rate) cfg.synth.seizure_rate_per_h = *seizure_rate;
  if (!prefix.empty()) cfg.synth.id_prefix = prefix;
  cfg.finalize();
  cfg.synth.validate();
  const fs::path out(c.out);
  fs::create_directories(out);
  Manifest man("synth", cfg, out);
  for (std::size_t i = 0; i < cfg.synth.n_neonates; ++i) {
    const SynthNeonate nn = generate_neonate(cfg.synth, cfg.synth.first_index + i);
    for (const auto& p : write_neonate(nn, out)) man.record(p.filename());
    std::cout << nn.recording.id << ": " << nn.truth.size() << " seizures, " << nn.artifacts.size() << " artifacts\n";
  }
  man.write();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Neonatal EEG seizure detection: training, detection, evaluation and clinical measures", "neoseize"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common train_c, detect_c, eval_c, burden_c, synth_c, retrain_c;
  std::string data, model, input, pred, truth, reference = "consensus", baseline, masks, ref_dir, base_dir, new_dir,
                                                prefix;
  std::vector<std::string> experts;
  std::size_t folds = 10;
  std::optional<std::size_t> n, duration, first;
  std::optional<double> artifact_rate, seizure_rate;

  auto* train_cmd = app.add_subcommand("train", "train and calibrate a model with cross-validation");
  add_common(train_cmd, train_c, true);
  train_cmd->add_option("--data", data, "corpus directory (<id>.edf, <id>.ann.<rater>.csv)")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--model", model, "model path (default <out>/model.json)");
  auto* folds_opt = train_cmd->add_option("--folds", folds, "cross-validation folds (overrides the config)");

  auto* detect_cmd = app.add_subcommand("detect", "annotate recordings with a trained model");
  add_common(detect_cmd, detect_c, false);
  detect_cmd->add_option("--model", model, "model file")->required()->check(CLI::ExistingFile);
  detect_cmd->add_option("--input", input, "EDF file or corpus directory")->required()->check(CLI::ExistingPath);

  auto* eval_cmd = app.add_subcommand("evaluate", "per-neonate and concatenated performance measures");
  add_common(eval_cmd, eval_c, true);
  eval_cmd->add_option("--pred", pred, "directory of <id>.mask.csv (and <id>.stat.csv)")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--truth", truth, "directory of <id>.ann.<rater>.csv")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--reference", reference, "reference rater, or 'consensus' of the experts");
  eval_cmd->add_option("--experts", experts, "two raters for the non-inferiority test")->expected(2)->delimiter(',');
  eval_cmd->add_option("--baseline", baseline, "earlier report.json for the generalizability test")->check(CLI::ExistingFile);

  auto* burden_cmd = app.add_subcommand("burden", "seizure burden, periods of interest and burden classes");
  add_common(burden_cmd, burden_c, true);
  burden_cmd->add_option("--masks", masks, "directory of <id>.mask.csv")->required()->check(CLI::ExistingDirectory);
  burden_cmd->add_option("--reference", ref_dir, "reference masks or annotations")->check(CLI::ExistingDirectory);

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
  add_common(synth_cmd, synth_c, false);
  synth_cmd->add_option("--n", n, "number of neonates");
  synth_cmd->add_option("--duration", duration, "seconds per recording");
  synth_cmd->add_option("--first-index", first, "index of the first neonate");
  synth_cmd->add_option("--artifact-rate", artifact_rate, "artifacts per hour");
  synth_cmd->add_option("--seizure-rate", seizure_rate, "seizures per hour");
  synth_cmd->add_option("--prefix", prefix, "id prefix");

  auto* retrain_cmd = app.add_subcommand("retrain", "re-train on half the base data and half new data");
  add_common(retrain_cmd, retrain_c, true);
  retrain_cmd->add_option("--base", base_dir, "original training corpus")->required()->check(CLI::ExistingDirectory);
  retrain_cmd->add_option("--new", new_dir, "new corpus")->required()->check(CLI::ExistingDirectory);
  retrain_cmd->add_option("--model", model, "model path (default <out>/model.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_c, data, model, folds, folds_opt->count() > 0);
    if (*detect_cmd) return cmd_detect(detect_c, model, input);
    if (*eval_cmd) return cmd_evaluate(eval_c, pred, truth, reference, experts, baseline);
    if (*burden_cmd) return cmd_burden(burden_c, masks, ref_dir);
    if (*synth_cmd) return cmd_synth(synth_c, n, duration, first, artifact_rate, seizure_rate, prefix);
    if (*retrain_cmd) return cmd_retrain(retrain_c, base_dir, new_dir, model);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace neoseize
