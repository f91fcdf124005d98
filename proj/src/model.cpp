#include "neoseize/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "neoseize/error.hpp"
#include "neoseize/log.hpp"
#include "neoseize/rng.hpp"

namespace neoseize {
namespace {

using json = nlohmann::json;

// Seed tags so each randomized step draws from its own stream.
enum SeedTag : std::uint64_t {
  kTagBalance = 1,
  kTagReference,
  kTagFolds,
  kTagInnerFolds,
  kTagRetrain,
  kTagFoldReference = 1000,
};

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) { return substream(seed, tag)(); }

// Seeded subset of `idx` of size n, in the original order.
std::vector<std::size_t> sample_sorted(std::vector<std::size_t> idx, std::size_t n, Rng& rng) {
  if (n >= idx.size()) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct Candidate {
  TrainingRow row;
  bool seizure = false;
};

TrainingSet balance(const std::vector<Candidate>& cands, double ratio, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < cands.size(); ++i) (cands[i].seizure ? pos : neg).push_back(i);
  std::size_t n_pos = pos.size();
  std::size_t n_neg = pos.empty() ? neg.size()
                                  : std::min(neg.size(), static_cast<std::size_t>(ratio * static_cast<double>(n_pos)));
  if (cap > 0 && n_pos + n_neg > cap) {
    const double share = static_cast<double>(n_pos) / static_cast<double>(n_pos + n_neg);
    std::size_t p = static_cast<std::size_t>(std::llround(share * static_cast<double>(cap)));
    if (n_pos > 0) p = std::max<std::size_t>(p, 1);
    n_neg = cap - std::min(p, cap);
    n_pos = std::min(p, cap);
  }
  Rng rng(mix_seed(seed));
  auto keep = sample_sorted(pos, n_pos, rng);
  const auto keep_neg = sample_sorted(neg, n_neg, rng);
  keep.insert(keep.end(), keep_neg.begin(), keep_neg.end());
  std::sort(keep.begin(), keep.end());
  TrainingSet out;
  for (auto i : keep) {
    out.rows.push_back(cands[i].row);
    out.y.push_back(cands[i].seizure ? 1 : -1);
  }
  return out;
}

TrainingSet subset(const TrainingSet& set, const std::vector<std::uint8_t>& excluded_neonate) {
  TrainingSet out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!excluded_neonate[set.rows[i].neonate]) {
      out.rows.push_back(set.rows[i]);
      out.y.push_back(set.y[i]);
    }
  }
  return out;
}

std::vector<FeatureVector> gather(std::span<const LabeledNeonate> neonates, const TrainingSet& set) {
  std::vector<FeatureVector> rows;
  rows.reserve(set.size());
  for (const auto& r : set.rows) {
    if (r.neonate >= neonates.size() || r.row >= neonates[r.neonate].features.rows.size()) {
      throw ValidationError("training set refers to a missing feature row");
    }
    rows.push_back(neonates[r.neonate].features.rows[r.row]);
  }
  return rows;
}

bool has_both_classes(std::span<const std::int8_t> y) {
  return std::find(y.begin(), y.end(), 1) != y.end() && std::find(y.begin(), y.end(), -1) != y.end();
}

// Normalization plus SVM, without the gate reference set.
SdaModel fit_core(std::span<const FeatureVector> rows, std::span<const std::int8_t> y, const SvmTraining& o) {
  if (rows.size() != y.size()) throw ValidationError("train: row and label counts differ");
  if (!has_both_classes(y)) throw ValidationError("train: single-class training data (need seizure and non-seizure epochs)");
  SdaModel m;
  m.norm = NormStats::fit(rows);
  DenseMatrix x(0, kNumFeatures);
  x.data.reserve(rows.size() * kNumFeatures);
  for (const auto& r : rows) x.push_row(normalize(r, m.norm).values);
  m.kernel = {o.kernel, o.gamma};
  m.c = o.c;
  const SmoResult res = solve_smo(x, y, o.c, m.kernel, o.smo);
  m.support_vectors = DenseMatrix(0, kNumFeatures);
  for (std::size_t i = 0; i < x.rows; ++i) {
    if (res.alpha[i] > 0.0) {
      m.support_vectors.push_row(x.row(i));
      m.alpha.push_back(res.alpha[i]);
      m.labels.push_back(y[i]);
    }
  }
  m.bias = res.bias;
  m.kkt_violation = res.kkt_violation;
  m.n_train = rows.size();
  m.seed = o.seed;
  return m;
}

std::vector<FeatureVector> normalized_rows(std::span<const FeatureVector> rows, const NormStats& norm) {
  std::vector<FeatureVector> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(normalize(r, norm));
  return out;
}

double d_max_at(const std::vector<double>& self_dist, double quantile_pct) {
  // A zero threshold would flag every point off an exact duplicate.
  return std::max(quantile(self_dist, quantile_pct / 100.0), std::numeric_limits<double>::min());
}

void check_reference(const DenseMatrix& ref, std::span<const std::size_t> ks) {
  for (auto k : ks) {
    if (k + 1 > ref.rows) {
      throw ValidationError("outlier gate: k = " + std::to_string(k) + " needs more than " +
                            std::to_string(ref.rows) + " reference rows");
    }
  }
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

json matrix_to_json(const DenseMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

DenseMatrix matrix_from_json(const json& j) {
  DenseMatrix m(0, kNumFeatures);
  for (const auto& r : j) {
    const auto v = r.get<std::vector<double>>();
    if (v.size() != kNumFeatures) throw FormatError("model file: matrix row has the wrong width");
    m.push_row(v);
  }
  return m;
}

template <std::size_t N>
std::array<double, N> array_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != N) throw FormatError("model file: array has the wrong length");
  std::array<double, N> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

}  // namespace

std::vector<std::uint8_t> epoch_labels(const Mask& seconds, const EpochGrid& grid) {
  std::vector<std::uint8_t> out(grid.n_epochs, 0);
  const auto len = static_cast<std::size_t>(std::llround(grid.epoch_len));
  for (std::size_t e = 0; e < grid.n_epochs; ++e) {
    const auto start = static_cast<std::size_t>(std::llround(grid.start_s(e)));
    std::size_t n = 0;
    for (std::size_t s = start; s < start + len && s < seconds.size(); ++s) n += seconds[s] ? 1 : 0;
    out[e] = 2 * n >= len ? 1 : 0;
  }
  return out;
}

std::size_t TrainingSet::n_seizure() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
}

void BalanceOptions::validate() const {
  if (!(ratio > 0.0)) throw ConfigError("balance ratio must be positive");
  if (max_rows != 0 && max_rows < 10) throw ConfigError("training row cap must be at least 10 (or 0 for none)");
}

TrainingSet balanced_training_set(std::span<const LabeledNeonate> neonates, const BalanceOptions& options,
                                  std::uint64_t seed) {
  options.validate();
  std::vector<Candidate> cands;
  for (std::size_t n = 0; n < neonates.size(); ++n) {
    const auto& nn = neonates[n];
    const auto labels = epoch_labels(nn.consensus, nn.grid);
    for (std::size_t c = 0; c < nn.features.n_channels; ++c) {
      for (std::size_t e = 0; e < nn.features.n_epochs; ++e) {
        const std::size_t row = c * nn.features.n_epochs + e;
        if (!nn.bad.empty() && nn.bad[row]) continue;
        cands.push_back({{n, row}, labels[e] != 0});
      }
    }
  }
  return balance(cands, options.ratio, options.max_rows, derive(seed, kTagBalance));
}

TrainingSet retraining_set(std::span<const LabeledNeonate> neonates, std::size_t target_rows,
                           std::size_t neonate_offset, std::uint64_t seed) {
  std::vector<Candidate> cands;
  for (std::size_t n = 0; n < neonates.size(); ++n) {
    const auto& nn = neonates[n];
    const auto labels = epoch_labels(nn.consensus, nn.grid);
    const double half = static_cast<double>(nn.consensus.size()) / 2.0;
    for (std::size_t c = 0; c < nn.features.n_channels; ++c) {
      for (std::size_t e = 0; e < nn.features.n_epochs; ++e) {
        const std::size_t row = c * nn.features.n_epochs + e;
        if (!nn.bad.empty() && nn.bad[row]) continue;
        if (labels[e]) {
          cands.push_back({{n + neonate_offset, row}, true});
        } else if (nn.grid.start_s(e) >= half) {
          cands.push_back({{n + neonate_offset, row}, false});
        }
      }
    }
  }
  return balance(cands, BalanceOptions{}.ratio, target_rows, derive(seed, kTagRetrain));
}

TrainingSet interleave_halves(const TrainingSet& base, const TrainingSet& added) {
  TrainingSet out;
  for (const TrainingSet* s : {&base, &added}) {
    for (std::size_t i = 0; i < s->size(); i += 2) {
      out.rows.push_back(s->rows[i]);
      out.y.push_back(s->y[i]);
    }
  }
  return out;
}

SvmDecision SdaModel::decision() const {
  SvmDecision d;
  d.kernel = kernel;
  d.support_vectors = support_vectors;
  d.bias = bias;
  d.coef.resize(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) d.coef[i] = alpha[i] * labels[i];
  return d;
}

void SdaModel::validate() const {
  if (alpha.size() != labels.size() || alpha.size() != support_vectors.rows) {
    throw ValidationError("model: support vector, alpha and label counts differ");
  }
  if (support_vectors.rows > 0 && support_vectors.cols != kNumFeatures) {
    throw ValidationError("model: support vectors must have " + std::to_string(kNumFeatures) + " features");
  }
  if (!(c > 0.0)) throw ValidationError("model: C must be positive");
  double balance = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] >= 0.0 && alpha[i] <= c)) throw ValidationError("model: alpha outside [0, C]");
    if (labels[i] != 1 && labels[i] != -1) throw ValidationError("model: labels must be +1 or -1");
    balance += alpha[i] * labels[i];
  }
  if (std::abs(balance) > 1e-6 * c) throw ValidationError("model: sum of alpha*y is not zero");
  if (!std::isfinite(bias)) throw ValidationError("model: non-finite bias");
  norm.validate();
  outlier.validate();
  post.validate();
}

SdaModel train_svm(std::span<const FeatureVector> rows, std::span<const std::int8_t> y, const SvmTraining& options) {
  SdaModel m = fit_core(rows, y, options);
  m.outlier.reference = build_reference(normalized_rows(rows, m.norm), options.reference_rows,
                                        derive(options.seed, kTagReference));
  const std::size_t k = std::min<std::size_t>(m.outlier.k, m.outlier.reference.rows - 1);
  if (k == 0) throw ValidationError("train: need at least two training rows for the outlier gate");
  m.outlier.k = k;
  const std::size_t ks[] = {k};
  m.outlier.d_max = d_max_at(self_knn_distances(m.outlier.reference, ks)[0], m.outlier.quantile);
  return m;
}

SdaModel train_svm(std::span<const LabeledNeonate> neonates, const TrainingSet& set, const SvmTraining& options) {
  return train_svm(gather(neonates, set), set.y, options);
}

EpochStats decision_statistic(const SdaModel& model, const FeatureMatrix& fm, std::string_view version) {
  if (version != model.feature_version) {
    throw ValidationError("feature version mismatch: model expects '" + model.feature_version + "', features are '" +
                          std::string(version) + "'");
  }
  if (fm.rows.size() != fm.n_channels * fm.n_epochs) throw ValidationError("feature matrix shape mismatch");
  const SvmDecision d = model.decision();
  EpochStats out{fm.n_channels, fm.n_epochs, std::vector<double>(fm.rows.size())};
  for (std::size_t i = 0; i < fm.rows.size(); ++i) out.values[i] = d(normalize(fm.rows[i], model.norm).values);
  return out;
}

std::vector<std::uint8_t> outlier_flags(const SdaModel& model, const FeatureMatrix& fm) {
  std::vector<std::uint8_t> out(fm.rows.size());
  for (std::size_t i = 0; i < fm.rows.size(); ++i) out[i] = is_outlier(normalize(fm.rows[i], model.norm), model.outlier);
  return out;
}

std::string model_to_json(const SdaModel& m) {
  json j;
  j["format"] = "neoseize-model";
  j["format_version"] = 1;
  j["feature_version"] = m.feature_version;
  j["montage"] = m.montage;
  j["hop_s"] = m.hop_s;
  j["seed"] = m.seed;
  j["n_train"] = m.n_train;
  j["kkt_violation"] = m.kkt_violation;
  j["kernel"] = {{"type", to_string(m.kernel.type)}, {"gamma", m.kernel.gamma}};
  j["c"] = m.c;
  j["bias"] = m.bias;
  j["support_vectors"] = matrix_to_json(m.support_vectors);
  j["alpha"] = m.alpha;
  j["labels"] = std::vector<int>(m.labels.begin(), m.labels.end());
  j["norm"] = {{"mean", m.norm.mean}, {"sd", m.norm.sd}};
  j["outlier"] = {{"k", m.outlier.k},
                  {"quantile", m.outlier.quantile},
                  {"d_max", m.outlier.d_max},
                  {"amp_max", m.outlier.amp_max},
                  {"reference", matrix_to_json(m.outlier.reference)}};
  j["post"] = {{"ma_len", m.post.ma_len},
               {"threshold", m.post.threshold},
               {"collar_s", m.post.collar_s},
               {"min_dur_s", m.post.min_dur_s}};
  return j.dump() + "\n";
}

SdaModel model_from_json(const std::string& text) {
  SdaModel m;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "neoseize-model") throw FormatError("not a neoseize model file");
    if (j.at("format_version").get<int>() != 1) throw FormatError("unsupported model format version");
    m.feature_version = j.at("feature_version").get<std::string>();
    m.montage = j.at("montage").get<std::string>();
    m.hop_s = j.at("hop_s").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_train = j.at("n_train").get<std::size_t>();
    m.kkt_violation = j.at("kkt_violation").get<double>();
    m.kernel.type = kernel_from_string(j.at("kernel").at("type").get<std::string>());
    m.kernel.gamma = j.at("kernel").at("gamma").get<double>();
    m.c = j.at("c").get<double>();
    m.bias = j.at("bias").get<double>();
    m.support_vectors = matrix_from_json(j.at("support_vectors"));
    m.alpha = j.at("alpha").get<std::vector<double>>();
    for (int v : j.at("labels").get<std::vector<int>>()) m.labels.push_back(static_cast<std::int8_t>(v));
    m.norm.mean = array_from_json<kNumFeatures>(j.at("norm").at("mean"));
    m.norm.sd = array_from_json<kNumFeatures>(j.at("norm").at("sd"));
    const auto& o = j.at("outlier");
    m.outlier.k = o.at("k").get<std::size_t>();
    m.outlier.quantile = o.at("quantile").get<double>();
    m.outlier.d_max = o.at("d_max").get<double>();
    m.outlier.amp_max = o.at("amp_max").get<double>();
    m.outlier.reference = matrix_from_json(o.at("reference"));
    const auto& p = j.at("post");
    m.post.ma_len = p.at("ma_len").get<std::size_t>();
    m.post.threshold = p.at("threshold").get<double>();
    m.post.collar_s = p.at("collar_s").get<std::size_t>();
    m.post.min_dur_s = p.at("min_dur_s").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
  m.validate();
  return m;
}

void save_model(const SdaModel& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot open '" + path.string() + "' for writing");
  out << model_to_json(model);
  if (!out) throw RuntimeError("failed writing '" + path.string() + "'");
}

SdaModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

std::size_t FoldPlan::fold_of(const std::string& id) const {
  const auto it = assignments.find(id);
  if (it == assignments.end()) throw ValidationError("fold plan does not cover neonate '" + id + "'");
  return it->second;
}

std::vector<std::string> FoldPlan::members(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignments) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

FoldPlan make_fold_plan(std::vector<std::string> ids, std::size_t n_folds, std::uint64_t seed) {
  const std::size_t n = ids.size();
  ids = sorted_unique(std::move(ids));
  if (ids.size() != n) throw ValidationError("fold plan: duplicate neonate ids");
  if (n_folds < 2) throw ConfigError("fold plan: need at least two folds");
  if (n_folds > n) {
    throw ValidationError("fold plan: " + std::to_string(n_folds) + " folds for only " + std::to_string(n) +
                          " neonates");
  }
  Rng rng(mix_seed(seed));
  std::shuffle(ids.begin(), ids.end(), rng);
  FoldPlan plan;
  plan.n_folds = n_folds;
  for (std::size_t i = 0; i < n; ++i) plan.assignments[ids[i]] = i % n_folds;
  return plan;
}

void HyperGrid::validate() const {
  if (c.empty() || gamma.empty()) throw ConfigError("hyperparameter grid is empty");
  for (double v : c) {
    if (!(v > 0.0)) throw ConfigError("hyperparameter grid: C must be positive");
  }
  for (double v : gamma) {
    if (!(v > 0.0)) throw ConfigError("hyperparameter grid: gamma must be positive");
  }
  if (inner_folds < 2) throw ConfigError("hyperparameter grid: need at least two inner folds");
}

void TrainOptions::validate() const {
  hyper.validate();
  balance.validate();
  calibration.validate();
  search_post.validate();
  if (n_folds < 2) throw ConfigError("cross-validation needs at least two folds");
  if (reference_rows != 0 && reference_rows < 10) throw ConfigError("reference set cap must be at least 10");
}

HyperResult search_hyperparameters(std::span<const LabeledNeonate> neonates, const TrainingSet& set,
                                   const TrainOptions& options) {
  options.hyper.validate();
  HyperResult best;
  best.kappa = -std::numeric_limits<double>::infinity();
  best.c = options.hyper.c.front();
  best.gamma = options.hyper.gamma.front();
  std::vector<std::string> ids;
  for (const auto& n : neonates) ids.push_back(n.id);
  if (neonates.size() < 2 || (options.hyper.c.size() == 1 && options.hyper.gamma.size() == 1)) {
    best.kappa = std::numeric_limits<double>::quiet_NaN();
    best.table.push_back({best.c, best.gamma, best.kappa});
    return best;
  }
  const FoldPlan plan = make_fold_plan(ids, std::min(options.hyper.inner_folds, neonates.size()),
                                       derive(options.seed, kTagInnerFolds));
  std::vector<std::vector<std::uint8_t>> in_fold(plan.n_folds, std::vector<std::uint8_t>(neonates.size(), 0));
  for (std::size_t i = 0; i < neonates.size(); ++i) in_fold[plan.fold_of(neonates[i].id)][i] = 1;
  std::vector<TrainingSet> train_sets;
  std::vector<std::vector<FeatureVector>> train_rows;
  for (std::size_t f = 0; f < plan.n_folds; ++f) {
    train_sets.push_back(subset(set, in_fold[f]));
    train_rows.push_back(gather(neonates, train_sets.back()));
    if (!has_both_classes(train_sets.back().y)) {
      log::warn("hyperparameter search: inner fold " + std::to_string(f) +
                " has a single-class training complement and is skipped");
    }
  }

  for (double c : options.hyper.c) {
    for (double g : options.hyper.gamma) {
      ConfusionCounts total;
      for (std::size_t f = 0; f < plan.n_folds; ++f) {
        if (!has_both_classes(train_sets[f].y)) continue;
        SvmTraining t{options.kernel, c, g, options.smo, 0, options.seed};
        const SdaModel m = fit_core(train_rows[f], train_sets[f].y, t);
        for (std::size_t i = 0; i < neonates.size(); ++i) {
          if (!in_fold[f][i]) continue;
          const auto& nn = neonates[i];
          const auto stats = decision_statistic(m, nn.features);
          const auto pred = postprocess(stats, {}, nn.bad, options.search_post, nn.grid, nn.consensus.size());
          total += confusion(pred.mask, nn.consensus);
        }
      }
      const double kappa = total.total() > 0 ? cohen_kappa(total) : std::numeric_limits<double>::quiet_NaN();
      best.table.push_back({c, g, kappa});
      if (kappa > best.kappa) {
        best.kappa = kappa;
        best.c = c;
        best.gamma = g;
      }
    }
  }
  if (!(best.kappa > -std::numeric_limits<double>::infinity())) {
    throw ValidationError("hyperparameter search: no inner fold had both classes in its training data");
  }
  return best;
}

CvResult cross_validate(std::span<const LabeledNeonate> neonates, const TrainingSet& set, const FoldPlan& plan,
                        double c, double gamma, const TrainOptions& options) {
  const auto& grid = options.calibration;
  grid.validate();
  std::vector<std::size_t> fold(neonates.size());
  for (std::size_t i = 0; i < neonates.size(); ++i) fold[i] = plan.fold_of(neonates[i].id);

  CvResult out;
  out.stats.resize(neonates.size());
  out.calibration.resize(neonates.size());
  for (std::size_t f = 0; f < plan.n_folds; ++f) {
    std::vector<std::uint8_t> test(neonates.size(), 0);
    FoldAudit audit;
    audit.fold = f;
    for (std::size_t i = 0; i < neonates.size(); ++i) {
      if (fold[i] == f) {
        test[i] = 1;
        audit.test_ids.push_back(neonates[i].id);
      }
    }
    if (audit.test_ids.empty()) continue;
    const TrainingSet train_set = subset(set, test);
    std::vector<std::string> train_ids;
    for (const auto& r : train_set.rows) train_ids.push_back(neonates[r.neonate].id);
    audit.train_ids = sorted_unique(std::move(train_ids));
    audit.train_rows = train_set.size();
    for (const auto& id : audit.test_ids) {
      if (std::binary_search(audit.train_ids.begin(), audit.train_ids.end(), id)) {
        throw RuntimeError("cross-validation leak: test neonate '" + id + "' is in fold " + std::to_string(f) +
                           "'s training data");
      }
    }
    if (train_set.n_seizure() == 0) {
      throw ValidationError("cross-validation fold " + std::to_string(f) +
                            " has no seizure epochs in its training complement");
    }
    SvmTraining t{options.kernel, c, gamma, options.smo, options.reference_rows,
                  derive(options.seed, kTagFoldReference + f)};
    SdaModel m = train_svm(neonates, train_set, t);
    const DenseMatrix& ref = m.outlier.reference;
    check_reference(ref, grid.k);
    const auto self = self_knn_distances(ref, grid.k);
    std::vector<std::vector<double>> d_max(grid.k.size(), std::vector<double>(grid.quantile.size()));
    for (std::size_t ki = 0; ki < grid.k.size(); ++ki) {
      for (std::size_t qi = 0; qi < grid.quantile.size(); ++qi) d_max[ki][qi] = d_max_at(self[ki], grid.quantile[qi]);
    }
    for (std::size_t i = 0; i < neonates.size(); ++i) {
      if (!test[i]) continue;
      const auto& nn = neonates[i];
      out.stats[i] = decision_statistic(m, nn.features);
      CalibrationRecording& cr = out.calibration[i];
      cr.stats = out.stats[i];
      cr.knn.assign(grid.k.size(), std::vector<double>(nn.features.rows.size()));
      cr.max_amp.resize(nn.features.rows.size());
      for (std::size_t r = 0; r < nn.features.rows.size(); ++r) {
        const auto d = knn_distances(normalize(nn.features.rows[r], m.norm).values, ref, grid.k);
        for (std::size_t ki = 0; ki < grid.k.size(); ++ki) cr.knn[ki][r] = d[ki];
        cr.max_amp[r] = nn.features.rows[r].max_amp;
      }
      cr.bad = nn.bad;
      cr.d_max = d_max;
      cr.grid = nn.grid;
      cr.truth = nn.consensus;
    }
    out.fold_models.push_back(std::move(m));
    out.audit.push_back(std::move(audit));
  }
  return out;
}

std::vector<NeonateResult> cv_results(std::span<const LabeledNeonate> neonates, const CvResult& cv,
                                      const CalibrationGrid& grid, const CalibrationResult& cal) {
  const auto ki = static_cast<std::size_t>(std::find(grid.k.begin(), grid.k.end(), cal.k) - grid.k.begin());
  const auto qi = static_cast<std::size_t>(std::find(grid.quantile.begin(), grid.quantile.end(), cal.quantile) -
                                           grid.quantile.begin());
  if (ki == grid.k.size() || qi == grid.quantile.size()) {
    throw ValidationError("calibration result is not on the calibration grid");
  }
  std::vector<NeonateResult> out;
  for (std::size_t i = 0; i < neonates.size(); ++i) {
    const auto& cr = cv.calibration[i];
    std::vector<std::uint8_t> excluded(cr.max_amp.size());
    for (std::size_t r = 0; r < excluded.size(); ++r) {
      excluded[r] = is_outlier(cr.knn[ki][r], cr.max_amp[r], cr.d_max[ki][qi], cal.amp_max) ||
                    (!cr.bad.empty() && cr.bad[r]);
    }
    const auto es = smooth_channel_max(cr.stats, excluded, cal.post.ma_len);
    NeonateResult nr;
    nr.id = neonates[i].id;
    nr.stat = per_second_statistic(es, cr.grid, cr.truth.size());
    nr.pred = {"sda", remove_short(apply_collar(threshold_mask(nr.stat, cal.post.threshold), cal.post.collar_s),
                                   cal.post.min_dur_s)};
    nr.truth = {"consensus", cr.truth};
    out.push_back(std::move(nr));
  }
  return out;
}

TrainResult train(std::span<const LabeledNeonate> neonates, const TrainingSet& set, const TrainOptions& options) {
  options.validate();
  if (neonates.size() < 2) throw ValidationError("training needs at least two neonates");
  if (!has_both_classes(set.y)) {
    throw ValidationError("train: single-class training data (no seizure epochs in the consensus)");
  }
  std::set<std::size_t> seizure_neonates;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.y[i] == 1) seizure_neonates.insert(set.rows[i].neonate);
  }
  if (seizure_neonates.size() < 2) throw ValidationError("training needs at least two neonates with seizures");

  TrainResult res;
  res.set = set;
  res.hyper = search_hyperparameters(neonates, set, options);
  std::vector<std::string> ids;
  for (const auto& n : neonates) ids.push_back(n.id);
  res.plan = make_fold_plan(ids, std::min(options.n_folds, neonates.size()), derive(options.seed, kTagFolds));
  res.cv = cross_validate(neonates, set, res.plan, res.hyper.c, res.hyper.gamma, options);
  res.calibration = calibrate(res.cv.calibration, options.calibration);
  res.cv_results = cv_results(neonates, res.cv, options.calibration, res.calibration);

  SvmTraining t{options.kernel, res.hyper.c, res.hyper.gamma, options.smo, options.reference_rows, options.seed};
  res.model = train_svm(neonates, set, t);
  check_reference(res.model.outlier.reference, std::span<const std::size_t>(&res.calibration.k, 1));
  res.model.outlier.k = res.calibration.k;
  res.model.outlier.quantile = res.calibration.quantile;
  res.model.outlier.amp_max = res.calibration.amp_max;
  const std::size_t ks[] = {res.calibration.k};
  res.model.outlier.d_max = d_max_at(self_knn_distances(res.model.outlier.reference, ks)[0], res.calibration.quantile);
  res.model.post = res.calibration.post;
  res.model.montage = options.montage;
  res.model.hop_s = options.hop_s;
  res.model.validate();
  return res;
}

TrainResult train(std::span<const LabeledNeonate> neonates, const TrainOptions& options) {
  options.validate();
  return train(neonates, balanced_training_set(neonates, options.balance, options.seed), options);
}

TrainResult retrain_augmented(std::span<const LabeledNeonate> base, const TrainingSet& base_set,
                              std::span<const LabeledNeonate> added, const TrainOptions& options) {
  const TrainingSet new_set = retraining_set(added, base_set.size(), base.size(), options.seed);
  if (new_set.size() == 0) throw ValidationError("re-training: the new set is empty");
  std::vector<LabeledNeonate> all(base.begin(), base.end());
  all.insert(all.end(), added.begin(), added.end());
  return train(all, interleave_halves(base_set, new_set), options);
}

}  // namespace neoseize
