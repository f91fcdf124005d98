#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neoseize/evaluation.hpp"
#include "neoseize/features.hpp"
#include "neoseize/outlier_gate.hpp"
#include "neoseize/postprocess.hpp"
#include "neoseize/svm.hpp"

namespace neoseize {

// Training inputs for one neonate: raw features and the consensus labels.
struct LabeledNeonate {
  std::string id;
  FeatureMatrix features;
  EpochGrid grid;
  Mask consensus;                 // one entry per second
  std::vector<std::uint8_t> bad;  // per (channel, epoch); may be empty
};

// An epoch is seizure when at least half of its seconds are.
std::vector<std::uint8_t> epoch_labels(const Mask& seconds, const EpochGrid& grid);

// Selected training rows: (neonate index, feature row) with labels +1/-1.
struct TrainingRow {
  std::size_t neonate = 0;
  std::size_t row = 0;
  friend bool operator==(const TrainingRow&, const TrainingRow&) = default;
};

struct TrainingSet {
  std::vector<TrainingRow> rows;
  std::vector<std::int8_t> y;
  std::size_t size() const { return rows.size(); }
  std::size_t n_seizure() const;
};

struct BalanceOptions {
  double ratio = 3.0;          // non-seizure rows per seizure row, at most
  std::size_t max_rows = 3000; // total cap after balancing; 0 disables
  void validate() const;
};

// Every non-bad row of the given neonates, with seeded subsampling of the
// non-seizure class to the balance ratio and of both classes to the cap.
// Selected rows keep their original order.
TrainingSet balanced_training_set(std::span<const LabeledNeonate> neonates, const BalanceOptions& options,
                                  std::uint64_t seed);

// Rows for re-training from new neonates: seizure epochs from the consensus,
// non-seizure epochs only from the second half of each recording. Balanced as
// above with the cap set to `target_rows`. Neonate indices are offset by
// `neonate_offset`.
TrainingSet retraining_set(std::span<const LabeledNeonate> neonates, std::size_t target_rows,
                           std::size_t neonate_offset, std::uint64_t seed);

// Every second row (0, 2, 4, ...) of `base` followed by every second row of `added`.
TrainingSet interleave_halves(const TrainingSet& base, const TrainingSet& added);

struct SdaModel {
  Kernel kernel;
  double c = 1.0;
  DenseMatrix support_vectors;  // normalized
  std::vector<double> alpha;
  std::vector<std::int8_t> labels;
  double bias = 0.0;
  NormStats norm;
  OutlierParams outlier;
  PostprocParams post;
  std::string feature_version{kFeatureVersion};
  std::string montage;
  double hop_s = kDefaultHopSeconds;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  double kkt_violation = 0.0;

  SvmDecision decision() const;
  // Checks 0 <= alpha <= C and sum(alpha y) = 0 within 1e-6 C. Throws ValidationError.
  void validate() const;
};

struct SvmTraining {
  KernelType kernel = KernelType::kRbf;
  double c = 1.0;
  double gamma = 1.0 / 22.0;
  SmoOptions smo;
  std::size_t reference_rows = 4000;
  std::uint64_t seed = 0;
};

// Fits normalization, the SVM and a reference set with default gate settings
// (k = 5, 99.5th percentile). Throws ValidationError for single-class labels.
SdaModel train_svm(std::span<const FeatureVector> rows, std::span<const std::int8_t> y,
                   const SvmTraining& options);
SdaModel train_svm(std::span<const LabeledNeonate> neonates, const TrainingSet& set, const SvmTraining& options);

// Raw SVM margins for every (channel, epoch). `version` names the features in
// `fm`; a mismatch with the model is a ValidationError.
EpochStats decision_statistic(const SdaModel& model, const FeatureMatrix& fm,
                              std::string_view version = kFeatureVersion);
// Per-(channel, epoch) outlier flags under the model's gate.
std::vector<std::uint8_t> outlier_flags(const SdaModel& model, const FeatureMatrix& fm);

std::string model_to_json(const SdaModel& model);
SdaModel model_from_json(const std::string& text);
void save_model(const SdaModel& model, const std::filesystem::path& path);
SdaModel load_model(const std::filesystem::path& path);

struct FoldPlan {
  std::map<std::string, std::size_t> assignments;
  std::size_t n_folds = 0;

  std::size_t fold_of(const std::string& id) const;
  std::vector<std::string> members(std::size_t fold) const;
};

// Ids are sorted, shuffled with the seed and dealt round-robin, so input order
// does not matter and fold sizes differ by at most one.
FoldPlan make_fold_plan(std::vector<std::string> ids, std::size_t n_folds, std::uint64_t seed);

struct HyperGrid {
  std::vector<double> c{0.1, 1.0, 10.0, 100.0};
  std::vector<double> gamma{0.01 / 22.0, 0.1 / 22.0, 1.0 / 22.0};
  std::size_t inner_folds = 3;
  void validate() const;
};

struct TrainOptions {
  KernelType kernel = KernelType::kRbf;
  HyperGrid hyper;
  BalanceOptions balance;
  CalibrationGrid calibration;
  PostprocParams search_post;  // post-processing used while ranking (C, gamma)
  std::size_t reference_rows = 4000;
  std::size_t n_folds = 10;
  SmoOptions smo;
  std::uint64_t seed = 0;
  std::string montage;
  double hop_s = kDefaultHopSeconds;
  void validate() const;
};

struct HyperResult {
  double c = 0.0;
  double gamma = 0.0;
  double kappa = 0.0;
  // (c, gamma, kappa) for every candidate in grid order.
  std::vector<std::array<double, 3>> table;
};

// Ranks (C, gamma) by concatenated kappa of held-out neonates over inner folds
// by neonate, with `search_post` and no gate. Ties keep the first candidate.
HyperResult search_hyperparameters(std::span<const LabeledNeonate> neonates, const TrainingSet& set,
                                   const TrainOptions& options);

struct FoldAudit {
  std::size_t fold = 0;
  std::vector<std::string> test_ids;
  std::vector<std::string> train_ids;
  std::size_t train_rows = 0;
};

struct CvResult {
  std::vector<EpochStats> stats;                   // per neonate, input order
  std::vector<CalibrationRecording> calibration;   // per neonate, input order
  std::vector<SdaModel> fold_models;
  std::vector<FoldAudit> audit;
};

// Out-of-fold decision statistics and gate inputs. Throws ValidationError when
// a fold's training complement has no seizure rows, RuntimeError if the audit
// finds a test neonate among its fold's training rows.
CvResult cross_validate(std::span<const LabeledNeonate> neonates, const TrainingSet& set, const FoldPlan& plan,
                        double c, double gamma, const TrainOptions& options);

// CV outputs post-processed with calibrated gate and post-processing settings.
std::vector<NeonateResult> cv_results(std::span<const LabeledNeonate> neonates, const CvResult& cv,
                                      const CalibrationGrid& grid, const CalibrationResult& calibration);

struct TrainResult {
  SdaModel model;
  HyperResult hyper;
  CalibrationResult calibration;
  FoldPlan plan;
  CvResult cv;
  std::vector<NeonateResult> cv_results;
  TrainingSet set;
};

// Hyperparameter search, cross-validation, gate and post-processing
// calibration, then the final model on the whole set.
TrainResult train(std::span<const LabeledNeonate> neonates, const TrainingSet& set, const TrainOptions& options);
TrainResult train(std::span<const LabeledNeonate> neonates, const TrainOptions& options);

// Re-training on half of the base set and half of a set drawn from `added`.
// The returned neonate list for the result is base followed by added.
TrainResult retrain_augmented(std::span<const LabeledNeonate> base, const TrainingSet& base_set,
                              std::span<const LabeledNeonate> added, const TrainOptions& options);

}  // namespace neoseize
