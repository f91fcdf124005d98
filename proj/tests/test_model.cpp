#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <numeric>
#include <set>

#include "neoseize/error.hpp"
#include "neoseize/model.hpp"
#include "test_util.hpp"

using namespace neoseize;

namespace {

// A neonate with two channels of Gaussian features; epochs mostly inside
// [sz_on, sz_off) are shifted along a few features.
LabeledNeonate fake_neonate(std::mt19937_64& rng, const std::string& id, std::size_t duration, std::size_t sz_on,
                            std::size_t sz_off, double shift = 3.0, std::size_t shifted_feature = 0) {
  LabeledNeonate n;
  n.id = id;
  n.grid = make_grid(static_cast<double>(duration));
  n.consensus.assign(duration, 0);
  for (std::size_t s = sz_on; s < sz_off && s < duration; ++s) n.consensus[s] = 1;
  const auto labels = epoch_labels(n.consensus, n.grid);
  n.features = {id, 2, n.grid.n_epochs, {}};
  std::normal_distribution<double> nd;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t e = 0; e < n.grid.n_epochs; ++e) {
      FeatureVector v;
      for (auto& x : v.values) x = nd(rng);
      if (labels[e]) {
        for (std::size_t j = shifted_feature; j < shifted_feature + 3; ++j) v.values[j] += shift;
      }
      v.max_amp = 50.0;
      n.features.rows.push_back(v);
    }
  }
  return n;
}

std::vector<LabeledNeonate> fake_corpus(std::size_t n, std::uint64_t seed, std::size_t duration = 600) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledNeonate> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t on = 100 + 37 * i % 200;
    out.push_back(fake_neonate(rng, "n" + std::to_string(i), duration, on, on + 120));
  }
  return out;
}

TrainOptions small_options() {
  TrainOptions o;
  o.hyper.c = {0.1, 1.0};
  o.hyper.gamma = {0.1 / 22.0, 1.0 / 22.0};
  o.calibration.k = {3, 5};
  o.calibration.quantile = {99.0, 99.9};
  o.calibration.amp_max = {500.0};
  o.calibration.threshold = {-0.25, 0.0, 0.25};
  o.seed = 11;
  return o;
}

SdaModel hand_model() {
  SdaModel m;
  m.kernel = {KernelType::kRbf, 1.0};
  m.c = 1.0;
  m.support_vectors = DenseMatrix(0, kNumFeatures);
  std::vector<double> a(kNumFeatures, 0.0), b(kNumFeatures, 0.0);
  b[0] = 1.0;
  m.support_vectors.push_row(a);
  m.support_vectors.push_row(b);
  m.alpha = {1.0, 1.0};
  m.labels = {1, -1};
  m.bias = 0.5;
  m.norm.sd.fill(1.0);
  m.outlier.reference = m.support_vectors;
  m.outlier.k = 1;
  m.outlier.d_max = 1.0;
  return m;
}

FeatureMatrix one_row(const std::vector<double>& v) {
  FeatureMatrix fm{"x", 1, 1, {}};
  FeatureVector f;
  std::copy(v.begin(), v.end(), f.values.begin());
  fm.rows.push_back(f);
  return fm;
}

}  // namespace

TEST_CASE("epoch labels use a half-epoch rule") {
  const EpochGrid g = make_grid(32.0);  // epochs start at 0, 4, 8, 12, 16
  Mask m(32, 0);
  for (std::size_t s = 8; s < 16; ++s) m[s] = 1;  // 8 of epoch 0's 16 seconds
  auto l = epoch_labels(m, g);
  CHECK(l == std::vector<std::uint8_t>{1, 1, 1, 0, 0});
  m[8] = 0;  // 7 seconds left in each of the first three epochs
  l = epoch_labels(m, g);
  CHECK(l == std::vector<std::uint8_t>{0, 0, 0, 0, 0});
}

TEST_CASE("balanced training set") {
  auto corpus = fake_corpus(4, 1);
  corpus[1].bad.assign(corpus[1].features.rows.size(), 0);
  corpus[1].bad[0] = 1;
  const auto a = balanced_training_set(corpus, {3.0, 0}, 5);
  const auto b = balanced_training_set(corpus, {3.0, 0}, 5);
  CHECK(a.rows == b.rows);
  const std::size_t pos = a.n_seizure();
  CHECK(pos > 0);
  CHECK(a.size() - pos == 3 * pos);
  for (std::size_t i = 1; i < a.size(); ++i) {
    const bool ordered = a.rows[i - 1].neonate < a.rows[i].neonate ||
                         (a.rows[i - 1].neonate == a.rows[i].neonate && a.rows[i - 1].row < a.rows[i].row);
    CHECK(ordered);
  }
  CHECK(std::find(a.rows.begin(), a.rows.end(), TrainingRow{1, 0}) == a.rows.end());
  // Labels agree with the half-epoch rule.
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& n = corpus[a.rows[i].neonate];
    const auto l = epoch_labels(n.consensus, n.grid);
    CHECK((l[a.rows[i].row % n.features.n_epochs] ? 1 : -1) == a.y[i]);
  }
  const auto capped = balanced_training_set(corpus, {3.0, 100}, 5);
  CHECK(capped.size() == 100);
  CHECK(capped.n_seizure() == 25);
  CHECK_THROWS_AS(balanced_training_set(corpus, {0.0, 0}, 5), ConfigError);
}

TEST_CASE("hand model and decision statistic") {
  const SdaModel m = hand_model();
  m.validate();
  std::vector<double> q(kNumFeatures, 0.0);
  const auto s = decision_statistic(m, one_row(q));
  CHECK(s.values[0] == doctest::Approx(1.0 - std::exp(-1.0) + 0.5).epsilon(1e-12));
  CHECK(s.values[0] == doctest::Approx(1.1321).epsilon(1e-4));
  // Far from every support vector the margin is the bias.
  q[3] = 100.0;
  CHECK(decision_statistic(m, one_row(q)).values[0] == 0.5);
  CHECK_THROWS_AS(decision_statistic(m, one_row(q), "other-features.v9"), ValidationError);

  SdaModel bad = m;
  bad.alpha = {1.0, 0.5};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.alpha = {2.0, 2.0};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("trained model invariants and self-consistency") {
  std::mt19937_64 rng(2);
  std::vector<FeatureVector> rows;
  std::vector<std::int8_t> y;
  std::normal_distribution<double> nd;
  for (int i = 0; i < 200; ++i) {
    FeatureVector v;
    for (auto& x : v.values) x = nd(rng) * 2.0 + 5.0;
    const bool pos = i % 3 == 0;
    if (pos) v.values[1] += 3.0;
    rows.push_back(v);
    y.push_back(pos ? 1 : -1);
  }
  SvmTraining t;
  t.c = 1.0;
  t.gamma = 0.5 / 22.0;
  t.smo.tolerance = 1e-6;
  const SdaModel m = train_svm(rows, y, t);
  m.validate();
  CHECK(m.n_train == 200);
  double balance = 0.0;
  for (std::size_t i = 0; i < m.alpha.size(); ++i) balance += m.alpha[i] * m.labels[i];
  CHECK(std::abs(balance) <= 1e-6 * m.c);

  // A bound support vector fed back through normalization reproduces the
  // margin computed on the stored (normalized) vector.
  const auto d = m.decision();
  std::size_t bound = m.alpha.size();
  for (std::size_t i = 0; i < m.alpha.size(); ++i) {
    if (m.alpha[i] == m.c) bound = i;
  }
  REQUIRE(bound < m.alpha.size());
  FeatureVector sv;
  const auto r = m.support_vectors.row(bound);
  std::copy(r.begin(), r.end(), sv.values.begin());
  FeatureMatrix fm{"x", 1, 1, {denormalize(sv, m.norm)}};
  const double stored = d(r);
  CHECK(std::abs(decision_statistic(m, fm).values[0] - stored) <= 1e-9);
  // Bound support vectors sit on or inside the margin.
  CHECK(m.labels[bound] * stored <= 1.0 + 1e-3);

  // Row permutation permutes the outputs.
  FeatureMatrix all{"all", 1, rows.size(), rows};
  FeatureMatrix perm = all;
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  for (std::size_t i = 0; i < idx.size(); ++i) perm.rows[i] = all.rows[idx[i]];
  const auto s_all = decision_statistic(m, all);
  const auto s_perm = decision_statistic(m, perm);
  for (std::size_t i = 0; i < idx.size(); ++i) CHECK(s_perm.values[i] == s_all.values[idx[i]]);

  // Training rows are mostly inliers; a distant probe is an outlier.
  const auto flags = outlier_flags(m, all);
  CHECK(std::count(flags.begin(), flags.end(), 1) < 10);
  FeatureMatrix far = one_row(std::vector<double>(kNumFeatures, 1e3));
  CHECK(outlier_flags(m, far)[0] == 1);

  std::vector<std::int8_t> one_class(rows.size(), -1);
  CHECK_THROWS_WITH_AS(train_svm(rows, one_class, t), doctest::Contains("single-class"), ValidationError);
}

TEST_CASE("model file round trip") {
  testutil::TempDir dir;
  auto corpus = fake_corpus(3, 4);
  const auto set = balanced_training_set(corpus, {}, 1);
  SdaModel m = train_svm(corpus, set, {});
  m.montage = "F3-P3,F4-P4";
  m.seed = 77;
  save_model(m, dir / "m.json");
  const SdaModel back = load_model(dir / "m.json");
  CHECK(model_to_json(back) == model_to_json(m));
  CHECK(back.seed == 77);
  const auto a = decision_statistic(m, corpus[0].features);
  const auto b = decision_statistic(back, corpus[0].features);
  CHECK(a.values == b.values);

  testutil::write_text(dir / "bad.json", "{\"format\": \"neoseize-model\"}");
  CHECK_THROWS_AS(load_model(dir / "bad.json"), FormatError);
  testutil::write_text(dir / "junk.json", "not json");
  CHECK_THROWS_AS(load_model(dir / "junk.json"), FormatError);
  CHECK_THROWS_AS(load_model(dir / "missing.json"), ValidationError);
}

TEST_CASE("fold plans") {
  std::vector<std::string> ids;
  for (int i = 0; i < 23; ++i) ids.push_back("id" + std::to_string(i));
  const auto p = make_fold_plan(ids, 10, 3);
  std::vector<std::size_t> sizes(10, 0);
  for (const auto& [id, f] : p.assignments) ++sizes[f];
  CHECK(p.assignments.size() == 23);
  CHECK(*std::min_element(sizes.begin(), sizes.end()) >= 2);
  CHECK(*std::max_element(sizes.begin(), sizes.end()) <= 3);

  auto shuffled = ids;
  std::mt19937_64 rng(9);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(make_fold_plan(shuffled, 10, 3).assignments == p.assignments);
  CHECK(make_fold_plan(ids, 10, 4).assignments != p.assignments);

  // Ten neonates in ten folds is leave-one-subject-out.
  const std::vector<std::string> ten(ids.begin(), ids.begin() + 10);
  const auto loso = make_fold_plan(ten, 10, 1);
  std::set<std::size_t> folds;
  for (const auto& [id, f] : loso.assignments) folds.insert(f);
  CHECK(folds.size() == 10);
  for (std::size_t f = 0; f < 10; ++f) CHECK(loso.members(f).size() == 1);

  CHECK_THROWS_AS(make_fold_plan(ten, 11, 1), ValidationError);
  CHECK_THROWS_AS(make_fold_plan({"a", "a", "b"}, 2, 1), ValidationError);
  CHECK_THROWS_AS(loso.fold_of("nobody"), ValidationError);
}

TEST_CASE("cross-validation never trains on its test neonates") {
  const auto corpus = fake_corpus(6, 5);
  const auto set = balanced_training_set(corpus, {}, 1);
  TrainOptions o = small_options();
  std::vector<std::string> ids;
  for (const auto& n : corpus) ids.push_back(n.id);
  const auto plan = make_fold_plan(ids, 3, 2);
  const auto cv = cross_validate(corpus, set, plan, 1.0, 1.0 / 22.0, o);
  REQUIRE(cv.audit.size() == 3);
  std::multiset<std::string> tested;
  for (std::size_t f = 0; f < cv.audit.size(); ++f) {
    const auto& a = cv.audit[f];
    for (const auto& id : a.test_ids) {
      tested.insert(id);
      CHECK(std::find(a.train_ids.begin(), a.train_ids.end(), id) == a.train_ids.end());
    }
    CHECK(a.train_ids.size() + a.test_ids.size() == 6);
  }
  CHECK(tested == std::multiset<std::string>(ids.begin(), ids.end()));
  // Out-of-fold statistics come from the fold's model.
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::size_t f = plan.fold_of(corpus[i].id);
    CHECK(cv.stats[i].values == decision_statistic(cv.fold_models[f], corpus[i].features).values);
    CHECK(cv.calibration[i].knn.size() == o.calibration.k.size());
    CHECK(cv.calibration[i].truth == corpus[i].consensus);
  }

  // A fold whose complement has no seizure is rejected.
  std::mt19937_64 rng(1);
  std::vector<LabeledNeonate> one_sz{fake_neonate(rng, "a", 600, 100, 220), fake_neonate(rng, "b", 600, 0, 0),
                                     fake_neonate(rng, "c", 600, 0, 0)};
  const auto set1 = balanced_training_set(one_sz, {}, 1);
  const auto loso = make_fold_plan({"a", "b", "c"}, 3, 1);
  CHECK_THROWS_WITH_AS(cross_validate(one_sz, set1, loso, 1.0, 1.0 / 22.0, o),
                       doctest::Contains("no seizure epochs"), ValidationError);
}

TEST_CASE("training pipeline is deterministic and detects held-out seizures") {
  const auto corpus = fake_corpus(6, 8);
  const TrainOptions o = small_options();
  const auto a = train(corpus, o);
  const auto b = train(corpus, o);
  CHECK(model_to_json(a.model) == model_to_json(b.model));
  CHECK(a.hyper.table.size() == 4);
  CHECK(a.cv_results.size() == 6);
  CHECK(concatenated_auc(a.cv_results) > 0.95);
  CHECK(concatenated_kappa(a.cv_results) > 0.7);
  a.model.validate();

  std::vector<LabeledNeonate> no_sz;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 3; ++i) no_sz.push_back(fake_neonate(rng, "q" + std::to_string(i), 600, 0, 0));
  CHECK_THROWS_WITH_AS(train(no_sz, o), doctest::Contains("single-class"), ValidationError);
}

TEST_CASE("re-training sets") {
  std::mt19937_64 rng(12);
  const auto base = fake_corpus(4, 9);
  // New neonates: seizures shifted along different features, seizure in the first half.
  std::vector<LabeledNeonate> added;
  for (int i = 0; i < 2; ++i) added.push_back(fake_neonate(rng, "new" + std::to_string(i), 600, 60, 200, 4.0, 10));

  const auto base_set = balanced_training_set(base, {}, 1);
  const auto new_set = retraining_set(added, base_set.size(), base.size(), 2);
  REQUIRE(new_set.size() > 0);
  for (std::size_t i = 0; i < new_set.size(); ++i) {
    const auto& r = new_set.rows[i];
    REQUIRE(r.neonate >= base.size());
    const auto& n = added[r.neonate - base.size()];
    const std::size_t e = r.row % n.features.n_epochs;
    if (new_set.y[i] == -1) CHECK(n.grid.start_s(e) >= 300.0);
    else CHECK(epoch_labels(n.consensus, n.grid)[e] == 1);
  }

  // Sizes: half of each.
  TrainingSet two_n;
  for (std::size_t i = 0; i < 40; ++i) {
    two_n.rows.push_back({0, i});
    two_n.y.push_back(i % 4 == 0 ? 1 : -1);
  }
  CHECK(interleave_halves(two_n, two_n).size() == 40);
  const auto mixed = interleave_halves(two_n, two_n);
  CHECK(mixed.rows[0] == two_n.rows[0]);
  CHECK(mixed.rows[1] == two_n.rows[2]);
  CHECK(mixed.rows[20] == two_n.rows[0]);

  // New morphology shows up among the support vectors.
  std::vector<LabeledNeonate> all = base;
  all.insert(all.end(), added.begin(), added.end());
  const auto combined = interleave_halves(base_set, new_set);
  const SdaModel m = train_svm(all, combined, {});
  std::size_t from_new = 0;
  for (std::size_t s = 0; s < m.support_vectors.rows; ++s) {
    for (std::size_t i = 0; i < combined.size(); ++i) {
      if (combined.rows[i].neonate < base.size()) continue;
      const auto v = normalize(all[combined.rows[i].neonate].features.rows[combined.rows[i].row], m.norm);
      if (std::equal(v.values.begin(), v.values.end(), m.support_vectors.row(s).begin())) ++from_new;
    }
  }
  CHECK(from_new > 0);

  const auto r = retrain_augmented(base, base_set, added, small_options());
  CHECK(r.set.size() == (base_set.size() + 1) / 2 + (new_set.size() + 1) / 2);
  CHECK(r.cv_results.size() == 6);
  CHECK_THROWS_AS(retrain_augmented(base, base_set, {}, small_options()), ValidationError);
}
