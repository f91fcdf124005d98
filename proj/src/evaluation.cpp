#include "neoseize/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "neoseize/error.hpp"
#include "neoseize/log.hpp"
#include "neoseize/rng.hpp"

namespace neoseize {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

double kappa_from_counts(const ConfusionCounts& c) {
  const double n = static_cast<double>(c.total());
  if (n == 0.0) throw ValidationError("kappa: empty masks");
  const double po = static_cast<double>(c.tp + c.tn) / n;
  const double a1 = static_cast<double>(c.tp + c.fp);
  const double b1 = static_cast<double>(c.tp + c.fn);
  const double pe = (a1 * b1 + (n - a1) * (n - b1)) / (n * n);
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

// Scores from several units sorted once, so that AUC under any multiset of
// units is a single weighted pass.
struct PooledScores {
  struct Item {
    double score;
    std::uint32_t unit;
    std::uint8_t label;
  };
  std::vector<Item> items;  // descending score

  PooledScores(std::span<const NeonateResult> rs) {
    for (std::size_t u = 0; u < rs.size(); ++u) {
      for (std::size_t s = 0; s < rs[u].stat.size(); ++s) {
        items.push_back({rs[u].stat[s], static_cast<std::uint32_t>(u), rs[u].truth.mask[s]});
      }
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });
  }

  std::optional<double> auc(std::span<const double> weight) const {
    double pos = 0.0, neg = 0.0, area = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
      std::size_t j = i;
      double gp = 0.0, gn = 0.0;
      while (j < items.size() && items[j].score == items[i].score) {
        const double w = weight[items[j].unit];
        (items[j].label ? gp : gn) += w;
        ++j;
      }
      area += gn * (pos + 0.5 * gp);
      pos += gp;
      neg += gn;
      i = j;
    }
    if (pos == 0.0 || neg == 0.0) return std::nullopt;
    return area / (pos * neg);
  }
};

std::vector<double> weights_of(std::span<const std::size_t> idx, std::size_t n) {
  std::vector<double> w(n, 0.0);
  for (auto i : idx) w[i] += 1.0;
  return w;
}

// Average ranks (1-based) of v, and the tie-correction sum of t^3 - t.
std::vector<double> average_ranks(std::span<const double> v, double& tie_sum) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  tie_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
    const auto t = static_cast<double>(j - i);
    tie_sum += t * t * t - t;
    i = j;
  }
  return r;
}

double two_sided_normal(double dev, double var) {
  if (var <= 0.0) return 1.0;
  const double z = std::max(0.0, std::abs(dev) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

// Small pooled samples use the exact permutation distribution of the rank sum,
// conditional on the observed (mid)ranks; the normal approximation is poor there.
constexpr std::size_t kExactRankSumMax = 20;

double exact_rank_sum_p(const std::vector<double>& ranks, std::size_t n1, double r1) {
  // Doubled midranks are integers, so subset sums can be counted exactly.
  const std::size_t n = ranks.size();
  std::vector<std::size_t> r2(n);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    r2[i] = static_cast<std::size_t>(std::lround(2.0 * ranks[i]));
    total += r2[i];
  }
  // count[k][s]: subsets of size k with doubled rank sum s.
  std::vector<std::vector<double>> count(n1 + 1, std::vector<double>(total + 1, 0.0));
  count[0][0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = std::min(n1, i + 1); k >= 1; --k) {
      for (std::size_t s = total; s >= r2[i]; --s) count[k][s] += count[k - 1][s - r2[i]];
    }
  }
  const double mean2 = static_cast<double>(n1) * static_cast<double>(n + 1);
  const double dev2 = std::abs(2.0 * r1 - mean2);
  double extreme = 0.0, all = 0.0;
  for (std::size_t s = 0; s <= total; ++s) {
    all += count[n1][s];
    if (std::abs(static_cast<double>(s) - mean2) >= dev2 - 1e-9) extreme += count[n1][s];
  }
  return std::min(1.0, extreme / all);
}

}  // namespace

double ConfusionCounts::sensitivity() const { return ratio(tp, tp + fn); }
double ConfusionCounts::specificity() const { return ratio(tn, tn + fp); }
double ConfusionCounts::accuracy() const { return ratio(tp + tn, total()); }

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

ConfusionCounts confusion(const Mask& pred, const Mask& truth) {
  if (pred.size() != truth.size()) {
    throw ValidationError("confusion: mask lengths differ (" + std::to_string(pred.size()) + " vs " +
                          std::to_string(truth.size()) + ")");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i]) {
      truth[i] ? ++c.tp : ++c.fp;
    } else {
      truth[i] ? ++c.fn : ++c.tn;
    }
  }
  return c;
}

ConfusionCounts confusion(const AnnotationMask& pred, const AnnotationMask& truth) {
  return confusion(pred.mask, truth.mask);
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) throw ValidationError("auc: score and label lengths differ");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  // Integer counts keep the sweep exact.
  std::uint64_t pos = 0, neg = 0;
  double area2 = 0.0;  // twice the pair count
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (truth[order[j]] ? gp : gn) += 1;
      ++j;
    }
    area2 += static_cast<double>(gn) * static_cast<double>(2 * pos + gp);
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) throw ValidationError("auc: undefined without both classes in the reference");
  return area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double cohen_kappa(const Mask& a, const Mask& b) { return kappa_from_counts(confusion(a, b)); }

double cohen_kappa(const ConfusionCounts& c) { return kappa_from_counts(c); }

EventMetrics event_metrics(std::span<const Event> pred, std::span<const Event> truth, double duration_h) {
  if (!(duration_h > 0.0)) throw ValidationError("event_metrics: duration must be positive");
  auto overlaps = [](const Event& a, const Event& b) {
    return std::min(a.offset_s, b.offset_s) - std::max(a.onset_s, b.onset_s) >= 1.0;
  };
  EventMetrics m;
  m.n_truth = truth.size();
  m.n_pred = pred.size();
  for (const auto& t : truth) {
    if (std::any_of(pred.begin(), pred.end(), [&](const Event& p) { return overlaps(p, t); })) ++m.n_detected;
  }
  for (const auto& p : pred) {
    if (std::none_of(truth.begin(), truth.end(), [&](const Event& t) { return overlaps(p, t); })) {
      ++m.false_detections;
    }
  }
  m.sdr = ratio(m.n_detected, m.n_truth);
  m.fd_per_h = static_cast<double>(m.false_detections) / duration_h;
  return m;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Interval bootstrap_ci(std::size_t n_units, const ResampleStatistic& stat, std::size_t iters, std::uint64_t seed,
                      double level) {
  if (n_units == 0) throw ValidationError("bootstrap: no units to resample");
  if (iters == 0) throw ConfigError("bootstrap: iteration count must be positive");
  auto defined = [](const std::optional<double>& v) { return v.has_value() && !std::isnan(*v); };

  Interval out;
  std::vector<std::size_t> idx(n_units);
  std::iota(idx.begin(), idx.end(), 0);
  const auto point = stat(idx);
  out.point = defined(point) ? *point : kNaN;

  constexpr std::size_t kMaxRedraws = 1000;
  std::vector<double> values(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    Rng rng = substream(seed, it);
    std::size_t tries = 0;
    while (true) {
      for (auto& i : idx) i = uniform_index(rng, n_units);
      const auto v = stat(idx);
      if (defined(v)) {
        values[it] = *v;
        break;
      }
      ++out.redraws;
      if (++tries > kMaxRedraws) {
        throw RuntimeError("bootstrap: statistic undefined on " + std::to_string(kMaxRedraws) +
                           " consecutive resamples");
      }
    }
  }
  if (out.redraws > 0) log::warn("bootstrap: " + std::to_string(out.redraws) + " undefined resamples redrawn");
  const double a = (1.0 - level) / 2.0;
  out.lo = quantile(values, a);
  out.hi = quantile(values, 1.0 - a);
  out.median = quantile(values, 0.5);
  return out;
}

std::vector<DeltaKappaRow> noninferiority_delta_kappa(std::span<const AnnotationMask> sda,
                                                      std::span<const AnnotationMask> e1,
                                                      std::span<const AnnotationMask> e2, std::size_t iters,
                                                      std::uint64_t seed) {
  const std::size_t n = sda.size();
  if (n == 0 || e1.size() != n || e2.size() != n) {
    throw ValidationError("non-inferiority: SDA, expert 1 and expert 2 must cover the same neonates");
  }
  std::vector<ConfusionCounts> hh(n), s1(n), s2(n);
  for (std::size_t i = 0; i < n; ++i) {
    hh[i] = confusion(e1[i], e2[i]);
    s1[i] = confusion(sda[i], e1[i]);
    s2[i] = confusion(sda[i], e2[i]);
  }
  auto pooled = [](const std::vector<ConfusionCounts>& c, std::span<const std::size_t> idx) {
    ConfusionCounts s;
    for (auto i : idx) s += c[i];
    return s;
  };
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);

  std::vector<DeltaKappaRow> rows;
  for (int which = 1; which <= 2; ++which) {
    const auto& sc = which == 1 ? s1 : s2;
    DeltaKappaRow r;
    r.expert = which == 1 ? "E1" : "E2";
    r.kappa_human = kappa_from_counts(pooled(hh, all));
    r.kappa_sda = kappa_from_counts(pooled(sc, all));
    // Same seed for both rows: the pairings see identical resamples.
    r.delta = bootstrap_ci(
        n,
        [&](std::span<const std::size_t> idx) -> std::optional<double> {
          return kappa_from_counts(pooled(hh, idx)) - kappa_from_counts(pooled(sc, idx));
        },
        iters, seed);
    if (r.delta.lo > 0.0) {
      r.verdict = "inferior";
    } else if (r.delta.hi < 0.0) {
      r.verdict = "superior";
    } else {
      r.verdict = "non-inferior";
    }
    rows.push_back(r);
  }
  return rows;
}

double wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon: samples must be paired");
  std::vector<double> d, mag;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (v != 0.0) {
      d.push_back(v);
      mag.push_back(std::abs(v));
    }
  }
  if (d.empty()) return 1.0;
  if (d.size() < 5) {
    throw ValidationError("wilcoxon: need at least 5 non-zero differences, got " + std::to_string(d.size()));
  }
  double ties = 0.0;
  const auto r = average_ranks(mag, ties);
  double w_plus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0.0) w_plus += r[i];
  }
  const auto n = static_cast<double>(d.size());
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
  return two_sided_normal(w_plus - mean, var);
}

double mann_whitney_u(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw ValidationError("mann-whitney: both samples must be nonempty");
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  double ties = 0.0;
  const auto r = average_ranks(all, ties);
  double r1 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) r1 += r[i];
  const auto n1 = static_cast<double>(x.size());
  const auto n2 = static_cast<double>(y.size());
  const double n = n1 + n2;
  if (all.size() <= kExactRankSumMax) return exact_rank_sum_p(r, x.size(), r1);
  const double u = r1 - n1 * (n1 + 1.0) / 2.0;
  const double mean = n1 * n2 / 2.0;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  return two_sided_normal(u - mean, var);
}

Mask concatenate(std::span<const AnnotationMask> masks, std::span<const std::size_t> order) {
  Mask out;
  for (auto i : order) out.insert(out.end(), masks[i].mask.begin(), masks[i].mask.end());
  return out;
}

MetricSummary summarize(std::span<const double> per_neonate) {
  std::vector<double> v;
  for (double x : per_neonate) {
    if (!std::isnan(x)) v.push_back(x);
  }
  MetricSummary s;
  s.n = v.size();
  if (v.empty()) {
    s.median = s.q1 = s.q3 = kNaN;
    return s;
  }
  s.median = quantile(v, 0.5);
  s.q1 = quantile(v, 0.25);
  s.q3 = quantile(v, 0.75);
  return s;
}

NeonateMetrics neonate_metrics(const NeonateResult& r) {
  if (r.pred.mask.size() != r.truth.mask.size() || r.stat.size() != r.truth.mask.size()) {
    throw ValidationError("evaluate: '" + r.id + "' has mismatched mask/statistic lengths");
  }
  NeonateMetrics m;
  m.id = r.id;
  m.counts = confusion(r.pred, r.truth);
  m.duration_h = static_cast<double>(r.truth.mask.size()) / 3600.0;
  if (m.duration_h <= 0.0) throw ValidationError("evaluate: '" + r.id + "' is empty");
  // Event extraction over masks: maximal runs of ones.
  auto runs = [](const Mask& mk) {
    std::vector<Event> ev;
    for (std::size_t s = 0; s < mk.size();) {
      if (!mk[s]) {
        ++s;
        continue;
      }
      std::size_t e = s;
      while (e < mk.size() && mk[e]) ++e;
      ev.push_back({static_cast<double>(s), static_cast<double>(e)});
      s = e;
    }
    return ev;
  };
  const auto pe = runs(r.pred.mask);
  const auto te = runs(r.truth.mask);
  m.events = event_metrics(pe, te, m.duration_h);
  if (m.counts.tp + m.counts.fn > 0 && m.counts.tn + m.counts.fp > 0) m.auc = auc(r.stat, r.truth.mask);
  m.sensitivity = m.counts.sensitivity();
  m.specificity = m.counts.specificity();
  m.kappa = kappa_from_counts(m.counts);
  return m;
}

MetricsReport evaluate(std::span<const NeonateResult> results, std::size_t iters, std::uint64_t seed) {
  if (results.empty()) throw ValidationError("evaluate: no neonates");
  MetricsReport rep;
  rep.iters = iters;
  rep.seed = seed;
  rep.n_total = results.size();
  std::vector<double> aucs, sens, spec;
  for (const auto& r : results) {
    rep.per_neonate.push_back(neonate_metrics(r));
    const auto& m = rep.per_neonate.back();
    aucs.push_back(m.auc ? *m.auc : kNaN);
    sens.push_back(m.sensitivity);
    spec.push_back(m.specificity);
    if (m.counts.tp + m.counts.fn > 0) ++rep.n_seizure;
  }
  rep.auc = summarize(aucs);
  rep.sensitivity = summarize(sens);
  rep.specificity = summarize(spec);

  const std::size_t n = results.size();
  const auto& pm = rep.per_neonate;
  const PooledScores pooled(results);
  // Distinct offsets keep the four intervals on independent streams.
  rep.c_auc = bootstrap_ci(
      n, [&](std::span<const std::size_t> idx) { return pooled.auc(weights_of(idx, n)); }, iters, seed);
  rep.c_sdr = bootstrap_ci(
      n,
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        std::size_t det = 0, tot = 0;
        for (auto i : idx) {
          det += pm[i].events.n_detected;
          tot += pm[i].events.n_truth;
        }
        if (tot == 0) return std::nullopt;
        return static_cast<double>(det) / static_cast<double>(tot);
      },
      iters, seed + 1);
  rep.c_fd_per_h = bootstrap_ci(
      n,
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        double fd = 0.0, h = 0.0;
        for (auto i : idx) {
          fd += static_cast<double>(pm[i].events.false_detections);
          h += pm[i].duration_h;
        }
        return fd / h;
      },
      iters, seed + 2);
  rep.c_kappa = bootstrap_ci(
      n,
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        ConfusionCounts c;
        for (auto i : idx) c += pm[i].counts;
        return kappa_from_counts(c);
      },
      iters, seed + 3);
  return rep;
}

double concatenated_kappa(std::span<const NeonateResult> results) {
  ConfusionCounts c;
  for (const auto& r : results) c += confusion(r.pred, r.truth);
  return kappa_from_counts(c);
}

double concatenated_auc(std::span<const NeonateResult> results) {
  const PooledScores pooled(results);
  const auto v = pooled.auc(std::vector<double>(results.size(), 1.0));
  if (!v) throw ValidationError("auc: undefined without both classes in the reference");
  return *v;
}

}  // namespace neoseize
