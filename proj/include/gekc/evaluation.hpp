#pragma once

// Filtered ranking metrics, semantic consistency, kernel triple distance and
// calibration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

#include "gekc/constraints.hpp"
#include "gekc/kg.hpp"
#include "gekc/model.hpp"
#include "gekc/rng.hpp"

namespace gekc {

// Ranking keys over all candidates of a slot given a two-fixed context.
// `drops_zeros` marks scorers whose -inf candidates are never predicted at
// all (constraint products) rather than merely ranked last.
struct SlotScorer {
  std::function<std::vector<double>(Slot, const Pattern&)> keys;
  bool drops_zeros = false;
};

inline SlotScorer make_scorer(const Model& m) {
  return {[&m](Slot t, const Pattern& ctx) { return candidate_scores(m, t, ctx); },
          false};
}

inline SlotScorer make_scorer(const ConstrainedModel& cm) {
  return {[&cm](Slot t, const Pattern& ctx) { return cm.candidate_scores(t, ctx); },
          true};
}

// Fractional rank of the true completion among the non-filtered candidates:
// 1 + #{strictly better} + #{ties excluding self}/2. The true completion is
// never filtered out.
inline double rank_query(std::span<const double> keys, std::int32_t true_id,
                         const std::function<bool(std::int32_t)>& filtered_out) {
  const double key = keys[std::size_t(true_id)];
  std::size_t greater = 0, ties = 0;
  for (std::size_t c = 0; c < keys.size(); ++c) {
    if (std::int32_t(c) == true_id) continue;
    if (filtered_out && filtered_out(std::int32_t(c))) continue;
    if (keys[c] > key) ++greater;
    else if (keys[c] == key) ++ties;
  }
  return 1.0 + double(greater) + double(ties) / 2.0;
}

struct RankingReport {
  double mrr = 0.0;
  std::map<std::size_t, double> hits;
  std::map<std::size_t, double> sem;
  std::size_t query_count = 0;
};

// MRR and Hits@k over both query directions under the filtered protocol.
inline RankingReport mrr_hits(const SlotScorer& scorer,
                              std::span<const Triple> test_triples,
                              const FilterIndex& filter,
                              const std::vector<std::size_t>& ks = {1, 3, 10}) {
  if (test_triples.empty()) throw ArgumentError("mrr_hits: empty test set");
  RankingReport rep;
  for (std::size_t k : ks) rep.hits[k] = 0.0;
  for (const Triple& t : test_triples) {
    auto okeys = scorer.keys(Slot::Object, Pattern{.s = t.subject, .r = t.predicate});
    double ro = rank_query(okeys, t.object, [&](std::int32_t c) {
      return c != t.object && filter.known_object(t.subject, t.predicate, c);
    });
    auto skeys = scorer.keys(Slot::Subject, Pattern{.r = t.predicate, .o = t.object});
    double rs = rank_query(skeys, t.subject, [&](std::int32_t c) {
      return c != t.subject && filter.known_subject(c, t.predicate, t.object);
    });
    rep.mrr += 1.0 / ro + 1.0 / rs;
    for (std::size_t k : ks)
      rep.hits[k] += double(ro <= double(k)) + double(rs <= double(k));
    rep.query_count += 2;
  }
  rep.mrr /= double(rep.query_count);
  for (auto& [k, v] : rep.hits) v /= double(rep.query_count);
  return rep;
}

// Fraction of the top-k ranked candidates whose completed triples satisfy K,
// averaged over both directions. Ranking uses the unconstrained (filtered)
// candidate list; scorers that drop zero-mass candidates simply never place
// them in the list.
inline std::map<std::size_t, double> sem_at_k(const SlotScorer& scorer,
                                              std::span<const Triple> test_triples,
                                              const ConstraintCircuit& circuit,
                                              const FilterIndex& filter,
                                              const std::vector<std::size_t>& ks) {
  if (test_triples.empty()) throw ArgumentError("sem_at_k: empty test set");
  std::map<std::size_t, double> sem;
  for (std::size_t k : ks) sem[k] = 0.0;
  std::size_t queries = 0;
  const double ninf = -std::numeric_limits<double>::infinity();
  auto run_direction = [&](const Triple& t, Slot target) {
    Pattern ctx = target == Slot::Object ? Pattern{.s = t.subject, .r = t.predicate}
                                         : Pattern{.r = t.predicate, .o = t.object};
    auto keys = scorer.keys(target, ctx);
    std::vector<std::int32_t> cands;
    cands.reserve(keys.size());
    std::int32_t true_id = target == Slot::Object ? t.object : t.subject;
    for (std::size_t c = 0; c < keys.size(); ++c) {
      std::int32_t cc = std::int32_t(c);
      bool known = target == Slot::Object
                       ? filter.known_object(t.subject, t.predicate, cc)
                       : filter.known_subject(cc, t.predicate, t.object);
      if (cc != true_id && known) continue;
      if (scorer.drops_zeros && keys[c] == ninf) continue;
      cands.push_back(cc);
    }
    std::sort(cands.begin(), cands.end(), [&](std::int32_t a, std::int32_t b) {
      if (keys[a] != keys[b]) return keys[a] > keys[b];
      return a < b;
    });
    for (std::size_t k : ks) {
      std::size_t top = std::min(k, cands.size());
      if (top == 0) continue;
      std::size_t ok = 0;
      for (std::size_t i = 0; i < top; ++i) {
        Triple cand = t;
        (target == Slot::Object ? cand.object : cand.subject) = cands[i];
        if (circuit.satisfies(cand)) ++ok;
      }
      sem[k] += double(ok) / double(top);
    }
    ++queries;
  };
  for (const Triple& t : test_triples) {
    run_direction(t, Slot::Object);
    run_direction(t, Slot::Subject);
  }
  for (auto& [k, v] : sem) v /= double(queries);
  return sem;
}

// ---------------------------------------------------------------------------
// Kernel triple distance

// psi: the product-unit outputs of the reference ComplEx circuit -- the four
// componentwise trilinear vectors of the real-part expansion, concatenated
// and L2-normalised (h = 4d).
inline std::vector<double> ktd_embed(const Model& ref, const Triple& t) {
  if (ref.family != ModelFamily::ComplEx)
    throw ArgumentError("ktd reference embedder must be a ComplEx model");
  const auto& p = ref.cx();
  const std::size_t d = p.e_re.cols();
  std::vector<double> re_s(d), im_s(d), re_r(d), im_r(d), re_o(d), im_o(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (ref.kind == ModelKind::NonNegative) {
      re_s[i] = std::exp(p.e_re(t.subject, i));
      im_s[i] = re_s[i] * sigmoid(p.theta(t.subject, i));
      re_r[i] = std::exp(p.w_re(t.predicate, i));
      im_r[i] = re_r[i] * sigmoid(p.gamma(t.predicate, i));
      re_o[i] = std::exp(p.e_re(t.object, i));
      im_o[i] = re_o[i] * sigmoid(p.theta(t.object, i));
    } else {
      re_s[i] = p.e_re(t.subject, i);
      im_s[i] = p.e_im(t.subject, i);
      re_r[i] = p.w_re(t.predicate, i);
      im_r[i] = p.w_im(t.predicate, i);
      re_o[i] = p.e_re(t.object, i);
      im_o[i] = p.e_im(t.object, i);
    }
  }
  std::vector<double> psi(4 * d);
  for (std::size_t i = 0; i < d; ++i) {
    psi[i] = re_s[i] * re_r[i] * re_o[i];
    psi[d + i] = im_s[i] * re_r[i] * im_o[i];
    psi[2 * d + i] = re_s[i] * im_r[i] * im_o[i];
    psi[3 * d + i] = im_s[i] * im_r[i] * re_o[i];
  }
  double norm = std::sqrt(dot(psi, psi));
  if (norm > 0.0)
    for (double& x : psi) x /= norm;
  return psi;
}

inline double poly_kernel(std::span<const double> x, std::span<const double> y) {
  double v = dot(x, y) + 1.0;
  return v * v * v;
}

// Unbiased squared-MMD estimator with the cubic polynomial kernel.
inline double mmd2_unbiased(const std::vector<std::vector<double>>& xs,
                            const std::vector<std::vector<double>>& ys) {
  const std::size_t m = xs.size(), n = ys.size();
  if (m < 2 || n < 2) throw ArgumentError("mmd2: need at least two samples per side");
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) kxx += poly_kernel(xs[i], xs[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) kyy += poly_kernel(ys[i], ys[j]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) kxy += poly_kernel(xs[i], ys[j]);
  return kxx / double(m * (m - 1)) + kyy / double(n * (n - 1)) -
         2.0 * kxy / double(m * n);
}

struct KtdReport {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t batch_size = 0;
  std::size_t repeats = 0;
};

inline KtdReport ktd(const Model& ref, std::span<const Triple> set_a,
                     std::span<const Triple> set_b, std::size_t batch,
                     std::size_t repeats, std::uint64_t seed) {
  if (batch > set_a.size() || batch > set_b.size())
    throw ArgumentError("ktd: batch larger than a triple set");
  if (repeats < 1) throw ArgumentError("ktd: repeats must be >= 1");
  CounterRng rng(seed);
  auto draw = [&](std::span<const Triple> set, CounterRng& r) {
    std::vector<std::size_t> idx(set.size());
    std::iota(idx.begin(), idx.end(), 0);
    // partial Fisher-Yates: first `batch` entries are a uniform subset
    for (std::size_t i = 0; i < batch; ++i) {
      std::size_t j = i + std::size_t(r.next_below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<std::vector<double>> em(batch);
    for (std::size_t i = 0; i < batch; ++i) em[i] = ktd_embed(ref, set[idx[i]]);
    return em;
  };
  std::vector<double> values(repeats);
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    CounterRng r = rng.stream(rep);
    auto xs = draw(set_a, r);
    auto ys = draw(set_b, r);
    values[rep] = mmd2_unbiased(xs, ys);
  }
  KtdReport rep;
  rep.batch_size = batch;
  rep.repeats = repeats;
  for (double v : values) rep.mean += v / double(repeats);
  for (double v : values) rep.stddev += (v - rep.mean) * (v - rep.mean);
  rep.stddev = repeats > 1 ? std::sqrt(rep.stddev / double(repeats - 1)) : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationBin {
  double mean_prob = 0.0;
  double frequency = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;
  std::string normalization;
  std::size_t skipped = 0;
};

// ECE over b equal-width bins, averaging |p_j - f_j| on non-empty bins only.
inline CalibrationReport calibration_from_pairs(
    std::span<const std::pair<double, bool>> pairs, std::size_t b) {
  if (b < 2) throw ArgumentError("calibration: need at least 2 bins");
  CalibrationReport rep;
  rep.bins.assign(b, {});
  for (const auto& [prob, label] : pairs) {
    std::size_t j = std::min(b - 1, std::size_t(prob * double(b)));
    rep.bins[j].mean_prob += prob;
    rep.bins[j].frequency += label ? 1.0 : 0.0;
    rep.bins[j].count += 1;
  }
  std::size_t nonempty = 0;
  for (auto& bin : rep.bins) {
    if (bin.count == 0) continue;
    bin.mean_prob /= double(bin.count);
    bin.frequency /= double(bin.count);
    rep.ece += std::fabs(bin.mean_prob - bin.frequency);
    ++nonempty;
  }
  if (nonempty > 0) rep.ece /= double(nonempty);
  return rep;
}

enum class CalibrationNorm { Logistic, MinMax };

// Raw value fed into the probability map: log phi for GeKC kinds, phi for
// energy-based models.
inline double calibration_raw(const Model& m, const Triple& t) {
  return m.is_gekc() ? log_score(m, t) : score(m, t);
}

// Pairs each test triple with one unobserved perturbation (s, r, o~) where o~
// has appeared as an object of r in training. Probabilities are the logistic
// of the raw value, or its min-max normalisation over training triples.
inline CalibrationReport calibration(const Model& m, std::span<const Triple> test,
                                     const KnowledgeGraph& kg, CalibrationNorm norm,
                                     std::size_t b, std::uint64_t seed) {
  if (b < 2) throw ArgumentError("calibration: need at least 2 bins");
  std::unordered_map<std::int32_t, std::vector<std::int32_t>> objects_of_predicate;
  {
    std::unordered_map<std::int32_t, std::unordered_set<std::int32_t>> seen;
    for (const Triple& t : kg.train) seen[t.predicate].insert(t.object);
    for (auto& [r, objs] : seen)
      objects_of_predicate[r] = std::vector<std::int32_t>(objs.begin(), objs.end());
    for (auto& [r, objs] : objects_of_predicate) std::sort(objs.begin(), objs.end());
  }
  double lo = 0.0, hi = 1.0;
  if (norm == CalibrationNorm::MinMax) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const Triple& t : kg.train) {
      double v = calibration_raw(m, t);
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (!(hi > lo)) throw NumericError("calibration: degenerate min-max range");
  }
  auto to_prob = [&](double raw) {
    if (norm == CalibrationNorm::Logistic) return sigmoid(raw);
    double p = (raw - lo) / (hi - lo);
    return std::min(1.0, std::max(0.0, p));
  };
  CounterRng rng(seed);
  std::vector<std::pair<double, bool>> pairs;
  std::size_t skipped = 0;
  for (std::size_t qi = 0; qi < test.size(); ++qi) {
    const Triple& t = test[qi];
    auto it = objects_of_predicate.find(t.predicate);
    if (it == objects_of_predicate.end() || it->second.size() < 2) {
      ++skipped;
      continue;
    }
    const auto& pool = it->second;
    CounterRng r = rng.stream(qi);
    std::int32_t neg = -1;
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::int32_t cand = pool[std::size_t(r.next_below(pool.size()))];
      if (cand != t.object && !kg.filter.known_object(t.subject, t.predicate, cand)) {
        neg = cand;
        break;
      }
    }
    if (neg < 0) {
      ++skipped;
      continue;
    }
    pairs.emplace_back(to_prob(calibration_raw(m, t)), true);
    pairs.emplace_back(to_prob(calibration_raw(m, {t.subject, t.predicate, neg})), false);
  }
  CalibrationReport rep = calibration_from_pairs(pairs, b);
  rep.normalization = norm == CalibrationNorm::Logistic ? "logistic" : "minmax";
  rep.skipped = skipped;
  return rep;
}

}  // namespace gekc
