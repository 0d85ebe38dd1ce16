#pragma once

// Exact triple generation: ancestral sampling for monotone (non-negative)
// circuits with a latent-variable view, and autoregressive inverse-transform
// sampling for every GeKC. Sample i draws from CounterRng stream i, so
// batches are reproducible regardless of evaluation order.

#include <string>
#include <unordered_map>
#include <vector>

#include "gekc/constraints.hpp"
#include "gekc/model.hpp"
#include "gekc/rng.hpp"

namespace gekc {

struct SampleBatch {
  std::vector<Triple> triples;
  std::uint64_t seed = 0;
  std::string method;
};

// Inverse-transform draw over an unnormalised probability vector. The
// compensated cumulative sum ends within 1e-12 of the total before inversion.
inline std::int32_t draw_categorical(std::span<const double> probs, double u) {
  CompensatedSum total;
  for (double p : probs) total.add(p);
  const double t = total.value();
  if (!(t > 0.0)) throw NumericError("draw_categorical: zero total mass");
  const double target = u * t;
  CompensatedSum run;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    run.add(probs[i]);
    if (target < run.value()) return std::int32_t(i);
  }
  return std::int32_t(probs.size() - 1);
}

inline std::int32_t draw_categorical_log(std::span<const double> logits, double u) {
  double lse = logsumexp(logits);
  if (!std::isfinite(lse)) throw NumericError("draw_categorical: zero total mass");
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
  return draw_categorical(p, u);
}

namespace detail {

// Normalised categorical over one column of a log-value table.
inline std::vector<double> column_categorical(const DenseMatrix& logs, std::size_t col) {
  std::vector<double> l(logs.rows());
  for (std::size_t r = 0; r < logs.rows(); ++r) l[r] = logs(r, col);
  double lse = logsumexp(l);
  std::vector<double> p(l.size());
  for (std::size_t r = 0; r < l.size(); ++r) p[r] = std::exp(l[r] - lse);
  return p;
}

}  // namespace detail

// Ancestral sampling for NonNegative CP / RESCAL / TuckER: draw the latent
// branch of the single sum unit with probability proportional to its weight
// times each input unit's normaliser, then the three slots independently
// from the branch's categoricals. ComplEx is excluded: its circuit keeps a
// negative parameter, which breaks the latent-variable view.
inline SampleBatch ancestral_sample(const Model& m, std::size_t n, std::uint64_t seed) {
  if (m.kind != ModelKind::NonNegative)
    throw ArgumentError("ancestral sampling needs a NonNegative model");
  if (m.family == ModelFamily::ComplEx)
    throw ArgumentError("ancestral sampling does not apply to ComplEx circuits");
  ensure_cache(m);
  const ModelCache& c = m.cache;
  SampleBatch out;
  out.seed = seed;
  out.method = "ancestral";
  out.triples.reserve(n);
  CounterRng root(seed);

  std::vector<double> branch_logits;
  std::vector<std::array<std::int32_t, 3>> branch_cols;  // (s-col, r-col, o-col)
  switch (m.family) {
    case ModelFamily::CP: {
      const auto& p = m.cp();
      const std::size_t d = p.u.cols();
      for (std::size_t i = 0; i < d; ++i) {
        branch_logits.push_back(c.lca[i] + c.lcp[i] + c.lcb[i]);
        branch_cols.push_back({std::int32_t(i), std::int32_t(i), std::int32_t(i)});
      }
      break;
    }
    case ModelFamily::RESCAL: {
      const auto& p = m.rs();
      const std::size_t d = p.e.cols();
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          branch_logits.push_back(c.lca[i] + c.lw_bar(i, j) + c.lca[j]);
          branch_cols.push_back({std::int32_t(i), std::int32_t(i * d + j), std::int32_t(j)});
        }
      break;
    }
    case ModelFamily::TuckER: {
      const auto& p = m.tk();
      for (std::size_t i = 0; i < p.de; ++i)
        for (std::size_t j = 0; j < p.dr; ++j)
          for (std::size_t k = 0; k < p.de; ++k) {
            branch_logits.push_back(p.core_at(i, j, k) + c.lca[i] + c.lcp[j] + c.lca[k]);
            branch_cols.push_back({std::int32_t(i), std::int32_t(j), std::int32_t(k)});
          }
      break;
    }
    default: break;
  }

  // per-axis categorical tables
  std::vector<std::vector<double>> subj_cols, pred_cols, obj_cols;
  switch (m.family) {
    case ModelFamily::CP: {
      const auto& p = m.cp();
      for (std::size_t i = 0; i < p.u.cols(); ++i) {
        subj_cols.push_back(detail::column_categorical(p.u, i));
        pred_cols.push_back(detail::column_categorical(p.w, i));
        obj_cols.push_back(detail::column_categorical(p.v, i));
      }
      break;
    }
    case ModelFamily::RESCAL: {
      const auto& p = m.rs();
      const std::size_t d = p.e.cols();
      for (std::size_t i = 0; i < d; ++i)
        subj_cols.push_back(detail::column_categorical(p.e, i));
      obj_cols = subj_cols;
      // predicate categorical per (i, j) cell across relation matrices
      pred_cols.resize(d * d);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          std::vector<double> l(p.w.size());
          for (std::size_t r = 0; r < p.w.size(); ++r) l[r] = p.w[r](i, j);
          double lse = logsumexp(l);
          std::vector<double>& pr = pred_cols[i * d + j];
          pr.resize(l.size());
          for (std::size_t r = 0; r < l.size(); ++r) pr[r] = std::exp(l[r] - lse);
        }
      break;
    }
    case ModelFamily::TuckER: {
      const auto& p = m.tk();
      for (std::size_t i = 0; i < p.de; ++i)
        subj_cols.push_back(detail::column_categorical(p.e, i));
      obj_cols = subj_cols;
      for (std::size_t j = 0; j < p.dr; ++j)
        pred_cols.push_back(detail::column_categorical(p.w, j));
      break;
    }
    default: break;
  }

  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = root.stream(i);
    std::int32_t br = draw_categorical_log(branch_logits, rng.next_double());
    auto [si, ri, oi] = branch_cols[std::size_t(br)];
    Triple t;
    t.subject = draw_categorical(subj_cols[std::size_t(si)], rng.next_double());
    t.predicate = draw_categorical(pred_cols[std::size_t(ri)], rng.next_double());
    t.object = draw_categorical(obj_cols[std::size_t(oi)], rng.next_double());
    out.triples.push_back(t);
  }
  return out;
}

namespace detail {

inline std::vector<double> chain_subject(const Model& m) {
  return candidate_scores(m, Slot::Subject, Pattern{});
}
inline std::vector<double> chain_subject(const ConstrainedModel& cm) {
  return cm.log_subject_prior();
}
inline std::vector<double> chain_predicate(const Model& m, std::int32_t s) {
  return candidate_scores(m, Slot::Predicate, Pattern{.s = s});
}
inline std::vector<double> chain_predicate(const ConstrainedModel& cm, std::int32_t s) {
  return cm.log_predicate_given_subject(s);
}
inline std::vector<double> chain_object(const Model& m, std::int32_t s, std::int32_t r) {
  return candidate_scores(m, Slot::Object, Pattern{.s = s, .r = r});
}
inline std::vector<double> chain_object(const ConstrainedModel& cm, std::int32_t s,
                                        std::int32_t r) {
  return cm.log_object_given(s, r);
}
inline bool gekc_ok(const Model& m) { return m.is_gekc(); }
inline bool gekc_ok(const ConstrainedModel&) { return true; }

}  // namespace detail

// Inverse-transform sampling along the fixed order S -> R -> O; p(S) is
// computed once per batch, the conditionals are memoised per context.
template <typename ModelLike>
SampleBatch autoregressive_sample(const ModelLike& m, std::size_t n, std::uint64_t seed) {
  if (!detail::gekc_ok(m))
    throw ArgumentError("autoregressive sampling needs a NonNegative/Squared model");
  SampleBatch out;
  out.seed = seed;
  out.method = "autoregressive";
  out.triples.reserve(n);
  CounterRng root(seed);
  std::vector<double> subj_logits = detail::chain_subject(m);
  double subj_lse = logsumexp(subj_logits);
  if (!std::isfinite(subj_lse))
    throw NumericError("autoregressive sampling: model has zero total mass");
  std::vector<double> subj_probs(subj_logits.size());
  for (std::size_t i = 0; i < subj_logits.size(); ++i)
    subj_probs[i] = std::exp(subj_logits[i] - subj_lse);

  std::unordered_map<std::uint64_t, std::vector<double>> pred_cache, obj_cache;
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng = root.stream(i);
    Triple t;
    t.subject = draw_categorical(subj_probs, rng.next_double());
    auto& pr = pred_cache[std::uint64_t(t.subject)];
    if (pr.empty()) {
      auto logits = detail::chain_predicate(m, t.subject);
      double lse = logsumexp(logits);
      pr.resize(logits.size());
      for (std::size_t k = 0; k < logits.size(); ++k) pr[k] = std::exp(logits[k] - lse);
    }
    t.predicate = draw_categorical(pr, rng.next_double());
    auto& ob = obj_cache[pair_key(t.subject, t.predicate)];
    if (ob.empty()) {
      auto logits = detail::chain_object(m, t.subject, t.predicate);
      double lse = logsumexp(logits);
      ob.resize(logits.size());
      for (std::size_t k = 0; k < logits.size(); ++k) ob[k] = std::exp(logits[k] - lse);
    }
    t.object = draw_categorical(ob, rng.next_double());
    out.triples.push_back(t);
  }
  return out;
}

}  // namespace gekc
