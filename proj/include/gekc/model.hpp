#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "gekc/detail/family_complex.hpp"
#include "gekc/detail/family_cp.hpp"
#include "gekc/detail/family_rescal.hpp"
#include "gekc/detail/family_tucker.hpp"
#include "gekc/model_types.hpp"

namespace gekc {

inline void validate(const Model& m) {
  auto finite = [](const DenseMatrix& x) { return all_finite({x.data(), x.size()}); };
  switch (m.family) {
    case ModelFamily::CP: {
      const auto& p = m.cp();
      if (p.u.rows() != p.v.rows() || p.u.cols() != p.w.cols() || p.u.cols() != p.v.cols())
        throw ArgumentError("cp: inconsistent parameter shapes");
      if (m.kind == ModelKind::NonNegative &&
          !(finite(p.u) && finite(p.w) && finite(p.v)))
        throw NumericError("cp: non-finite log parameters");
      break;
    }
    case ModelFamily::ComplEx: {
      const auto& p = m.cx();
      if (p.e_re.cols() != p.w_re.cols())
        throw ArgumentError("complex: inconsistent parameter shapes");
      if (m.kind == ModelKind::NonNegative) {
        if (!p.theta.same_shape(p.e_re) || !p.gamma.same_shape(p.w_re))
          throw ArgumentError("complex nonneg: missing reparametrisation tables");
        if (!(finite(p.e_re) && finite(p.w_re)))
          throw NumericError("complex: non-finite log parameters");
      } else if (!p.e_im.same_shape(p.e_re) || !p.w_im.same_shape(p.w_re)) {
        throw ArgumentError("complex: missing imaginary parts");
      }
      break;
    }
    case ModelFamily::RESCAL: {
      const auto& p = m.rs();
      for (const auto& w : p.w)
        if (w.rows() != p.e.cols() || w.cols() != p.e.cols())
          throw ArgumentError("rescal: relation matrix shape mismatch");
      if (m.kind == ModelKind::NonNegative && !finite(p.e))
        throw NumericError("rescal: non-finite log parameters");
      break;
    }
    case ModelFamily::TuckER: {
      const auto& p = m.tk();
      if (p.e.cols() != p.de || p.w.cols() != p.dr ||
          p.core.size() != p.de * p.de * p.dr)
        throw ArgumentError("tucker: core/embedding shape mismatch");
      break;
    }
  }
}

inline void ensure_cache(const Model& m) {
  if (m.cache.version == m.version) return;
  m.cache = ModelCache{};
  switch (m.family) {
    case ModelFamily::CP: cpfam::build_cache(m, m.cache); break;
    case ModelFamily::ComplEx: cxfam::build_cache(m, m.cache); break;
    case ModelFamily::RESCAL: rsfam::build_cache(m, m.cache); break;
    case ModelFamily::TuckER: tkfam::build_cache(m, m.cache); break;
  }
  m.cache.version = m.version;
}

inline double score(const Model& m, const Triple& t) {
  m.check_ids(t);
  ensure_cache(m);
  switch (m.family) {
    case ModelFamily::CP: return cpfam::score(m, t.subject, t.predicate, t.object);
    case ModelFamily::ComplEx: return cxfam::score(m, t.subject, t.predicate, t.object);
    case ModelFamily::RESCAL: return rsfam::score(m, t.subject, t.predicate, t.object);
    case ModelFamily::TuckER: return tkfam::score(m, t.subject, t.predicate, t.object);
  }
  return 0.0;
}

// log phi for GeKC kinds (-inf at exact zeros).
inline double log_score(const Model& m, const Triple& t) {
  if (!m.is_gekc()) throw ArgumentError("log_score requires a GeKC kind");
  m.check_ids(t);
  ensure_cache(m);
  switch (m.family) {
    case ModelFamily::CP: return cpfam::log_score(m, t.subject, t.predicate, t.object);
    case ModelFamily::ComplEx: return cxfam::log_score(m, t.subject, t.predicate, t.object);
    case ModelFamily::RESCAL: return rsfam::log_score(m, t.subject, t.predicate, t.object);
    case ModelFamily::TuckER: return tkfam::log_score(m, t.subject, t.predicate, t.object);
  }
  return 0.0;
}

inline double log_marginal(const Model& m, const Pattern& q) {
  if (!m.is_gekc())
    throw ArgumentError("marginals are only tractable for NonNegative/Squared kinds");
  if (q.wildcards() == 0)
    throw ArgumentError("marginal requires at least one wildcard (use score)");
  ensure_cache(m);
  switch (m.family) {
    case ModelFamily::CP: return cpfam::log_marginal(m, q);
    case ModelFamily::ComplEx: return cxfam::log_marginal(m, q);
    case ModelFamily::RESCAL: return rsfam::log_marginal(m, q);
    case ModelFamily::TuckER: return tkfam::log_marginal(m, q);
  }
  return 0.0;
}

inline double marginal(const Model& m, const Pattern& q) {
  return std::exp(log_marginal(m, q));
}

inline double log_partition(const Model& m) {
  if (!m.is_gekc())
    throw ArgumentError(
        "partition function of an energy-based model is not tractable here; "
        "use brute_force_partition");
  ensure_cache(m);
  if (!m.cache.has_z) {
    m.cache.log_z = log_marginal(m, Pattern{});
    m.cache.has_z = true;
  }
  return m.cache.log_z;
}

inline double partition_function(const Model& m) { return std::exp(log_partition(m)); }

// Test oracle: sum of score() over every triple, any kind.
inline double brute_force_partition(const Model& m) {
  const std::size_t ne = m.num_entities(), nr = m.num_predicates();
  if (double(ne) * double(ne) * double(nr) > 1e7)
    throw ArgumentError("brute_force_partition: instance too large");
  CompensatedSum z;
  for (std::size_t s = 0; s < ne; ++s)
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t o = 0; o < ne; ++o)
        z.add(score(m, {std::int32_t(s), std::int32_t(r), std::int32_t(o)}));
  return z.value();
}

// Ranking keys over every candidate of `target`: raw phi for EnergyBased
// models, log phi for GeKC kinds. GeKC contexts may leave the other slots
// as wildcards (they are summed out).
inline std::vector<double> candidate_scores(const Model& m, Slot target,
                                            const Pattern& ctx) {
  ensure_cache(m);
  switch (m.family) {
    case ModelFamily::CP: return cpfam::slot_scores(m, target, ctx);
    case ModelFamily::ComplEx: return cxfam::slot_scores(m, target, ctx);
    case ModelFamily::RESCAL: return rsfam::slot_scores(m, target, ctx);
    case ModelFamily::TuckER: return tkfam::slot_scores(m, target, ctx);
  }
  return {};
}

// Normalised distribution over `target` given the two fixed context slots.
inline std::vector<double> conditional_distribution(const Model& m, Slot target,
                                                    const Pattern& ctx) {
  if (!m.is_gekc())
    throw ArgumentError("conditionals require a NonNegative/Squared kind");
  int fixed = int(ctx.s.has_value()) + int(ctx.r.has_value()) + int(ctx.o.has_value());
  bool target_free = (target == Slot::Subject && !ctx.s) ||
                     (target == Slot::Predicate && !ctx.r) ||
                     (target == Slot::Object && !ctx.o);
  if (fixed != 2 || !target_free)
    throw ArgumentError("conditional_distribution needs exactly the two non-target slots fixed");
  std::vector<double> ls = candidate_scores(m, target, ctx);
  double total = logsumexp(ls);
  if (!std::isfinite(total))
    throw NumericError("conditional_distribution: context has zero probability mass");
  std::vector<double> p(ls.size());
  for (std::size_t i = 0; i < ls.size(); ++i) p[i] = std::exp(ls[i] - total);
  return p;
}

inline double log_prob(const Model& m, const Triple& t) {
  double lz = log_partition(m);
  if (!std::isfinite(lz)) throw NumericError("log_prob: degenerate model with Z = 0");
  return log_score(m, t) - lz;
}

struct CircuitDims {
  std::size_t d = 0;   // CP/ComplEx/RESCAL embedding size
  std::size_t de = 0;  // TuckER entity embedding size
  std::size_t dr = 0;  // TuckER predicate embedding size
};

// Edge count of the circuit representation. Input units contribute one edge
// per element of their vocabulary (they are look-up tables over entities or
// predicates), product units one edge per input, the sum unit one edge per
// branch. Squared kinds count the product circuit: per-slot input units pair
// up, branches multiply out.
inline std::size_t circuit_size(ModelFamily family, ModelKind kind, CircuitDims dims,
                                std::size_t num_entities, std::size_t num_predicates) {
  std::size_t in_s = 0, in_r = 0, in_o = 0, branches = 0;
  switch (family) {
    case ModelFamily::CP:
      in_s = in_r = in_o = dims.d;
      branches = dims.d;
      break;
    case ModelFamily::ComplEx:
      in_s = in_r = in_o = 2 * dims.d;
      branches = 4 * dims.d;
      break;
    case ModelFamily::RESCAL:
      in_s = in_o = dims.d;
      in_r = dims.d * dims.d;
      branches = dims.d * dims.d;
      break;
    case ModelFamily::TuckER:
      in_s = in_o = dims.de;
      in_r = dims.dr;
      branches = dims.de * dims.de * dims.dr;
      break;
  }
  if (kind == ModelKind::Squared) {
    in_s *= in_s;
    in_r *= in_r;
    in_o *= in_o;
    branches *= branches;
  }
  return (in_s + in_o) * num_entities + in_r * num_predicates + 4 * branches;
}

inline std::size_t circuit_size(const Model& m) {
  CircuitDims dims;
  if (m.family == ModelFamily::TuckER) {
    dims.de = m.tk().de;
    dims.dr = m.tk().dr;
  } else {
    dims.d = m.dim();
  }
  return circuit_size(m.family, m.kind, dims, m.num_entities(), m.num_predicates());
}

inline double nonneg_score_fraction(const Model& m, std::span<const Triple> triples) {
  if (m.kind != ModelKind::EnergyBased)
    throw ArgumentError("nonneg_score_fraction applies to energy-based models");
  if (triples.empty()) throw ArgumentError("nonneg_score_fraction: empty triple list");
  std::size_t n = 0;
  for (const Triple& t : triples)
    if (score(m, t) >= 0.0) ++n;
  return double(n) / double(triples.size());
}

}  // namespace gekc
