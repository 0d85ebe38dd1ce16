#pragma once

// Domain constraints compiled to grouped indicator circuits, their product
// with a GeKC, and the exactly-constrained partition function, conditionals
// and slot distributions.

#include <map>
#include <vector>

#include "gekc/kg.hpp"
#include "gekc/model.hpp"

namespace gekc {

struct ConstraintGroup {
  std::vector<std::int32_t> predicates;
  std::vector<std::int32_t> kappa_s, kappa_o;
};

class ConstraintCircuit {
 public:
  std::vector<ConstraintGroup> groups;
  std::vector<std::int32_t> group_of_predicate;  // index into groups
  std::size_t num_entities = 0;

  bool subject_allowed(std::int32_t r, std::int32_t e) const {
    return subj_member_[group_of_predicate[r]][e] != 0;
  }
  bool object_allowed(std::int32_t r, std::int32_t e) const {
    return obj_member_[group_of_predicate[r]][e] != 0;
  }
  bool satisfies(const Triple& t) const {
    return subject_allowed(t.predicate, t.subject) &&
           object_allowed(t.predicate, t.object);
  }

  // Sum_g (|kappa_S| + |kappa_O|) + |R| edges.
  std::size_t compiled_size() const {
    std::size_t n = group_of_predicate.size();
    for (const auto& g : groups) n += g.kappa_s.size() + g.kappa_o.size();
    return n;
  }

  void build_membership() {
    subj_member_.clear();
    obj_member_.clear();
    for (const auto& g : groups) {
      std::vector<std::uint8_t> sm(num_entities, 0), om(num_entities, 0);
      for (std::int32_t e : g.kappa_s) sm[e] = 1;
      for (std::int32_t e : g.kappa_o) om[e] = 1;
      subj_member_.push_back(std::move(sm));
      obj_member_.push_back(std::move(om));
    }
  }

 private:
  std::vector<std::vector<std::uint8_t>> subj_member_, obj_member_;
};

// Groups predicates sharing the same (subject-domain, object-domain) pair.
// Predicates without metadata are an error unless `allow_unconstrained`,
// in which case they form an (E, E) group.
inline ConstraintCircuit compile_constraints(const DomainMetadata& meta,
                                             const KnowledgeGraph& kg,
                                             bool allow_unconstrained = false) {
  ConstraintCircuit c;
  c.num_entities = kg.num_entities();
  c.group_of_predicate.assign(kg.num_predicates(), -1);
  std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> by_domains;
  for (std::int32_t r = 0; r < std::int32_t(kg.num_predicates()); ++r) {
    std::pair<std::int32_t, std::int32_t> key;
    if (meta.has_predicate_domains(r)) {
      key = meta.predicate_domains[r];
    } else if (allow_unconstrained) {
      key = {-2, -2};
    } else {
      throw DataError("predicate " + kg.vocab.predicate_names()[r] +
                      " has no domain metadata (pass the unconstrained flag to allow)");
    }
    auto it = by_domains.find(key);
    if (it == by_domains.end()) {
      ConstraintGroup g;
      if (key.first == -2) {
        g.kappa_s.resize(kg.num_entities());
        g.kappa_o.resize(kg.num_entities());
        for (std::int32_t e = 0; e < std::int32_t(kg.num_entities()); ++e)
          g.kappa_s[e] = g.kappa_o[e] = e;
      } else {
        g.kappa_s = meta.entities_in_domain(key.first);
        g.kappa_o = meta.entities_in_domain(key.second);
      }
      if (g.kappa_s.empty() || g.kappa_o.empty())
        throw DataError("predicate " + kg.vocab.predicate_names()[r] +
                        " has an empty domain; the constraint would zero it out");
      it = by_domains.emplace(key, std::int32_t(c.groups.size())).first;
      c.groups.push_back(std::move(g));
    }
    c.group_of_predicate[r] = it->second;
    c.groups[it->second].predicates.push_back(r);
  }
  c.build_membership();
  return c;
}

inline bool satisfies(const ConstraintCircuit& c, const Triple& t) {
  return c.satisfies(t);
}

namespace detail {

// Per-group sufficient statistics, restricted to the group's kappa sets and
// predicate block; layout depends on family and kind.
struct GroupStats {
  DenseMatrix gs, gr, go;                      // squared Grams
  DenseMatrix q1, q2;                          // RESCAL2: sum_r W_r E'O W_r^T / W_r^T E'S W_r
  DenseMatrix m1, m2, m3;                      // TuckER2 per-mode partial Grams
  std::vector<double> g_tensor;                // TuckER2: T x1 E'S x2 W'g x3 E'O
  std::vector<double> ls_s, ls_r, ls_o;        // nonneg log colsums
  DenseMatrix lw_bar;                          // RESCAL+ group predicate block
  std::vector<double> lre_s, lim_s, lre_r, lim_r, lre_o, lim_o;  // ComplEx+
  double log_z = 0.0;
};

inline DenseMatrix tucker_subject_partial(const TuckerParams& p, const DenseMatrix& wg,
                                          const DenseMatrix& eo) {
  // M1(i,l) = sum_jk T_ijk H_ljk with H = T x2 Wg x3 Eo
  std::vector<double> h = tkfam::mode_product(p.core, p.de, p.dr, wg, 1);
  h = tkfam::mode_product(h, p.de, p.dr, eo, 2);
  DenseMatrix m1(p.de, p.de, 0.0);
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t l = 0; l < p.de; ++l) {
      const double* ti = p.core.data() + i * p.dr * p.de;
      const double* hl = h.data() + l * p.dr * p.de;
      double acc = 0.0;
      for (std::size_t x = 0; x < p.dr * p.de; ++x) acc += ti[x] * hl[x];
      m1(i, l) = acc;
    }
  return m1;
}

inline GroupStats build_group_stats(const Model& m, const ConstraintGroup& g) {
  ensure_cache(m);
  GroupStats st;
  const bool sq = m.kind == ModelKind::Squared;
  switch (m.family) {
    case ModelFamily::CP: {
      const auto& p = m.cp();
      if (sq) {
        st.gs = gram_rows(p.u, g.kappa_s);
        st.gr = gram_rows(p.w, g.predicates);
        st.go = gram_rows(p.v, g.kappa_o);
        st.log_z = std::log(std::max(tri::z_squared(st.gs, st.gr, st.go), 0.0));
      } else {
        st.ls_s = logtri::log_colsums_rows(p.u, g.kappa_s);
        st.ls_r = logtri::log_colsums_rows(p.w, g.predicates);
        st.ls_o = logtri::log_colsums_rows(p.v, g.kappa_o);
        st.log_z = logtri::log_contract3(st.ls_s, st.ls_r, st.ls_o);
      }
      break;
    }
    case ModelFamily::ComplEx: {
      const auto& p = m.cx();
      if (sq) {
        st.gs = gram_rows(m.cache.lift_a, g.kappa_s);
        st.gr = gram_rows(m.cache.lift_p, g.predicates);
        st.go = gram_rows(m.cache.lift_b, g.kappa_o);
        st.log_z = std::log(std::max(tri::z_squared(st.gs, st.gr, st.go), 0.0));
      } else {
        st.lre_s = logtri::log_colsums_rows(p.e_re, g.kappa_s);
        st.lim_s = logtri::log_colsums_rows(m.cache.lim_e, g.kappa_s);
        st.lre_r = logtri::log_colsums_rows(p.w_re, g.predicates);
        st.lim_r = logtri::log_colsums_rows(m.cache.lim_w, g.predicates);
        st.lre_o = logtri::log_colsums_rows(p.e_re, g.kappa_o);
        st.lim_o = logtri::log_colsums_rows(m.cache.lim_e, g.kappa_o);
        st.log_z = cxfam::logsum_4term(st.lre_s, st.lim_s, st.lre_r, st.lim_r,
                                       st.lre_o, st.lim_o);
      }
      break;
    }
    case ModelFamily::RESCAL: {
      const auto& p = m.rs();
      const std::size_t d = p.e.cols();
      if (sq) {
        st.gs = gram_rows(p.e, g.kappa_s);
        st.go = gram_rows(p.e, g.kappa_o);
        st.q1 = DenseMatrix(d, d, 0.0);
        st.q2 = DenseMatrix(d, d, 0.0);
        double z = 0.0;
        for (std::int32_t r : g.predicates) {
          DenseMatrix wowt = matmul(matmul(p.w[r], st.go), transpose(p.w[r]));
          DenseMatrix wtsw = matmul(matmul(transpose(p.w[r]), st.gs), p.w[r]);
          for (std::size_t k = 0; k < wowt.size(); ++k) {
            st.q1.data()[k] += wowt.data()[k];
            st.q2.data()[k] += wtsw.data()[k];
            z += st.gs.data()[k] * wowt.data()[k];
          }
        }
        st.log_z = std::log(std::max(z, 0.0));
      } else {
        st.ls_s = logtri::log_colsums_rows(p.e, g.kappa_s);
        st.ls_o = logtri::log_colsums_rows(p.e, g.kappa_o);
        st.lw_bar = DenseMatrix(d, d, -std::numeric_limits<double>::infinity());
        std::vector<double> terms(g.predicates.size());
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t r = 0; r < g.predicates.size(); ++r)
              terms[r] = p.w[g.predicates[r]](i, j);
            st.lw_bar(i, j) = logsumexp(terms);
          }
        st.log_z = rsfam::log_contract_bilinear(st.ls_s, st.lw_bar, st.ls_o);
      }
      break;
    }
    case ModelFamily::TuckER: {
      const auto& p = m.tk();
      if (sq) {
        st.gs = gram_rows(p.e, g.kappa_s);
        st.gr = gram_rows(p.w, g.predicates);
        st.go = gram_rows(p.e, g.kappa_o);
        const std::size_t de = p.de, dr = p.dr;
        std::vector<double> kp = tkfam::mode_product(p.core, de, dr, st.gs, 0);
        kp = tkfam::mode_product(kp, de, dr, st.gr, 1);
        st.g_tensor = tkfam::mode_product(kp, de, dr, st.go, 2);
        double z = 0.0;
        for (std::size_t x = 0; x < p.core.size(); ++x) z += p.core[x] * st.g_tensor[x];
        st.m1 = tucker_subject_partial(p, st.gr, st.go);
        // M3(k,n) = sum_{lm} Kp_lmk T_lmn with Kp = T x1 GS x2 WG
        st.m3 = DenseMatrix(de, de, 0.0);
        for (std::size_t k = 0; k < de; ++k)
          for (std::size_t n = 0; n < de; ++n) {
            double acc = 0.0;
            for (std::size_t l = 0; l < de; ++l)
              for (std::size_t mm = 0; mm < dr; ++mm)
                acc += kp[(l * dr + mm) * de + k] * p.core[(l * dr + mm) * de + n];
            st.m3(k, n) = acc;
          }
        // M2(j,m) = sum_{ln} Y_ljn T_lmn with Y = T x1 GS x3 GO
        std::vector<double> y = tkfam::mode_product(p.core, de, dr, st.gs, 0);
        y = tkfam::mode_product(y, de, dr, st.go, 2);
        st.m2 = DenseMatrix(dr, dr, 0.0);
        for (std::size_t j = 0; j < dr; ++j)
          for (std::size_t mm = 0; mm < dr; ++mm) {
            double acc = 0.0;
            for (std::size_t l = 0; l < de; ++l)
              for (std::size_t n = 0; n < de; ++n)
                acc += y[(l * dr + j) * de + n] * p.core[(l * dr + mm) * de + n];
            st.m2(j, mm) = acc;
          }
        st.log_z = std::log(std::max(z, 0.0));
      } else {
        st.ls_s = logtri::log_colsums_rows(p.e, g.kappa_s);
        st.ls_r = logtri::log_colsums_rows(p.w, g.predicates);
        st.ls_o = logtri::log_colsums_rows(p.e, g.kappa_o);
        st.log_z = tkfam::log_contract_core(p, st.ls_s, st.ls_r, st.ls_o);
      }
      break;
    }
  }
  return st;
}

}  // namespace detail

// Product of a GeKC with a constraint circuit: scores are the base scores
// masked by the indicator, normalised by Z_K.
class ConstrainedModel {
 public:
  ConstrainedModel(const Model& base, const ConstraintCircuit& circuit)
      : base_(&base), circuit_(&circuit) {
    if (!base.is_gekc())
      throw ArgumentError("constraint products require a NonNegative/Squared base");
  }

  const Model& base() const { return *base_; }
  const ConstraintCircuit& circuit() const { return *circuit_; }

  const detail::GroupStats& group_stats(std::size_t gi) const {
    refresh();
    return stats_[gi];
  }

  double log_partition() const {
    refresh();
    return log_z_;
  }
  double partition() const { return std::exp(log_partition()); }

  double score(const Triple& t) const {
    return circuit_->satisfies(t) ? gekc::score(*base_, t) : 0.0;
  }
  double log_score(const Triple& t) const {
    return circuit_->satisfies(t) ? gekc::log_score(*base_, t)
                                  : -std::numeric_limits<double>::infinity();
  }
  double log_prob(const Triple& t) const {
    double lz = log_partition();
    if (!std::isfinite(lz)) throw NumericError("constrained model has Z_K = 0");
    return log_score(t) - lz;
  }

  // Ranking keys (log phi) with violating candidates at exactly -inf.
  std::vector<double> candidate_scores(Slot target, const Pattern& ctx) const {
    const double ninf = -std::numeric_limits<double>::infinity();
    std::vector<double> keys = gekc::candidate_scores(*base_, target, ctx);
    if (target == Slot::Predicate) {
      if (!ctx.s || !ctx.o)
        throw ArgumentError("constrained predicate scores need both entities fixed");
      for (std::size_t r = 0; r < keys.size(); ++r)
        if (!circuit_->subject_allowed(std::int32_t(r), *ctx.s) ||
            !circuit_->object_allowed(std::int32_t(r), *ctx.o))
          keys[r] = ninf;
      return keys;
    }
    if (!ctx.r) throw ArgumentError("constrained entity scores need the predicate fixed");
    const std::int32_t r = *ctx.r;
    bool ctx_ok = target == Slot::Subject
                      ? (!ctx.o || circuit_->object_allowed(r, *ctx.o))
                      : (!ctx.s || circuit_->subject_allowed(r, *ctx.s));
    for (std::size_t e = 0; e < keys.size(); ++e) {
      bool ok = ctx_ok && (target == Slot::Subject
                               ? circuit_->subject_allowed(r, std::int32_t(e))
                               : circuit_->object_allowed(r, std::int32_t(e)));
      if (!ok) keys[e] = ninf;
    }
    return keys;
  }

  std::vector<double> conditional_distribution(Slot target, const Pattern& ctx) const {
    std::vector<double> keys = candidate_scores(target, ctx);
    double total = logsumexp(keys);
    if (!std::isfinite(total))
      throw NumericError("constrained conditional: context violates the constraints "
                         "or has zero mass");
    std::vector<double> p(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) p[i] = std::exp(keys[i] - total);
    return p;
  }

  // log sum_{r in group(r'), o in kappa_O} phi(s, r', o) per subject s, masked
  // by kappa_S; the unnormalised autoregressive prior over subjects.
  std::vector<double> log_subject_prior() const {
    refresh();
    const double ninf = -std::numeric_limits<double>::infinity();
    const std::size_t ne = base_->num_entities();
    std::vector<double> out(ne, ninf);
    for (std::size_t gi = 0; gi < circuit_->groups.size(); ++gi) {
      std::vector<double> part = group_subject_scores(gi);
      for (std::int32_t e : circuit_->groups[gi].kappa_s) {
        double combined = out[e] == ninf
                              ? part[e]
                              : logsumexp(std::vector<double>{out[e], part[e]});
        out[e] = combined;
      }
    }
    return out;
  }

  // log sum_{o in kappa_O(r)} phi(s, r, o) per predicate r, masked by the
  // subject membership of each group.
  std::vector<double> log_predicate_given_subject(std::int32_t s) const {
    refresh();
    const double ninf = -std::numeric_limits<double>::infinity();
    const Model& m = *base_;
    const std::size_t nr = m.num_predicates();
    std::vector<double> out(nr, ninf);
    for (std::size_t r = 0; r < nr; ++r) {
      std::int32_t gi = circuit_->group_of_predicate[r];
      if (!circuit_->subject_allowed(std::int32_t(r), s)) continue;
      out[r] = restricted_object_marginal(s, std::int32_t(r), stats_[gi]);
    }
    return out;
  }

  std::vector<double> log_object_given(std::int32_t s, std::int32_t r) const {
    return candidate_scores(Slot::Object, Pattern{.s = s, .r = r});
  }

 private:
  void refresh() const {
    if (cached_version_ == base_->version && !stats_.empty()) return;
    stats_.clear();
    stats_.reserve(circuit_->groups.size());
    std::vector<double> zs;
    for (const auto& g : circuit_->groups) {
      stats_.push_back(detail::build_group_stats(*base_, g));
      zs.push_back(stats_.back().log_z);
    }
    log_z_ = logsumexp(zs);
    cached_version_ = base_->version;
  }

  // log sum_{r in group, o in kappa_O} phi(s, r, o) for every subject s.
  std::vector<double> group_subject_scores(std::size_t gi) const {
    const Model& m = *base_;
    const detail::GroupStats& st = stats_[gi];
    const bool sq = m.kind == ModelKind::Squared;
    std::vector<double> out;
    switch (m.family) {
      case ModelFamily::CP: {
        const auto& p = m.cp();
        if (sq) {
          out.resize(p.u.rows());
          DenseMatrix h(st.gr.rows(), st.gr.cols());
          for (std::size_t k = 0; k < h.size(); ++k)
            h.data()[k] = st.gr.data()[k] * st.go.data()[k];
          for (std::size_t u = 0; u < p.u.rows(); ++u)
            out[u] = quadratic_form(h, p.u.row(u));
        } else {
          std::vector<double> lctx(p.u.cols());
          for (std::size_t i = 0; i < lctx.size(); ++i)
            lctx[i] = st.ls_r[i] + st.ls_o[i];
          return logtri::log_score_vec(p.u, lctx);
        }
        break;
      }
      case ModelFamily::ComplEx: {
        const auto& p = m.cx();
        if (sq) {
          const DenseMatrix& lift = m.cache.lift_a;
          out.resize(lift.rows());
          DenseMatrix h(st.gr.rows(), st.gr.cols());
          for (std::size_t k = 0; k < h.size(); ++k)
            h.data()[k] = st.gr.data()[k] * st.go.data()[k];
          for (std::size_t u = 0; u < lift.rows(); ++u)
            out[u] = quadratic_form(h, lift.row(u));
        } else {
          const std::size_t ne = p.e_re.rows();
          std::vector<double> res(ne);
          for (std::size_t u = 0; u < ne; ++u)
            res[u] = cxfam::logsum_4term(p.e_re.row(u), m.cache.lim_e.row(u), st.lre_r,
                                         st.lim_r, st.lre_o, st.lim_o);
          return res;
        }
        break;
      }
      case ModelFamily::RESCAL: {
        const auto& p = m.rs();
        if (sq) {
          out.resize(p.e.rows());
          for (std::size_t u = 0; u < p.e.rows(); ++u)
            out[u] = quadratic_form(st.q1, p.e.row(u));
        } else {
          const std::size_t d = p.e.cols();
          std::vector<double> lctx(d), terms(d);
          for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) terms[j] = st.lw_bar(i, j) + st.ls_o[j];
            lctx[i] = logsumexp(terms);
          }
          return logtri::log_score_vec(p.e, lctx);
        }
        break;
      }
      case ModelFamily::TuckER: {
        const auto& p = m.tk();
        if (sq) {
          out.resize(p.e.rows());
          for (std::size_t u = 0; u < p.e.rows(); ++u)
            out[u] = quadratic_form(st.m1, p.e.row(u));
        } else {
          std::vector<double> lctx(p.de);
          std::vector<double> terms(p.dr * p.de);
          for (std::size_t i = 0; i < p.de; ++i) {
            std::size_t n = 0;
            for (std::size_t j = 0; j < p.dr; ++j) {
              const double* t = p.core.data() + (i * p.dr + j) * p.de;
              for (std::size_t k = 0; k < p.de; ++k)
                terms[n++] = t[k] + st.ls_r[j] + st.ls_o[k];
            }
            lctx[i] = logsumexp(terms);
          }
          return logtri::log_score_vec(p.e, lctx);
        }
        break;
      }
    }
    for (double& v : out)
      v = v <= 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
    return out;
  }

  // log sum_{o in kappa_O(group)} phi(s, r, o)
  double restricted_object_marginal(std::int32_t s, std::int32_t r,
                                    const detail::GroupStats& st) const {
    const Model& m = *base_;
    const bool sq = m.kind == ModelKind::Squared;
    double v = 0.0;
    switch (m.family) {
      case ModelFamily::CP: {
        const auto& p = m.cp();
        if (sq) {
          v = tri::marg_squared(st.go, p.u.row(std::size_t(s)), p.w.row(std::size_t(r)));
        } else {
          std::vector<double> f1(p.u.row(std::size_t(s)).begin(),
                                 p.u.row(std::size_t(s)).end());
          return logtri::log_contract3(f1, p.w.row(std::size_t(r)), st.ls_o);
        }
        break;
      }
      case ModelFamily::ComplEx: {
        const auto& p = m.cx();
        if (sq) {
          v = tri::marg_squared(st.go, m.cache.lift_a.row(std::size_t(s)),
                                m.cache.lift_p.row(std::size_t(r)));
        } else {
          return cxfam::logsum_4term(p.e_re.row(std::size_t(s)),
                                     m.cache.lim_e.row(std::size_t(s)),
                                     p.w_re.row(std::size_t(r)),
                                     m.cache.lim_w.row(std::size_t(r)), st.lre_o,
                                     st.lim_o);
        }
        break;
      }
      case ModelFamily::RESCAL: {
        const auto& p = m.rs();
        if (sq) {
          v = quadratic_form(st.go, rsfam::wt_x(p.w[r], p.e.row(std::size_t(s))));
        } else {
          return rsfam::log_contract_bilinear(p.e.row(std::size_t(s)), p.w[r], st.ls_o);
        }
        break;
      }
      case ModelFamily::TuckER: {
        const auto& p = m.tk();
        if (sq) {
          auto q = tkfam::ctx_object(p, p.e.row(std::size_t(s)), p.w.row(std::size_t(r)));
          v = quadratic_form(st.go, q);
        } else {
          return tkfam::log_contract_core(p, p.e.row(std::size_t(s)),
                                          p.w.row(std::size_t(r)), st.ls_o);
        }
        break;
      }
    }
    v = std::max(v, 0.0);
    return v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
  }

  const Model* base_;
  const ConstraintCircuit* circuit_;
  mutable std::vector<detail::GroupStats> stats_;
  mutable double log_z_ = 0.0;
  mutable std::uint64_t cached_version_ = std::numeric_limits<std::uint64_t>::max();
};

inline double constrained_partition(const ConstrainedModel& cm) { return cm.partition(); }

inline std::vector<double> constrained_conditional(const ConstrainedModel& cm,
                                                   Slot target, const Pattern& ctx) {
  return cm.conditional_distribution(target, ctx);
}

}  // namespace gekc
