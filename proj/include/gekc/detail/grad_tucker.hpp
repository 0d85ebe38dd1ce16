#pragma once

#include "gekc/constraints.hpp"
#include "gekc/detail/grads_common.hpp"
#include "gekc/model.hpp"

namespace gekc::tkgrad {

// core_grad[i][j][k] += c * x_i y_j z_k
inline void add_outer3(std::span<const double> x, std::span<const double> y,
                       std::span<const double> z, double c, std::vector<double>& core,
                       std::size_t de, std::size_t dr) {
  for (std::size_t i = 0; i < de; ++i) {
    if (x[i] == 0.0) continue;
    for (std::size_t j = 0; j < dr; ++j) {
      const double cxy = c * x[i] * y[j];
      if (cxy == 0.0) continue;
      double* t = core.data() + (i * dr + j) * de;
      for (std::size_t k = 0; k < de; ++k) t[k] += cxy * z[k];
    }
  }
}

inline void add_score_grad(const Model& m, const Triple& t, double coef, ModelGrads& g) {
  const auto& p = m.tk();
  auto es = p.e.row(t.subject), wr = p.w.row(t.predicate), eo = p.e.row(t.object);
  auto gs = tkfam::ctx_subject(p, wr, eo);    // dphi/de_s
  auto gr = tkfam::ctx_predicate(p, es, eo);  // dphi/dw_r
  auto go = tkfam::ctx_object(p, es, wr);     // dphi/de_o
  for (std::size_t i = 0; i < p.de; ++i) {
    g.te(t.subject, i) += coef * gs[i];
    g.te(t.object, i) += coef * go[i];
  }
  for (std::size_t j = 0; j < p.dr; ++j) g.tw(t.predicate, j) += coef * gr[j];
  add_outer3(es, wr, eo, coef, g.core, p.de, p.dr);
}

inline void add_log_score_grad(const Model& m, const Triple& t, double coef,
                               ModelGrads& g) {
  const auto& p = m.tk();
  if (m.kind == ModelKind::Squared) {
    double phi = tkfam::raw_score(p, t.subject, t.predicate, t.object);
    if (phi == 0.0) throw NumericError("tucker squared: zero score in objective");
    add_score_grad(m, t, 2.0 * coef / phi, g);
    return;
  }
  auto es = p.e.row(t.subject), wr = p.w.row(t.predicate), eo = p.e.row(t.object);
  double lphi = tkfam::log_contract_core(p, es, wr, eo);
  if (!std::isfinite(lphi)) throw NumericError("tucker nonneg: zero score in objective");
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t j = 0; j < p.dr; ++j) {
      const double* tc = p.core.data() + (i * p.dr + j) * p.de;
      for (std::size_t k = 0; k < p.de; ++k) {
        double pi = coef * std::exp(tc[k] + es[i] + wr[j] + eo[k] - lphi);
        g.te(t.subject, i) += pi;
        g.tw(t.predicate, j) += pi;
        g.te(t.object, k) += pi;
        g.core[(i * p.dr + j) * p.de + k] += pi;
      }
    }
}

inline void add_log_partition_grad(const Model& m, double coef, ModelGrads& g) {
  const auto& p = m.tk();
  ensure_cache(m);
  const ModelCache& c = m.cache;
  if (m.kind == ModelKind::Squared) {
    double z = partition_function(m);
    if (z <= 0.0) throw NumericError("tucker squared: Z = 0");
    const double cz = coef / z;
    DenseMatrix msum(p.de, p.de);
    for (std::size_t k = 0; k < msum.size(); ++k)
      msum.data()[k] = c.m1.data()[k] + c.m3.data()[k];
    detail::add_gram_chain(p.e, msum, cz, g.te);
    detail::add_gram_chain(p.w, c.m2, cz, g.tw);
    for (std::size_t x = 0; x < p.core.size(); ++x)
      g.core[x] += cz * 2.0 * c.g_tensor[x];
    return;
  }
  double lz = log_partition(m);
  if (!std::isfinite(lz)) throw NumericError("tucker nonneg: Z = 0");
  std::vector<double> ce(p.de, 0.0), cw(p.dr, 0.0);
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t j = 0; j < p.dr; ++j) {
      const double* tc = p.core.data() + (i * p.dr + j) * p.de;
      for (std::size_t k = 0; k < p.de; ++k) {
        double pi = coef * std::exp(tc[k] + c.lca[i] + c.lcp[j] + c.lca[k] - lz);
        ce[i] += pi;
        ce[k] += pi;
        cw[j] += pi;
        g.core[(i * p.dr + j) * p.de + k] += pi;
      }
    }
  detail::add_colsum_chain(p.e, c.lca, ce, g.te);
  detail::add_colsum_chain(p.w, c.lcp, cw, g.tw);
}

inline void add_constrained_log_partition_grad(const Model& m, const ConstrainedModel& cm,
                                               double coef, ModelGrads& g) {
  const auto& p = m.tk();
  double lzk = cm.log_partition();
  if (!std::isfinite(lzk)) throw NumericError("tucker: constrained Z = 0");
  const auto& groups = cm.circuit().groups;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    const auto& st = cm.group_stats(gi);
    if (m.kind == ModelKind::Squared) {
      const double cz = coef / std::exp(lzk);
      detail::add_gram_chain_rows(p.e, st.m1, cz, grp.kappa_s, g.te);
      detail::add_gram_chain_rows(p.e, st.m3, cz, grp.kappa_o, g.te);
      detail::add_gram_chain_rows(p.w, st.m2, cz, grp.predicates, g.tw);
      for (std::size_t x = 0; x < p.core.size(); ++x)
        g.core[x] += cz * 2.0 * st.g_tensor[x];
    } else {
      std::vector<double> cs(p.de, 0.0), co(p.de, 0.0), cw(p.dr, 0.0);
      for (std::size_t i = 0; i < p.de; ++i)
        for (std::size_t j = 0; j < p.dr; ++j) {
          const double* tc = p.core.data() + (i * p.dr + j) * p.de;
          for (std::size_t k = 0; k < p.de; ++k) {
            double pi = coef * std::exp(tc[k] + st.ls_s[i] + st.ls_r[j] + st.ls_o[k] - lzk);
            cs[i] += pi;
            co[k] += pi;
            cw[j] += pi;
            g.core[(i * p.dr + j) * p.de + k] += pi;
          }
        }
      detail::add_colsum_chain_rows(p.e, st.ls_s, cs, grp.kappa_s, g.te);
      detail::add_colsum_chain_rows(p.e, st.ls_o, co, grp.kappa_o, g.te);
      detail::add_colsum_chain_rows(p.w, st.ls_r, cw, grp.predicates, g.tw);
    }
  }
}

struct PllAccum {
  std::vector<DenseMatrix> s_subj, s_obj, s_pred;
  std::vector<std::vector<double>> c_subj, c_obj, c_pred;
  void init(const Model& m, std::size_t groups) {
    const auto& p = m.tk();
    if (m.kind == ModelKind::Squared) {
      s_subj.assign(groups, DenseMatrix(p.de, p.de, 0.0));
      s_obj.assign(groups, DenseMatrix(p.de, p.de, 0.0));
      s_pred.assign(groups, DenseMatrix(p.dr, p.dr, 0.0));
    } else {
      c_subj.assign(groups, std::vector<double>(p.de, 0.0));
      c_obj.assign(groups, std::vector<double>(p.de, 0.0));
      c_pred.assign(groups, std::vector<double>(p.dr, 0.0));
    }
  }
};

inline double pll_term(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       Slot target, const Triple& t, double coef, ModelGrads& g) {
  const auto& p = m.tk();
  ensure_cache(m);
  const ModelCache& cache = m.cache;
  const std::size_t gi = cm ? cm->circuit().group_of_predicate[t.predicate] : 0;

  if (cm && target == Slot::Predicate) {
    auto keys = cm->candidate_scores(Slot::Predicate, Pattern{.s = t.subject, .o = t.object});
    double lm = logsumexp(keys);
    if (!std::isfinite(lm)) throw NumericError("tucker: zero-mass predicate context");
    for (std::size_t r = 0; r < keys.size(); ++r) {
      if (!std::isfinite(keys[r])) continue;
      add_log_score_grad(m, {t.subject, std::int32_t(r), t.object},
                         coef * std::exp(keys[r] - lm), g);
    }
    return lm;
  }

  auto es = p.e.row(t.subject), wr = p.w.row(t.predicate), eo = p.e.row(t.object);
  if (m.kind == ModelKind::Squared) {
    std::vector<double> q;
    const DenseMatrix* gram = nullptr;
    if (target == Slot::Object) {
      q = tkfam::ctx_object(p, es, wr);
      gram = cm ? &cm->group_stats(gi).go : &cache.gram_a;
    } else if (target == Slot::Subject) {
      q = tkfam::ctx_subject(p, wr, eo);
      gram = cm ? &cm->group_stats(gi).gs : &cache.gram_a;
    } else {
      q = tkfam::ctx_predicate(p, es, eo);
      gram = &cache.gram_p;
    }
    std::vector<double> h(q.size());
    matvec(*gram, q, h);
    double mval = dot(q, h);
    if (mval <= 0.0) throw NumericError("tucker: zero-mass context in pll");
    const double cc = 2.0 * coef / mval;
    if (target == Slot::Object) {
      auto gs = tkfam::ctx_subject(p, wr, h);
      auto gr = tkfam::ctx_predicate(p, es, h);
      for (std::size_t i = 0; i < p.de; ++i) g.te(t.subject, i) += cc * gs[i];
      for (std::size_t j = 0; j < p.dr; ++j) g.tw(t.predicate, j) += cc * gr[j];
      add_outer3(es, wr, h, cc, g.core, p.de, p.dr);
      detail::add_outer(q, coef / mval, acc.s_obj[gi]);
    } else if (target == Slot::Subject) {
      auto go = tkfam::ctx_object(p, h, wr);
      auto gr = tkfam::ctx_predicate(p, h, eo);
      for (std::size_t k = 0; k < p.de; ++k) g.te(t.object, k) += cc * go[k];
      for (std::size_t j = 0; j < p.dr; ++j) g.tw(t.predicate, j) += cc * gr[j];
      add_outer3(h, wr, eo, cc, g.core, p.de, p.dr);
      detail::add_outer(q, coef / mval, acc.s_subj[gi]);
    } else {
      auto gs = tkfam::ctx_subject(p, h, eo);
      auto go = tkfam::ctx_object(p, es, h);
      for (std::size_t i = 0; i < p.de; ++i) {
        g.te(t.subject, i) += cc * gs[i];
        g.te(t.object, i) += cc * go[i];
      }
      add_outer3(es, h, eo, cc, g.core, p.de, p.dr);
      detail::add_outer(q, coef / mval, acc.s_pred[gi]);
    }
    return std::log(mval);
  }

  // NonNegative
  const detail::GroupStats* st = cm ? &cm->group_stats(gi) : nullptr;
  std::span<const double> f1 = es, f2 = wr, f3 = eo;
  if (target == Slot::Object)
    f3 = st ? std::span<const double>(st->ls_o) : std::span<const double>(cache.lca);
  else if (target == Slot::Subject)
    f1 = st ? std::span<const double>(st->ls_s) : std::span<const double>(cache.lca);
  else
    f2 = std::span<const double>(cache.lcp);
  double lm = tkfam::log_contract_core(p, f1, f2, f3);
  if (!std::isfinite(lm)) throw NumericError("tucker: zero-mass context in pll");
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t j = 0; j < p.dr; ++j) {
      const double* tc = p.core.data() + (i * p.dr + j) * p.de;
      for (std::size_t k = 0; k < p.de; ++k) {
        double pi = coef * std::exp(tc[k] + f1[i] + f2[j] + f3[k] - lm);
        g.core[(i * p.dr + j) * p.de + k] += pi;
        if (target == Slot::Object) {
          g.te(t.subject, i) += pi;
          g.tw(t.predicate, j) += pi;
          acc.c_obj[gi][k] += pi;
        } else if (target == Slot::Subject) {
          acc.c_subj[gi][i] += pi;
          g.tw(t.predicate, j) += pi;
          g.te(t.object, k) += pi;
        } else {
          g.te(t.subject, i) += pi;
          acc.c_pred[gi][j] += pi;
          g.te(t.object, k) += pi;
        }
      }
    }
  return lm;
}

inline void pll_finish(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       ModelGrads& g) {
  const auto& p = m.tk();
  ensure_cache(m);
  const std::size_t groups = cm ? cm->circuit().groups.size() : 1;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    if (m.kind == ModelKind::Squared) {
      if (!cm) {
        detail::add_gram_chain(p.e, acc.s_obj[gi], 1.0, g.te);
        detail::add_gram_chain(p.e, acc.s_subj[gi], 1.0, g.te);
        detail::add_gram_chain(p.w, acc.s_pred[gi], 1.0, g.tw);
      } else {
        const auto& grp = cm->circuit().groups[gi];
        detail::add_gram_chain_rows(p.e, acc.s_obj[gi], 1.0, grp.kappa_o, g.te);
        detail::add_gram_chain_rows(p.e, acc.s_subj[gi], 1.0, grp.kappa_s, g.te);
        detail::add_gram_chain_rows(p.w, acc.s_pred[gi], 1.0, grp.predicates, g.tw);
      }
    } else {
      if (!cm) {
        detail::add_colsum_chain(p.e, m.cache.lca, acc.c_obj[gi], g.te);
        detail::add_colsum_chain(p.e, m.cache.lca, acc.c_subj[gi], g.te);
        detail::add_colsum_chain(p.w, m.cache.lcp, acc.c_pred[gi], g.tw);
      } else {
        // the constrained predicate direction runs through the masked dense
        // path, so only the entity accumulators carry mass here
        const auto& grp = cm->circuit().groups[gi];
        const auto& st = cm->group_stats(gi);
        detail::add_colsum_chain_rows(p.e, st.ls_o, acc.c_obj[gi], grp.kappa_o, g.te);
        detail::add_colsum_chain_rows(p.e, st.ls_s, acc.c_subj[gi], grp.kappa_s, g.te);
      }
    }
  }
}

}  // namespace gekc::tkgrad
