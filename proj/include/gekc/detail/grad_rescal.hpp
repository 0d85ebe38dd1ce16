#pragma once

#include "gekc/constraints.hpp"
#include "gekc/detail/grads_common.hpp"
#include "gekc/model.hpp"

namespace gekc::rsgrad {

inline void add_score_grad(const Model& m, const Triple& t, double coef, ModelGrads& g) {
  const auto& p = m.rs();
  const std::size_t d = p.e.cols();
  const DenseMatrix& w = p.w[t.predicate];
  auto es = p.e.row(t.subject), eo = p.e.row(t.object);
  auto we = rsfam::w_y(w, eo);    // W e_o
  auto wte = rsfam::wt_x(w, es);  // W^T e_s
  for (std::size_t i = 0; i < d; ++i) {
    g.e(t.subject, i) += coef * we[i];
    g.e(t.object, i) += coef * wte[i];
  }
  DenseMatrix& gw = g.wr[t.predicate];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) gw(i, j) += coef * es[i] * eo[j];
}

inline void add_log_score_grad(const Model& m, const Triple& t, double coef,
                               ModelGrads& g) {
  const auto& p = m.rs();
  const std::size_t d = p.e.cols();
  if (m.kind == ModelKind::Squared) {
    double phi = rsfam::bilinear(p.e.row(t.subject), p.w[t.predicate], p.e.row(t.object));
    if (phi == 0.0) throw NumericError("rescal squared: zero score in objective");
    add_score_grad(m, t, 2.0 * coef / phi, g);
    return;
  }
  auto es = p.e.row(t.subject), eo = p.e.row(t.object);
  const DenseMatrix& w = p.w[t.predicate];
  double lphi = rsfam::log_contract_bilinear(es, w, eo);
  if (!std::isfinite(lphi)) throw NumericError("rescal nonneg: zero score in objective");
  DenseMatrix& gw = g.wr[t.predicate];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double pi = std::exp(es[i] + w(i, j) + eo[j] - lphi);
      g.e(t.subject, i) += coef * pi;
      g.e(t.object, j) += coef * pi;
      gw(i, j) += coef * pi;
    }
}

inline void add_log_partition_grad(const Model& m, double coef, ModelGrads& g) {
  const auto& p = m.rs();
  ensure_cache(m);
  const ModelCache& c = m.cache;
  const std::size_t d = p.e.cols();
  if (m.kind == ModelKind::Squared) {
    double z = partition_function(m);
    if (z <= 0.0) throw NumericError("rescal squared: Z = 0");
    DenseMatrix qsum(d, d);
    for (std::size_t k = 0; k < qsum.size(); ++k)
      qsum.data()[k] = c.q1.data()[k] + c.q2.data()[k];
    detail::add_gram_chain(p.e, qsum, coef / z, g.e);
    for (std::size_t r = 0; r < p.w.size(); ++r) {
      DenseMatrix ewe = matmul(matmul(c.gram_a, p.w[r]), c.gram_a);  // E' W_r E'
      for (std::size_t k = 0; k < ewe.size(); ++k)
        g.wr[r].data()[k] += (coef / z) * 2.0 * ewe.data()[k];
    }
    return;
  }
  double lz = log_partition(m);
  if (!std::isfinite(lz)) throw NumericError("rescal nonneg: Z = 0");
  std::vector<double> ce(d, 0.0);
  DenseMatrix cw(d, d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double pi = std::exp(c.lca[i] + c.lw_bar(i, j) + c.lca[j] - lz);
      ce[i] += coef * pi;
      ce[j] += coef * pi;
      cw(i, j) = coef * pi;
    }
  detail::add_colsum_chain(p.e, c.lca, ce, g.e);
  for (std::size_t r = 0; r < p.w.size(); ++r)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        if (std::isfinite(c.lw_bar(i, j)))
          g.wr[r](i, j) += cw(i, j) * std::exp(p.w[r](i, j) - c.lw_bar(i, j));
}

inline void add_constrained_log_partition_grad(const Model& m, const ConstrainedModel& cm,
                                               double coef, ModelGrads& g) {
  const auto& p = m.rs();
  const std::size_t d = p.e.cols();
  double lzk = cm.log_partition();
  if (!std::isfinite(lzk)) throw NumericError("rescal: constrained Z = 0");
  const auto& groups = cm.circuit().groups;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    const auto& st = cm.group_stats(gi);
    if (m.kind == ModelKind::Squared) {
      double cz = coef / std::exp(lzk);
      detail::add_gram_chain_rows(p.e, st.q1, cz, grp.kappa_s, g.e);
      detail::add_gram_chain_rows(p.e, st.q2, cz, grp.kappa_o, g.e);
      for (std::int32_t r : grp.predicates) {
        DenseMatrix ewe = matmul(matmul(st.gs, p.w[r]), st.go);
        for (std::size_t k = 0; k < ewe.size(); ++k)
          g.wr[r].data()[k] += cz * 2.0 * ewe.data()[k];
      }
    } else {
      std::vector<double> cs(d, 0.0), co(d, 0.0);
      DenseMatrix cw(d, d, 0.0);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double pi = std::exp(st.ls_s[i] + st.lw_bar(i, j) + st.ls_o[j] - lzk);
          cs[i] += coef * pi;
          co[j] += coef * pi;
          cw(i, j) = coef * pi;
        }
      detail::add_colsum_chain_rows(p.e, st.ls_s, cs, grp.kappa_s, g.e);
      detail::add_colsum_chain_rows(p.e, st.ls_o, co, grp.kappa_o, g.e);
      for (std::int32_t r : grp.predicates)
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j)
            if (std::isfinite(st.lw_bar(i, j)))
              g.wr[r](i, j) += cw(i, j) * std::exp(p.w[r](i, j) - st.lw_bar(i, j));
    }
  }
}

struct PllAccum {
  std::vector<DenseMatrix> s_subj, s_obj;              // squared entity-Gram updates
  std::vector<std::vector<double>> c_subj, c_obj;      // nonneg colsum coefficients
  void init(const Model& m, std::size_t groups) {
    const std::size_t d = m.rs().e.cols();
    if (m.kind == ModelKind::Squared) {
      s_subj.assign(groups, DenseMatrix(d, d, 0.0));
      s_obj.assign(groups, DenseMatrix(d, d, 0.0));
    } else {
      c_subj.assign(groups, std::vector<double>(d, 0.0));
      c_obj.assign(groups, std::vector<double>(d, 0.0));
    }
  }
};

inline double pll_term(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       Slot target, const Triple& t, double coef, ModelGrads& g) {
  const auto& p = m.rs();
  ensure_cache(m);
  const ModelCache& cache = m.cache;
  const std::size_t d = p.e.cols();
  const std::size_t gi = cm ? cm->circuit().group_of_predicate[t.predicate] : 0;

  if (target == Slot::Predicate) {
    // dense over the small predicate vocabulary, masked when constrained
    std::vector<double> keys =
        cm ? cm->candidate_scores(Slot::Predicate, Pattern{.s = t.subject, .o = t.object})
           : candidate_scores(m, Slot::Predicate, Pattern{.s = t.subject, .o = t.object});
    double lm = logsumexp(keys);
    if (!std::isfinite(lm)) throw NumericError("rescal: zero-mass predicate context");
    for (std::size_t r = 0; r < keys.size(); ++r) {
      if (!std::isfinite(keys[r])) continue;
      double pi = std::exp(keys[r] - lm);
      add_log_score_grad(m, {t.subject, std::int32_t(r), t.object}, coef * pi, g);
    }
    return lm;
  }

  const bool obj = target == Slot::Object;
  const DenseMatrix& w = p.w[t.predicate];
  auto ctx_row = obj ? p.e.row(t.subject) : p.e.row(t.object);
  const std::int32_t ctx_id = obj ? t.subject : t.object;
  if (m.kind == ModelKind::Squared) {
    const DenseMatrix& gram = cm ? (obj ? cm->group_stats(gi).go : cm->group_stats(gi).gs)
                                 : cache.gram_a;
    std::vector<double> x = obj ? rsfam::wt_x(w, ctx_row) : rsfam::w_y(w, ctx_row);
    std::vector<double> y(d);
    matvec(gram, x, y);
    double mval = dot(x, y);
    if (mval <= 0.0) throw NumericError("rescal: zero-mass context in pll");
    double cc = 2.0 * coef / mval;
    // chain y through t = W^T e_s (object target) or t = W e_o (subject)
    std::vector<double> back = obj ? rsfam::w_y(w, y) : rsfam::wt_x(w, y);
    for (std::size_t i = 0; i < d; ++i) g.e(ctx_id, i) += cc * back[i];
    DenseMatrix& gw = g.wr[t.predicate];
    if (obj) {
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) gw(i, j) += cc * ctx_row[i] * y[j];
    } else {
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) gw(i, j) += cc * y[i] * ctx_row[j];
    }
    detail::add_outer(x, coef / mval, obj ? acc.s_obj[gi] : acc.s_subj[gi]);
    return std::log(mval);
  }
  // NonNegative
  const std::vector<double>& lcs =
      cm ? (obj ? cm->group_stats(gi).ls_o : cm->group_stats(gi).ls_s) : cache.lca;
  std::vector<double>& cacc = obj ? acc.c_obj[gi] : acc.c_subj[gi];
  std::vector<double> terms(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      terms[i * d + j] = obj ? ctx_row[i] + w(i, j) + lcs[j]
                             : lcs[i] + w(i, j) + ctx_row[j];
  double lm = logsumexp(terms);
  if (!std::isfinite(lm)) throw NumericError("rescal: zero-mass context in pll");
  DenseMatrix& gw = g.wr[t.predicate];
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double pi = coef * std::exp(terms[i * d + j] - lm);
      gw(i, j) += pi;
      if (obj) {
        g.e(ctx_id, i) += pi;
        cacc[j] += pi;
      } else {
        g.e(ctx_id, j) += pi;
        cacc[i] += pi;
      }
    }
  return lm;
}

inline void pll_finish(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       ModelGrads& g) {
  const auto& p = m.rs();
  ensure_cache(m);
  const std::size_t groups = cm ? cm->circuit().groups.size() : 1;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    if (m.kind == ModelKind::Squared) {
      if (!cm) {
        detail::add_gram_chain(p.e, acc.s_obj[gi], 1.0, g.e);
        detail::add_gram_chain(p.e, acc.s_subj[gi], 1.0, g.e);
      } else {
        const auto& grp = cm->circuit().groups[gi];
        detail::add_gram_chain_rows(p.e, acc.s_obj[gi], 1.0, grp.kappa_o, g.e);
        detail::add_gram_chain_rows(p.e, acc.s_subj[gi], 1.0, grp.kappa_s, g.e);
      }
    } else {
      if (!cm) {
        detail::add_colsum_chain(p.e, m.cache.lca, acc.c_obj[gi], g.e);
        detail::add_colsum_chain(p.e, m.cache.lca, acc.c_subj[gi], g.e);
      } else {
        const auto& grp = cm->circuit().groups[gi];
        const auto& st = cm->group_stats(gi);
        detail::add_colsum_chain_rows(p.e, st.ls_o, acc.c_obj[gi], grp.kappa_o, g.e);
        detail::add_colsum_chain_rows(p.e, st.ls_s, acc.c_subj[gi], grp.kappa_s, g.e);
      }
    }
  }
}

}  // namespace gekc::rsgrad
