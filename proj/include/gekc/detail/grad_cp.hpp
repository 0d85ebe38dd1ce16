#pragma once

#include "gekc/constraints.hpp"
#include "gekc/detail/grads_common.hpp"
#include "gekc/model.hpp"

namespace gekc::cpgrad {

inline void add_score_grad(const Model& m, const Triple& t, double coef, ModelGrads& g) {
  const auto& p = m.cp();
  const std::size_t d = p.u.cols();
  auto a = p.u.row(t.subject), b = p.w.row(t.predicate), c = p.v.row(t.object);
  for (std::size_t i = 0; i < d; ++i) {
    g.u(t.subject, i) += coef * b[i] * c[i];
    g.w(t.predicate, i) += coef * a[i] * c[i];
    g.v(t.object, i) += coef * a[i] * b[i];
  }
}

inline void add_log_score_grad(const Model& m, const Triple& t, double coef,
                               ModelGrads& g) {
  const auto& p = m.cp();
  const std::size_t d = p.u.cols();
  auto a = p.u.row(t.subject), b = p.w.row(t.predicate), c = p.v.row(t.object);
  if (m.kind == ModelKind::Squared) {
    double phi = tri::score(p.u, p.w, p.v, t.subject, t.predicate, t.object);
    if (phi == 0.0) throw NumericError("cp squared: zero score in objective");
    add_score_grad(m, t, 2.0 * coef / phi, g);
    return;
  }
  // NonNegative: softmax over branches
  double lphi = logtri::log_score(p.u, p.w, p.v, t.subject, t.predicate, t.object);
  if (!std::isfinite(lphi)) throw NumericError("cp nonneg: zero score in objective");
  for (std::size_t i = 0; i < d; ++i) {
    double pi = std::exp(a[i] + b[i] + c[i] - lphi);
    g.u(t.subject, i) += coef * pi;
    g.w(t.predicate, i) += coef * pi;
    g.v(t.object, i) += coef * pi;
  }
}

inline void add_log_partition_grad(const Model& m, double coef, ModelGrads& g) {
  const auto& p = m.cp();
  ensure_cache(m);
  const ModelCache& c = m.cache;
  const std::size_t d = p.u.cols();
  if (m.kind == ModelKind::Squared) {
    double z = partition_function(m);
    if (z <= 0.0) throw NumericError("cp squared: Z = 0");
    auto hadamard = [d](const DenseMatrix& x, const DenseMatrix& y) {
      DenseMatrix h(d, d);
      for (std::size_t k = 0; k < h.size(); ++k) h.data()[k] = x.data()[k] * y.data()[k];
      return h;
    };
    detail::add_gram_chain(p.u, hadamard(c.gram_p, c.gram_b), coef / z, g.u);
    detail::add_gram_chain(p.w, hadamard(c.gram_a, c.gram_b), coef / z, g.w);
    detail::add_gram_chain(p.v, hadamard(c.gram_a, c.gram_p), coef / z, g.v);
    return;
  }
  double lz = log_partition(m);
  if (!std::isfinite(lz)) throw NumericError("cp nonneg: Z = 0");
  std::vector<double> cu(d), cw(d), cv(d);
  for (std::size_t i = 0; i < d; ++i) {
    double q = coef * std::exp(c.lca[i] + c.lcp[i] + c.lcb[i] - lz);
    cu[i] = cw[i] = cv[i] = q;
  }
  detail::add_colsum_chain(p.u, c.lca, cu, g.u);
  detail::add_colsum_chain(p.w, c.lcp, cw, g.w);
  detail::add_colsum_chain(p.v, c.lcb, cv, g.v);
}

inline void add_constrained_log_partition_grad(const Model& m, const ConstrainedModel& cm,
                                               double coef, ModelGrads& g) {
  const auto& p = m.cp();
  const std::size_t d = p.u.cols();
  double lzk = cm.log_partition();
  if (!std::isfinite(lzk)) throw NumericError("cp: constrained Z = 0");
  const auto& groups = cm.circuit().groups;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    const auto& st = cm.group_stats(gi);
    if (m.kind == ModelKind::Squared) {
      double cz = coef / std::exp(lzk);
      DenseMatrix h(d, d);
      for (std::size_t k = 0; k < d * d; ++k)
        h.data()[k] = st.gr.data()[k] * st.go.data()[k];
      detail::add_gram_chain_rows(p.u, h, cz, grp.kappa_s, g.u);
      for (std::size_t k = 0; k < d * d; ++k)
        h.data()[k] = st.gs.data()[k] * st.go.data()[k];
      detail::add_gram_chain_rows(p.w, h, cz, grp.predicates, g.w);
      for (std::size_t k = 0; k < d * d; ++k)
        h.data()[k] = st.gs.data()[k] * st.gr.data()[k];
      detail::add_gram_chain_rows(p.v, h, cz, grp.kappa_o, g.v);
    } else {
      std::vector<double> cu(d);
      for (std::size_t i = 0; i < d; ++i)
        cu[i] = coef * std::exp(st.ls_s[i] + st.ls_r[i] + st.ls_o[i] - lzk);
      detail::add_colsum_chain_rows(p.u, st.ls_s, cu, grp.kappa_s, g.u);
      detail::add_colsum_chain_rows(p.w, st.ls_r, cu, grp.predicates, g.w);
      detail::add_colsum_chain_rows(p.v, st.ls_o, cu, grp.kappa_o, g.v);
    }
  }
}

// Batched statistics for the PLL slot normalisers: rank-one Gram updates
// (squared) or column-sum coefficients (nonneg), one bucket per constraint
// group (a single bucket when unconstrained).
struct PllAccum {
  std::vector<DenseMatrix> s_u, s_w, s_v;
  std::vector<std::vector<double>> c_u, c_w, c_v;

  void init(const Model& m, std::size_t groups) {
    const std::size_t d = m.cp().u.cols();
    if (m.kind == ModelKind::Squared) {
      s_u.assign(groups, DenseMatrix(d, d, 0.0));
      s_w.assign(groups, DenseMatrix(d, d, 0.0));
      s_v.assign(groups, DenseMatrix(d, d, 0.0));
    } else {
      c_u.assign(groups, std::vector<double>(d, 0.0));
      c_w.assign(groups, std::vector<double>(d, 0.0));
      c_v.assign(groups, std::vector<double>(d, 0.0));
    }
  }
};

// One PLL normaliser term: log sum over `target` given the other two slots of
// t. Adds the context-row gradients scaled by coef and banks the table-side
// statistics; returns log M.
inline double pll_term(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       Slot target, const Triple& t, double coef, ModelGrads& g) {
  const auto& p = m.cp();
  const std::size_t d = p.u.cols();
  ensure_cache(m);
  const ModelCache& cache = m.cache;
  const std::size_t gi = cm ? cm->circuit().group_of_predicate[t.predicate] : 0;

  if (cm && target == Slot::Predicate) {
    // masked dense path over the small predicate vocabulary
    auto keys = cm->candidate_scores(Slot::Predicate, Pattern{.s = t.subject, .o = t.object});
    double lm = logsumexp(keys);
    if (!std::isfinite(lm)) throw NumericError("cp: zero-mass predicate context");
    auto a = p.u.row(t.subject);
    auto c = p.v.row(t.object);
    for (std::size_t r = 0; r < keys.size(); ++r) {
      if (!std::isfinite(keys[r])) continue;
      double pi = std::exp(keys[r] - lm);
      if (m.kind == ModelKind::Squared) {
        double phi = tri::score(p.u, p.w, p.v, t.subject, std::int32_t(r), t.object);
        double cc = coef * pi * 2.0 / phi;
        for (std::size_t i = 0; i < d; ++i) {
          g.w(r, i) += cc * a[i] * c[i];
          g.u(t.subject, i) += cc * p.w(r, i) * c[i];
          g.v(t.object, i) += cc * p.w(r, i) * a[i];
        }
      } else {
        double lphi = keys[r];
        for (std::size_t i = 0; i < d; ++i) {
          double br = std::exp(a[i] + p.w(r, i) + c[i] - lphi) * pi * coef;
          g.w(r, i) += br;
          g.u(t.subject, i) += br;
          g.v(t.object, i) += br;
        }
      }
    }
    return lm;
  }

  // pick the two context rows and the summed-out table
  const DenseMatrix *ctx1 = nullptr, *ctx2 = nullptr;
  std::int32_t id1 = 0, id2 = 0;
  DenseMatrix* gctx1 = nullptr;
  DenseMatrix* gctx2 = nullptr;
  const DenseMatrix* gram = nullptr;
  const std::vector<double>* lcs = nullptr;
  std::vector<DenseMatrix>* s_acc = nullptr;
  std::vector<std::vector<double>>* c_acc = nullptr;
  if (target == Slot::Object) {
    ctx1 = &p.u; id1 = t.subject; gctx1 = &g.u;
    ctx2 = &p.w; id2 = t.predicate; gctx2 = &g.w;
    gram = cm ? &cm->group_stats(gi).go : &cache.gram_b;
    lcs = cm ? &cm->group_stats(gi).ls_o : &cache.lcb;
    s_acc = &acc.s_v; c_acc = &acc.c_v;
  } else if (target == Slot::Subject) {
    ctx1 = &p.w; id1 = t.predicate; gctx1 = &g.w;
    ctx2 = &p.v; id2 = t.object; gctx2 = &g.v;
    gram = cm ? &cm->group_stats(gi).gs : &cache.gram_a;
    lcs = cm ? &cm->group_stats(gi).ls_s : &cache.lca;
    s_acc = &acc.s_u; c_acc = &acc.c_u;
  } else {
    ctx1 = &p.u; id1 = t.subject; gctx1 = &g.u;
    ctx2 = &p.v; id2 = t.object; gctx2 = &g.v;
    gram = &cache.gram_p;
    lcs = &cache.lcp;
    s_acc = &acc.s_w; c_acc = &acc.c_w;
  }
  auto r1 = ctx1->row(std::size_t(id1));
  auto r2 = ctx2->row(std::size_t(id2));
  if (m.kind == ModelKind::Squared) {
    std::vector<double> x(d), y(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = r1[i] * r2[i];
    matvec(*gram, x, y);
    double mval = dot(x, y);
    if (mval <= 0.0) throw NumericError("cp: zero-mass context in pll");
    double cc = 2.0 * coef / mval;
    for (std::size_t i = 0; i < d; ++i) {
      (*gctx1)(std::size_t(id1), i) += cc * y[i] * r2[i];
      (*gctx2)(std::size_t(id2), i) += cc * y[i] * r1[i];
    }
    detail::add_outer(x, coef / mval, (*s_acc)[gi]);
    return std::log(mval);
  }
  std::vector<double> terms(d);
  for (std::size_t i = 0; i < d; ++i) terms[i] = r1[i] + r2[i] + (*lcs)[i];
  double lm = logsumexp(terms);
  if (!std::isfinite(lm)) throw NumericError("cp: zero-mass context in pll");
  for (std::size_t i = 0; i < d; ++i) {
    double pi = coef * std::exp(terms[i] - lm);
    (*gctx1)(std::size_t(id1), i) += pi;
    (*gctx2)(std::size_t(id2), i) += pi;
    (*c_acc)[gi][i] += pi;
  }
  return lm;
}

inline void pll_finish(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       ModelGrads& g) {
  const auto& p = m.cp();
  ensure_cache(m);
  const std::size_t groups = cm ? cm->circuit().groups.size() : 1;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    if (m.kind == ModelKind::Squared) {
      if (!cm) {
        detail::add_gram_chain(p.u, acc.s_u[gi], 1.0, g.u);
        detail::add_gram_chain(p.w, acc.s_w[gi], 1.0, g.w);
        detail::add_gram_chain(p.v, acc.s_v[gi], 1.0, g.v);
      } else {
        const auto& grp = cm->circuit().groups[gi];
        detail::add_gram_chain_rows(p.u, acc.s_u[gi], 1.0, grp.kappa_s, g.u);
        detail::add_gram_chain_rows(p.w, acc.s_w[gi], 1.0, grp.predicates, g.w);
        detail::add_gram_chain_rows(p.v, acc.s_v[gi], 1.0, grp.kappa_o, g.v);
      }
    } else {
      if (!cm) {
        detail::add_colsum_chain(p.u, m.cache.lca, acc.c_u[gi], g.u);
        detail::add_colsum_chain(p.w, m.cache.lcp, acc.c_w[gi], g.w);
        detail::add_colsum_chain(p.v, m.cache.lcb, acc.c_v[gi], g.v);
      } else {
        const auto& grp = cm->circuit().groups[gi];
        const auto& st = cm->group_stats(gi);
        detail::add_colsum_chain_rows(p.u, st.ls_s, acc.c_u[gi], grp.kappa_s, g.u);
        detail::add_colsum_chain_rows(p.w, st.ls_r, acc.c_w[gi], grp.predicates, g.w);
        detail::add_colsum_chain_rows(p.v, st.ls_o, acc.c_v[gi], grp.kappa_o, g.v);
      }
    }
  }
}

}  // namespace gekc::cpgrad
