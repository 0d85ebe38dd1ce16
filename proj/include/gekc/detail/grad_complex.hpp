#pragma once

#include "gekc/constraints.hpp"
#include "gekc/detail/grads_common.hpp"
#include "gekc/model.hpp"

namespace gekc::cxgrad {

// Row-level unlift of 4d lifted-factor gradients onto the stored tables.
inline void unlift_row_a(std::span<const double> g4, std::int32_t u, ModelGrads& g) {
  const std::size_t d = g.e_re.cols();
  for (std::size_t i = 0; i < d; ++i) {
    g.e_re(u, i) += g4[i] + g4[2 * d + i];
    g.e_im(u, i) += g4[d + i] + g4[3 * d + i];
  }
}
inline void unlift_row_b(std::span<const double> g4, std::int32_t o, ModelGrads& g) {
  const std::size_t d = g.e_re.cols();
  for (std::size_t i = 0; i < d; ++i) {
    g.e_re(o, i) += g4[i] + g4[3 * d + i];
    g.e_im(o, i) += g4[d + i] + g4[2 * d + i];
  }
}
inline void unlift_row_p(std::span<const double> g4, std::int32_t r, ModelGrads& g) {
  const std::size_t d = g.w_re.cols();
  for (std::size_t i = 0; i < d; ++i) {
    g.w_re(r, i) += g4[i] + g4[d + i];
    g.w_im(r, i) += g4[2 * d + i] - g4[3 * d + i];
  }
}

// Signed branch weights of the non-negative 4-term form; wd carries the minus
// sign of the fourth component.
struct CxWeights {
  std::vector<double> wa, wb, wc, wd;
  double logm = 0.0;
};

inline CxWeights cx_weights(std::span<const double> lre_s, std::span<const double> lim_s,
                            std::span<const double> lre_r, std::span<const double> lim_r,
                            std::span<const double> lre_o, std::span<const double> lim_o) {
  const std::size_t d = lre_s.size();
  CxWeights w;
  w.wa.resize(d);
  w.wb.resize(d);
  w.wc.resize(d);
  w.wd.resize(d);
  std::vector<double> pos(3 * d), neg(d);
  for (std::size_t i = 0; i < d; ++i) {
    pos[i] = lre_s[i] + lre_r[i] + lre_o[i];
    pos[d + i] = lim_s[i] + lre_r[i] + lim_o[i];
    pos[2 * d + i] = lre_s[i] + lim_r[i] + lim_o[i];
    neg[i] = lim_s[i] + lim_r[i] + lre_o[i];
  }
  w.logm = log_diff_exp(logsumexp(pos), logsumexp(neg));
  if (!std::isfinite(w.logm)) return w;
  for (std::size_t i = 0; i < d; ++i) {
    w.wa[i] = std::exp(pos[i] - w.logm);
    w.wb[i] = std::exp(pos[d + i] - w.logm);
    w.wc[i] = std::exp(pos[2 * d + i] - w.logm);
    w.wd[i] = -std::exp(neg[i] - w.logm);
  }
  return w;
}

// Chain rules onto fixed rows of the nonneg parameter tables. The subject /
// object / predicate roles differ only in which branches carry Re vs Im.
inline void cx_row_subject(const Model& m, std::int32_t u, const CxWeights& w,
                           double coef, ModelGrads& g) {
  const auto& p = m.cx();
  for (std::size_t i = 0; i < p.e_re.cols(); ++i) {
    double all = w.wa[i] + w.wb[i] + w.wc[i] + w.wd[i];
    double im = w.wb[i] + w.wd[i];
    g.e_re(u, i) += coef * all;
    g.theta(u, i) += coef * im * (1.0 - sigmoid(p.theta(u, i)));
  }
}
inline void cx_row_object(const Model& m, std::int32_t o, const CxWeights& w,
                          double coef, ModelGrads& g) {
  const auto& p = m.cx();
  for (std::size_t i = 0; i < p.e_re.cols(); ++i) {
    double all = w.wa[i] + w.wb[i] + w.wc[i] + w.wd[i];
    double im = w.wb[i] + w.wc[i];
    g.e_re(o, i) += coef * all;
    g.theta(o, i) += coef * im * (1.0 - sigmoid(p.theta(o, i)));
  }
}
inline void cx_row_predicate(const Model& m, std::int32_t r, const CxWeights& w,
                             double coef, ModelGrads& g) {
  const auto& p = m.cx();
  for (std::size_t i = 0; i < p.w_re.cols(); ++i) {
    double all = w.wa[i] + w.wb[i] + w.wc[i] + w.wd[i];
    double im = w.wc[i] + w.wd[i];
    g.w_re(r, i) += coef * all;
    g.gamma(r, i) += coef * im * (1.0 - sigmoid(p.gamma(r, i)));
  }
}

// Chain through entity column sums: coefficients (cre, cim) pair with the
// (Re, Im) colsum shares of each row; theta picks up the Im part.
inline void cx_colsum_entities(const Model& m, std::span<const double> cre,
                               std::span<const double> cim,
                               std::span<const double> lre_cs,
                               std::span<const double> lim_cs,
                               std::span<const std::int32_t> rows, ModelGrads& g) {
  const auto& p = m.cx();
  const DenseMatrix& lim_e = m.cache.lim_e;
  const std::size_t d = p.e_re.cols();
  auto apply = [&](std::int32_t e) {
    for (std::size_t i = 0; i < d; ++i) {
      double re_share = std::isfinite(lre_cs[i]) ? std::exp(p.e_re(e, i) - lre_cs[i]) : 0.0;
      double im_share = std::isfinite(lim_cs[i]) ? std::exp(lim_e(e, i) - lim_cs[i]) : 0.0;
      g.e_re(e, i) += cre[i] * re_share + cim[i] * im_share;
      g.theta(e, i) += cim[i] * im_share * (1.0 - sigmoid(p.theta(e, i)));
    }
  };
  if (rows.empty())
    for (std::int32_t e = 0; e < std::int32_t(p.e_re.rows()); ++e) apply(e);
  else
    for (std::int32_t e : rows) apply(e);
}

inline void cx_colsum_predicates(const Model& m, std::span<const double> cre,
                                 std::span<const double> cim,
                                 std::span<const double> lre_cs,
                                 std::span<const double> lim_cs,
                                 std::span<const std::int32_t> rows, ModelGrads& g) {
  const auto& p = m.cx();
  const DenseMatrix& lim_w = m.cache.lim_w;
  const std::size_t d = p.w_re.cols();
  auto apply = [&](std::int32_t r) {
    for (std::size_t i = 0; i < d; ++i) {
      double re_share = std::isfinite(lre_cs[i]) ? std::exp(p.w_re(r, i) - lre_cs[i]) : 0.0;
      double im_share = std::isfinite(lim_cs[i]) ? std::exp(lim_w(r, i) - lim_cs[i]) : 0.0;
      g.w_re(r, i) += cre[i] * re_share + cim[i] * im_share;
      g.gamma(r, i) += cim[i] * im_share * (1.0 - sigmoid(p.gamma(r, i)));
    }
  };
  if (rows.empty())
    for (std::int32_t r = 0; r < std::int32_t(p.w_re.rows()); ++r) apply(r);
  else
    for (std::int32_t r : rows) apply(r);
}

// Branch-weight coefficient vectors per side: which branches use the Re vs Im
// factor of that side.
inline void side_coeffs(const CxWeights& w, Slot side, double coef,
                        std::vector<double>& cre, std::vector<double>& cim) {
  const std::size_t d = w.wa.size();
  cre.assign(d, 0.0);
  cim.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (side == Slot::Subject) {
      cre[i] = coef * (w.wa[i] + w.wc[i]);
      cim[i] = coef * (w.wb[i] + w.wd[i]);
    } else if (side == Slot::Predicate) {
      cre[i] = coef * (w.wa[i] + w.wb[i]);
      cim[i] = coef * (w.wc[i] + w.wd[i]);
    } else {
      cre[i] = coef * (w.wa[i] + w.wd[i]);
      cim[i] = coef * (w.wb[i] + w.wc[i]);
    }
  }
}

inline void add_score_grad(const Model& m, const Triple& t, double coef, ModelGrads& g) {
  ensure_cache(m);
  const ModelCache& c = m.cache;
  const std::size_t d4 = c.lift_a.cols();
  auto a = c.lift_a.row(t.subject), pr = c.lift_p.row(t.predicate),
       b = c.lift_b.row(t.object);
  std::vector<double> ga(d4), gp(d4), gb(d4);
  for (std::size_t i = 0; i < d4; ++i) {
    ga[i] = coef * pr[i] * b[i];
    gp[i] = coef * a[i] * b[i];
    gb[i] = coef * a[i] * pr[i];
  }
  unlift_row_a(ga, t.subject, g);
  unlift_row_p(gp, t.predicate, g);
  unlift_row_b(gb, t.object, g);
}

inline void add_log_score_grad(const Model& m, const Triple& t, double coef,
                               ModelGrads& g) {
  ensure_cache(m);
  if (m.kind == ModelKind::Squared) {
    const ModelCache& c = m.cache;
    double phi = tri::score(c.lift_a, c.lift_p, c.lift_b, t.subject, t.predicate, t.object);
    if (phi == 0.0) throw NumericError("complex squared: zero score in objective");
    add_score_grad(m, t, 2.0 * coef / phi, g);
    return;
  }
  const auto& p = m.cx();
  const ModelCache& c = m.cache;
  CxWeights w = cx_weights(p.e_re.row(t.subject), c.lim_e.row(t.subject),
                           p.w_re.row(t.predicate), c.lim_w.row(t.predicate),
                           p.e_re.row(t.object), c.lim_e.row(t.object));
  if (!std::isfinite(w.logm))
    throw NumericError("complex nonneg: zero score in objective");
  cx_row_subject(m, t.subject, w, coef, g);
  cx_row_predicate(m, t.predicate, w, coef, g);
  cx_row_object(m, t.object, w, coef, g);
}

inline void add_log_partition_grad(const Model& m, double coef, ModelGrads& g) {
  ensure_cache(m);
  const ModelCache& c = m.cache;
  if (m.kind == ModelKind::Squared) {
    double z = partition_function(m);
    if (z <= 0.0) throw NumericError("complex squared: Z = 0");
    const std::size_t d4 = c.gram_a.rows();
    auto hadamard = [d4](const DenseMatrix& x, const DenseMatrix& y) {
      DenseMatrix h(d4, d4);
      for (std::size_t k = 0; k < h.size(); ++k) h.data()[k] = x.data()[k] * y.data()[k];
      return h;
    };
    DenseMatrix ga(c.lift_a.rows(), d4, 0.0), gb(c.lift_b.rows(), d4, 0.0),
        gp(c.lift_p.rows(), d4, 0.0);
    detail::add_gram_chain(c.lift_a, hadamard(c.gram_p, c.gram_b), coef / z, ga);
    detail::add_gram_chain(c.lift_p, hadamard(c.gram_a, c.gram_b), coef / z, gp);
    detail::add_gram_chain(c.lift_b, hadamard(c.gram_a, c.gram_p), coef / z, gb);
    cxfam::unlift_entity_grad(ga, gb, g.e_re, g.e_im);
    cxfam::unlift_predicate_grad(gp, g.w_re, g.w_im);
    return;
  }
  CxWeights w = cx_weights(c.lre_e_cs, c.lim_e_cs, c.lre_w_cs, c.lim_w_cs, c.lre_e_cs,
                           c.lim_e_cs);
  if (!std::isfinite(w.logm)) throw NumericError("complex nonneg: Z = 0");
  std::vector<double> cre, cim;
  side_coeffs(w, Slot::Subject, coef, cre, cim);
  cx_colsum_entities(m, cre, cim, c.lre_e_cs, c.lim_e_cs, {}, g);
  side_coeffs(w, Slot::Object, coef, cre, cim);
  cx_colsum_entities(m, cre, cim, c.lre_e_cs, c.lim_e_cs, {}, g);
  side_coeffs(w, Slot::Predicate, coef, cre, cim);
  cx_colsum_predicates(m, cre, cim, c.lre_w_cs, c.lim_w_cs, {}, g);
}

inline void add_constrained_log_partition_grad(const Model& m, const ConstrainedModel& cm,
                                               double coef, ModelGrads& g) {
  ensure_cache(m);
  double lzk = cm.log_partition();
  if (!std::isfinite(lzk)) throw NumericError("complex: constrained Z = 0");
  const auto& groups = cm.circuit().groups;
  const ModelCache& c = m.cache;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    const auto& st = cm.group_stats(gi);
    if (m.kind == ModelKind::Squared) {
      double cz = coef / std::exp(lzk);
      const std::size_t d4 = st.gs.rows();
      DenseMatrix h(d4, d4);
      DenseMatrix ga(c.lift_a.rows(), d4, 0.0), gb(c.lift_b.rows(), d4, 0.0),
          gp(c.lift_p.rows(), d4, 0.0);
      for (std::size_t k = 0; k < h.size(); ++k)
        h.data()[k] = st.gr.data()[k] * st.go.data()[k];
      detail::add_gram_chain_rows(c.lift_a, h, cz, grp.kappa_s, ga);
      for (std::size_t k = 0; k < h.size(); ++k)
        h.data()[k] = st.gs.data()[k] * st.go.data()[k];
      detail::add_gram_chain_rows(c.lift_p, h, cz, grp.predicates, gp);
      for (std::size_t k = 0; k < h.size(); ++k)
        h.data()[k] = st.gs.data()[k] * st.gr.data()[k];
      detail::add_gram_chain_rows(c.lift_b, h, cz, grp.kappa_o, gb);
      cxfam::unlift_entity_grad(ga, gb, g.e_re, g.e_im);
      cxfam::unlift_predicate_grad(gp, g.w_re, g.w_im);
      continue;
    }
    CxWeights w = cx_weights(st.lre_s, st.lim_s, st.lre_r, st.lim_r, st.lre_o, st.lim_o);
    if (!std::isfinite(w.logm)) continue;  // group contributes zero mass
    double gcoef = coef * std::exp(st.log_z - lzk);
    std::vector<double> cre, cim;
    side_coeffs(w, Slot::Subject, gcoef, cre, cim);
    cx_colsum_entities(m, cre, cim, st.lre_s, st.lim_s, grp.kappa_s, g);
    side_coeffs(w, Slot::Object, gcoef, cre, cim);
    cx_colsum_entities(m, cre, cim, st.lre_o, st.lim_o, grp.kappa_o, g);
    side_coeffs(w, Slot::Predicate, gcoef, cre, cim);
    cx_colsum_predicates(m, cre, cim, st.lre_r, st.lim_r, grp.predicates, g);
  }
}

struct PllAccum {
  // squared: rank-one updates of the lifted Grams
  std::vector<DenseMatrix> s_a, s_p, s_b;
  // nonneg: (Re, Im) colsum coefficients per side
  std::vector<std::vector<double>> cre_s, cim_s, cre_p, cim_p, cre_o, cim_o;

  void init(const Model& m, std::size_t groups) {
    if (m.kind == ModelKind::Squared) {
      const std::size_t d4 = 4 * m.cx().e_re.cols();
      s_a.assign(groups, DenseMatrix(d4, d4, 0.0));
      s_p.assign(groups, DenseMatrix(d4, d4, 0.0));
      s_b.assign(groups, DenseMatrix(d4, d4, 0.0));
    } else {
      const std::size_t d = m.cx().e_re.cols();
      for (auto* v : {&cre_s, &cim_s, &cre_p, &cim_p, &cre_o, &cim_o})
        v->assign(groups, std::vector<double>(d, 0.0));
    }
  }
};

inline double pll_term(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       Slot target, const Triple& t, double coef, ModelGrads& g) {
  ensure_cache(m);
  const ModelCache& cache = m.cache;
  const auto& p = m.cx();
  const std::size_t gi = cm ? cm->circuit().group_of_predicate[t.predicate] : 0;

  if (cm && target == Slot::Predicate) {
    auto keys = cm->candidate_scores(Slot::Predicate, Pattern{.s = t.subject, .o = t.object});
    double lm = logsumexp(keys);
    if (!std::isfinite(lm)) throw NumericError("complex: zero-mass predicate context");
    for (std::size_t r = 0; r < keys.size(); ++r) {
      if (!std::isfinite(keys[r])) continue;
      double pi = std::exp(keys[r] - lm);
      Triple tr{t.subject, std::int32_t(r), t.object};
      add_log_score_grad(m, tr, coef * pi, g);
    }
    return lm;
  }

  if (m.kind == ModelKind::Squared) {
    const DenseMatrix *ctx1, *ctx2;
    std::int32_t id1, id2;
    const DenseMatrix* gram;
    std::vector<DenseMatrix>* s_acc;
    if (target == Slot::Object) {
      ctx1 = &cache.lift_a; id1 = t.subject;
      ctx2 = &cache.lift_p; id2 = t.predicate;
      gram = cm ? &cm->group_stats(gi).go : &cache.gram_b;
      s_acc = &acc.s_b;
    } else if (target == Slot::Subject) {
      ctx1 = &cache.lift_p; id1 = t.predicate;
      ctx2 = &cache.lift_b; id2 = t.object;
      gram = cm ? &cm->group_stats(gi).gs : &cache.gram_a;
      s_acc = &acc.s_a;
    } else {
      ctx1 = &cache.lift_a; id1 = t.subject;
      ctx2 = &cache.lift_b; id2 = t.object;
      gram = &cache.gram_p;
      s_acc = &acc.s_p;
    }
    const std::size_t d4 = ctx1->cols();
    auto r1 = ctx1->row(std::size_t(id1)), r2 = ctx2->row(std::size_t(id2));
    std::vector<double> x(d4), y(d4), g1(d4), g2(d4);
    for (std::size_t i = 0; i < d4; ++i) x[i] = r1[i] * r2[i];
    matvec(*gram, x, y);
    double mval = dot(x, y);
    if (mval <= 0.0) throw NumericError("complex: zero-mass context in pll");
    double cc = 2.0 * coef / mval;
    for (std::size_t i = 0; i < d4; ++i) {
      g1[i] = cc * y[i] * r2[i];
      g2[i] = cc * y[i] * r1[i];
    }
    if (target == Slot::Object) {
      unlift_row_a(g1, id1, g);
      unlift_row_p(g2, id2, g);
    } else if (target == Slot::Subject) {
      unlift_row_p(g1, id1, g);
      unlift_row_b(g2, id2, g);
    } else {
      unlift_row_a(g1, id1, g);
      unlift_row_b(g2, id2, g);
    }
    detail::add_outer(x, coef / mval, (*s_acc)[gi]);
    return std::log(mval);
  }

  // NonNegative
  const detail::GroupStats* st = cm ? &cm->group_stats(gi) : nullptr;
  auto re_s = p.e_re.row(t.subject);
  auto im_s = cache.lim_e.row(t.subject);
  auto re_r = p.w_re.row(t.predicate);
  auto im_r = cache.lim_w.row(t.predicate);
  auto re_o = p.e_re.row(t.object);
  auto im_o = cache.lim_e.row(t.object);
  std::span<const double> cs_re, cs_im;
  if (target == Slot::Object) {
    cs_re = st ? std::span<const double>(st->lre_o) : std::span<const double>(cache.lre_e_cs);
    cs_im = st ? std::span<const double>(st->lim_o) : std::span<const double>(cache.lim_e_cs);
    re_o = cs_re;
    im_o = cs_im;
  } else if (target == Slot::Subject) {
    cs_re = st ? std::span<const double>(st->lre_s) : std::span<const double>(cache.lre_e_cs);
    cs_im = st ? std::span<const double>(st->lim_s) : std::span<const double>(cache.lim_e_cs);
    re_s = cs_re;
    im_s = cs_im;
  } else {
    cs_re = std::span<const double>(cache.lre_w_cs);
    cs_im = std::span<const double>(cache.lim_w_cs);
    re_r = cs_re;
    im_r = cs_im;
  }
  CxWeights w = cx_weights(re_s, im_s, re_r, im_r, re_o, im_o);
  if (!std::isfinite(w.logm)) throw NumericError("complex: zero-mass context in pll");
  std::vector<double> cre, cim;
  if (target == Slot::Object) {
    cx_row_subject(m, t.subject, w, coef, g);
    cx_row_predicate(m, t.predicate, w, coef, g);
    side_coeffs(w, Slot::Object, coef, cre, cim);
    axpy(1.0, cre, acc.cre_o[gi]);
    axpy(1.0, cim, acc.cim_o[gi]);
  } else if (target == Slot::Subject) {
    cx_row_predicate(m, t.predicate, w, coef, g);
    cx_row_object(m, t.object, w, coef, g);
    side_coeffs(w, Slot::Subject, coef, cre, cim);
    axpy(1.0, cre, acc.cre_s[gi]);
    axpy(1.0, cim, acc.cim_s[gi]);
  } else {
    cx_row_subject(m, t.subject, w, coef, g);
    cx_row_object(m, t.object, w, coef, g);
    side_coeffs(w, Slot::Predicate, coef, cre, cim);
    axpy(1.0, cre, acc.cre_p[gi]);
    axpy(1.0, cim, acc.cim_p[gi]);
  }
  return w.logm;
}

inline void pll_finish(const Model& m, const ConstrainedModel* cm, PllAccum& acc,
                       ModelGrads& g) {
  ensure_cache(m);
  const ModelCache& cache = m.cache;
  const std::size_t groups = cm ? cm->circuit().groups.size() : 1;
  if (m.kind == ModelKind::Squared) {
    const std::size_t d4 = cache.lift_a.cols();
    DenseMatrix ga(cache.lift_a.rows(), d4, 0.0), gb(cache.lift_b.rows(), d4, 0.0),
        gp(cache.lift_p.rows(), d4, 0.0);
    for (std::size_t gi = 0; gi < groups; ++gi) {
      if (!cm) {
        detail::add_gram_chain(cache.lift_a, acc.s_a[gi], 1.0, ga);
        detail::add_gram_chain(cache.lift_p, acc.s_p[gi], 1.0, gp);
        detail::add_gram_chain(cache.lift_b, acc.s_b[gi], 1.0, gb);
      } else {
        const auto& grp = cm->circuit().groups[gi];
        detail::add_gram_chain_rows(cache.lift_a, acc.s_a[gi], 1.0, grp.kappa_s, ga);
        detail::add_gram_chain_rows(cache.lift_p, acc.s_p[gi], 1.0, grp.predicates, gp);
        detail::add_gram_chain_rows(cache.lift_b, acc.s_b[gi], 1.0, grp.kappa_o, gb);
      }
    }
    cxfam::unlift_entity_grad(ga, gb, g.e_re, g.e_im);
    cxfam::unlift_predicate_grad(gp, g.w_re, g.w_im);
    return;
  }
  for (std::size_t gi = 0; gi < groups; ++gi) {
    if (!cm) {
      cx_colsum_entities(m, acc.cre_s[gi], acc.cim_s[gi], cache.lre_e_cs, cache.lim_e_cs,
                         {}, g);
      cx_colsum_entities(m, acc.cre_o[gi], acc.cim_o[gi], cache.lre_e_cs, cache.lim_e_cs,
                         {}, g);
      cx_colsum_predicates(m, acc.cre_p[gi], acc.cim_p[gi], cache.lre_w_cs,
                           cache.lim_w_cs, {}, g);
    } else {
      const auto& grp = cm->circuit().groups[gi];
      const auto& st = cm->group_stats(gi);
      cx_colsum_entities(m, acc.cre_s[gi], acc.cim_s[gi], st.lre_s, st.lim_s,
                         grp.kappa_s, g);
      cx_colsum_entities(m, acc.cre_o[gi], acc.cim_o[gi], st.lre_o, st.lim_o,
                         grp.kappa_o, g);
      cx_colsum_predicates(m, acc.cre_p[gi], acc.cim_p[gi], st.lre_r, st.lim_r,
                           grp.predicates, g);
    }
  }
}

}  // namespace gekc::cxgrad
