#pragma once

#include <cmath>
#include <vector>

#include "gekc/detail/family_cp.hpp"
#include "gekc/detail/trilinear.hpp"
#include "gekc/model_types.hpp"

namespace gekc::cxfam {

// ComplEx as a trilinear map over 4d-column lifted factors. The four blocks
// hold the components of the real-part expansion of <e_s, w_r, conj(e_o)>;
// the subtraction sign of the fourth component is folded into the predicate
// factor.
inline void build_lift(const ComplexParams& p, DenseMatrix& a, DenseMatrix& pp,
                       DenseMatrix& b) {
  const std::size_t ne = p.e_re.rows(), nr = p.w_re.rows(), d = p.e_re.cols();
  a = DenseMatrix(ne, 4 * d);
  b = DenseMatrix(ne, 4 * d);
  pp = DenseMatrix(nr, 4 * d);
  for (std::size_t u = 0; u < ne; ++u) {
    const double* re = p.e_re.data() + u * d;
    const double* im = p.e_im.data() + u * d;
    double* ar = a.data() + u * 4 * d;
    double* br = b.data() + u * 4 * d;
    for (std::size_t i = 0; i < d; ++i) {
      ar[i] = re[i];
      ar[d + i] = im[i];
      ar[2 * d + i] = re[i];
      ar[3 * d + i] = im[i];
      br[i] = re[i];
      br[d + i] = im[i];
      br[2 * d + i] = im[i];
      br[3 * d + i] = re[i];
    }
  }
  for (std::size_t r = 0; r < nr; ++r) {
    const double* re = p.w_re.data() + r * d;
    const double* im = p.w_im.data() + r * d;
    double* pr = pp.data() + r * 4 * d;
    for (std::size_t i = 0; i < d; ++i) {
      pr[i] = re[i];
      pr[d + i] = re[i];
      pr[2 * d + i] = im[i];
      pr[3 * d + i] = -im[i];
    }
  }
}

// Accumulate lifted-factor gradients back onto the stored parameter tables.
inline void unlift_entity_grad(const DenseMatrix& ga, const DenseMatrix& gb,
                               DenseMatrix& g_re, DenseMatrix& g_im) {
  const std::size_t ne = g_re.rows(), d = g_re.cols();
  for (std::size_t u = 0; u < ne; ++u) {
    const double* ar = ga.data() + u * 4 * d;
    const double* br = gb.data() + u * 4 * d;
    double* re = g_re.data() + u * d;
    double* im = g_im.data() + u * d;
    for (std::size_t i = 0; i < d; ++i) {
      re[i] += ar[i] + ar[2 * d + i] + br[i] + br[3 * d + i];
      im[i] += ar[d + i] + ar[3 * d + i] + br[d + i] + br[2 * d + i];
    }
  }
}

inline void unlift_predicate_grad(const DenseMatrix& gp, DenseMatrix& g_re,
                                  DenseMatrix& g_im) {
  const std::size_t nr = g_re.rows(), d = g_re.cols();
  for (std::size_t r = 0; r < nr; ++r) {
    const double* pr = gp.data() + r * 4 * d;
    double* re = g_re.data() + r * d;
    double* im = g_im.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      re[i] += pr[i] + pr[d + i];
      im[i] += pr[2 * d + i] - pr[3 * d + i];
    }
  }
}

// log of the non-negative ComplEx+ form given per-side log factors (each a
// row of the log tables or a column-sum vector). The reparametrised tables
// satisfy Im <= Re elementwise, which guarantees pos >= neg.
inline double logsum_4term(std::span<const double> lre_s, std::span<const double> lim_s,
                           std::span<const double> lre_r, std::span<const double> lim_r,
                           std::span<const double> lre_o, std::span<const double> lim_o) {
  const std::size_t d = lre_s.size();
  std::vector<double> pos(3 * d), neg(d);
  for (std::size_t i = 0; i < d; ++i) {
    pos[i] = lre_s[i] + lre_r[i] + lre_o[i];
    pos[d + i] = lim_s[i] + lre_r[i] + lim_o[i];
    pos[2 * d + i] = lre_s[i] + lim_r[i] + lim_o[i];
    neg[i] = lim_s[i] + lim_r[i] + lre_o[i];
  }
  return log_diff_exp(logsumexp(pos), logsumexp(neg));
}

inline void build_cache(const Model& m, ModelCache& c) {
  const ComplexParams& p = m.cx();
  if (m.kind == ModelKind::NonNegative) {
    const std::size_t ne = p.e_re.rows(), nr = p.w_re.rows(), d = p.e_re.cols();
    c.lim_e = DenseMatrix(ne, d);
    c.lim_w = DenseMatrix(nr, d);
    for (std::size_t u = 0; u < ne; ++u)
      for (std::size_t i = 0; i < d; ++i)
        c.lim_e(u, i) = p.e_re(u, i) + log_sigmoid(p.theta(u, i));
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t i = 0; i < d; ++i)
        c.lim_w(r, i) = p.w_re(r, i) + log_sigmoid(p.gamma(r, i));
    c.lre_e_cs = logtri::log_colsums(p.e_re);
    c.lim_e_cs = logtri::log_colsums(c.lim_e);
    c.lre_w_cs = logtri::log_colsums(p.w_re);
    c.lim_w_cs = logtri::log_colsums(c.lim_w);
    return;
  }
  build_lift(p, c.lift_a, c.lift_p, c.lift_b);
  if (m.kind == ModelKind::Squared) {
    c.gram_a = gram(c.lift_a);
    c.gram_p = gram(c.lift_p);
    c.gram_b = gram(c.lift_b);
  }
}

inline double score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const ComplexParams& p = m.cx();
  if (m.kind == ModelKind::NonNegative) {
    const ModelCache& c = m.cache;
    return std::exp(logsum_4term(p.e_re.row(std::size_t(s)), c.lim_e.row(std::size_t(s)),
                                 p.w_re.row(std::size_t(r)), c.lim_w.row(std::size_t(r)),
                                 p.e_re.row(std::size_t(o)), c.lim_e.row(std::size_t(o))));
  }
  const ModelCache& c = m.cache;
  double ph = tri::score(c.lift_a, c.lift_p, c.lift_b, s, r, o);
  return m.kind == ModelKind::Squared ? ph * ph : ph;
}

inline double log_score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const ComplexParams& p = m.cx();
  const ModelCache& c = m.cache;
  if (m.kind == ModelKind::NonNegative)
    return logsum_4term(p.e_re.row(std::size_t(s)), c.lim_e.row(std::size_t(s)),
                        p.w_re.row(std::size_t(r)), c.lim_w.row(std::size_t(r)),
                        p.e_re.row(std::size_t(o)), c.lim_e.row(std::size_t(o)));
  double ph = tri::score(c.lift_a, c.lift_p, c.lift_b, s, r, o);
  return ph == 0.0 ? -std::numeric_limits<double>::infinity()
                   : 2.0 * std::log(std::fabs(ph));
}

inline double log_marginal(const Model& m, const Pattern& q) {
  const ComplexParams& p = m.cx();
  const ModelCache& c = m.cache;
  if (m.kind == ModelKind::NonNegative) {
    auto re_s = q.s ? p.e_re.row(std::size_t(*q.s)) : std::span<const double>(c.lre_e_cs);
    auto im_s = q.s ? c.lim_e.row(std::size_t(*q.s)) : std::span<const double>(c.lim_e_cs);
    auto re_r = q.r ? p.w_re.row(std::size_t(*q.r)) : std::span<const double>(c.lre_w_cs);
    auto im_r = q.r ? c.lim_w.row(std::size_t(*q.r)) : std::span<const double>(c.lim_w_cs);
    auto re_o = q.o ? p.e_re.row(std::size_t(*q.o)) : std::span<const double>(c.lre_e_cs);
    auto im_o = q.o ? c.lim_e.row(std::size_t(*q.o)) : std::span<const double>(c.lim_e_cs);
    return logsum_4term(re_s, im_s, re_r, im_r, re_o, im_o);
  }
  // Squared: same contraction structure as CP over the lifted factors.
  double v = 0.0;
  const int wc = int(q.wildcards());
  if (wc == 3) {
    v = tri::z_squared(c.gram_a, c.gram_p, c.gram_b);
  } else if (wc == 1) {
    if (!q.o)
      v = tri::marg_squared(c.gram_b, c.lift_a.row(std::size_t(*q.s)),
                            c.lift_p.row(std::size_t(*q.r)));
    else if (!q.r)
      v = tri::marg_squared(c.gram_p, c.lift_a.row(std::size_t(*q.s)),
                            c.lift_b.row(std::size_t(*q.o)));
    else
      v = tri::marg_squared(c.gram_a, c.lift_p.row(std::size_t(*q.r)),
                            c.lift_b.row(std::size_t(*q.o)));
  } else {
    if (q.s) v = tri::marg2_squared(c.gram_p, c.gram_b, c.lift_a.row(std::size_t(*q.s)));
    else if (q.r) v = tri::marg2_squared(c.gram_a, c.gram_b, c.lift_p.row(std::size_t(*q.r)));
    else v = tri::marg2_squared(c.gram_a, c.gram_p, c.lift_b.row(std::size_t(*q.o)));
  }
  v = std::max(v, 0.0);
  return v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
}

inline std::vector<double> slot_scores(const Model& m, Slot target, const Pattern& q) {
  const ComplexParams& p = m.cx();
  const ModelCache& c = m.cache;
  if (m.kind != ModelKind::NonNegative) {
    const DenseMatrix& table = target == Slot::Subject ? c.lift_a
                               : target == Slot::Predicate ? c.lift_p
                                                           : c.lift_b;
    const DenseMatrix *m1, *m2;
    std::optional<std::int32_t> i1, i2;
    const DenseMatrix *g1, *g2;
    if (target == Slot::Subject) {
      m1 = &c.lift_p; i1 = q.r; g1 = &c.gram_p;
      m2 = &c.lift_b; i2 = q.o; g2 = &c.gram_b;
    } else if (target == Slot::Predicate) {
      m1 = &c.lift_a; i1 = q.s; g1 = &c.gram_a;
      m2 = &c.lift_b; i2 = q.o; g2 = &c.gram_b;
    } else {
      m1 = &c.lift_a; i1 = q.s; g1 = &c.gram_a;
      m2 = &c.lift_p; i2 = q.r; g2 = &c.gram_p;
    }
    if (m.kind == ModelKind::EnergyBased) {
      if (!i1 || !i2)
        throw ArgumentError("energy-based models do not support marginal contexts");
      return tri::score_vec(table, m1->row(std::size_t(*i1)), m2->row(std::size_t(*i2)));
    }
    auto out = tri::sq_slot_scores(table, i1 ? m1->row(std::size_t(*i1)).data() : nullptr,
                                   g1, i2 ? m2->row(std::size_t(*i2)).data() : nullptr, g2);
    for (double& v : out)
      v = v <= 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
    return out;
  }
  // NonNegative: substitute the candidate side of the 4-term form.
  auto re_s = q.s ? p.e_re.row(std::size_t(*q.s)) : std::span<const double>(c.lre_e_cs);
  auto im_s = q.s ? c.lim_e.row(std::size_t(*q.s)) : std::span<const double>(c.lim_e_cs);
  auto re_r = q.r ? p.w_re.row(std::size_t(*q.r)) : std::span<const double>(c.lre_w_cs);
  auto im_r = q.r ? c.lim_w.row(std::size_t(*q.r)) : std::span<const double>(c.lim_w_cs);
  auto re_o = q.o ? p.e_re.row(std::size_t(*q.o)) : std::span<const double>(c.lre_e_cs);
  auto im_o = q.o ? c.lim_e.row(std::size_t(*q.o)) : std::span<const double>(c.lim_e_cs);
  const std::size_t n =
      target == Slot::Predicate ? p.w_re.rows() : p.e_re.rows();
  std::vector<double> out(n);
  for (std::size_t u = 0; u < n; ++u) {
    if (target == Slot::Subject)
      out[u] = logsum_4term(p.e_re.row(u), c.lim_e.row(u), re_r, im_r, re_o, im_o);
    else if (target == Slot::Predicate)
      out[u] = logsum_4term(re_s, im_s, p.w_re.row(u), c.lim_w.row(u), re_o, im_o);
    else
      out[u] = logsum_4term(re_s, im_s, re_r, im_r, p.e_re.row(u), c.lim_e.row(u));
  }
  return out;
}

}  // namespace gekc::cxfam
