#pragma once

#include <cmath>
#include <vector>

#include "gekc/detail/trilinear.hpp"
#include "gekc/model_types.hpp"

namespace gekc::tkfam {

// Core-tensor contractions; the core is indexed core[(i*dr + j)*de + k].

// M_s = T x1 e_s: (dr x de), M[j][k] = sum_i T_ijk e_i
inline DenseMatrix contract_subject(const TuckerParams& p, std::span<const double> e) {
  DenseMatrix out(p.dr, p.de, 0.0);
  for (std::size_t i = 0; i < p.de; ++i) {
    const double ei = e[i];
    if (ei == 0.0) continue;
    const double* ti = p.core.data() + i * p.dr * p.de;
    for (std::size_t j = 0; j < p.dr; ++j)
      for (std::size_t k = 0; k < p.de; ++k) out(j, k) += ei * ti[j * p.de + k];
  }
  return out;
}

// N_r = T x2 w_r: (de x de), N[i][k] = sum_j T_ijk w_j
inline DenseMatrix contract_predicate(const TuckerParams& p, std::span<const double> w) {
  DenseMatrix out(p.de, p.de, 0.0);
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t j = 0; j < p.dr; ++j) {
      const double wj = w[j];
      if (wj == 0.0) continue;
      const double* t = p.core.data() + (i * p.dr + j) * p.de;
      for (std::size_t k = 0; k < p.de; ++k) out(i, k) += wj * t[k];
    }
  return out;
}

// P_o = T x3 e_o: (de x dr), P[i][j] = sum_k T_ijk e_k
inline DenseMatrix contract_object(const TuckerParams& p, std::span<const double> e) {
  DenseMatrix out(p.de, p.dr, 0.0);
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t j = 0; j < p.dr; ++j) {
      const double* t = p.core.data() + (i * p.dr + j) * p.de;
      double acc = 0.0;
      for (std::size_t k = 0; k < p.de; ++k) acc += t[k] * e[k];
      out(i, j) = acc;
    }
  return out;
}

// q_k(s,r) = sum_ij T_ijk e_si w_rj
inline std::vector<double> ctx_object(const TuckerParams& p, std::span<const double> es,
                                      std::span<const double> wr) {
  DenseMatrix ms = contract_subject(p, es);  // dr x de
  std::vector<double> q(p.de, 0.0);
  for (std::size_t j = 0; j < p.dr; ++j)
    for (std::size_t k = 0; k < p.de; ++k) q[k] += wr[j] * ms(j, k);
  return q;
}

// m_i(r,o) = sum_jk T_ijk w_rj e_ok
inline std::vector<double> ctx_subject(const TuckerParams& p, std::span<const double> wr,
                                       std::span<const double> eo) {
  DenseMatrix po = contract_object(p, eo);  // de x dr
  std::vector<double> mv(p.de, 0.0);
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t j = 0; j < p.dr; ++j) mv[i] += po(i, j) * wr[j];
  return mv;
}

// u_j(s,o) = sum_ik T_ijk e_si e_ok
inline std::vector<double> ctx_predicate(const TuckerParams& p, std::span<const double> es,
                                         std::span<const double> eo) {
  DenseMatrix ms = contract_subject(p, es);  // dr x de
  std::vector<double> u(p.dr, 0.0);
  for (std::size_t j = 0; j < p.dr; ++j)
    for (std::size_t k = 0; k < p.de; ++k) u[j] += ms(j, k) * eo[k];
  return u;
}

// Contract one mode of the core with a square matrix: out has the same
// shape, out[.., a, ..] = sum_b core[.., b, ..] M(b, a).
inline std::vector<double> mode_product(const std::vector<double>& t, std::size_t de,
                                        std::size_t dr, const DenseMatrix& m, int mode) {
  std::vector<double> out(t.size(), 0.0);
  if (mode == 0) {
    for (std::size_t a = 0; a < de; ++a)
      for (std::size_t b = 0; b < de; ++b) {
        const double mb = m(b, a);
        if (mb == 0.0) continue;
        const double* src = t.data() + b * dr * de;
        double* dst = out.data() + a * dr * de;
        for (std::size_t x = 0; x < dr * de; ++x) dst[x] += mb * src[x];
      }
  } else if (mode == 1) {
    for (std::size_t i = 0; i < de; ++i)
      for (std::size_t a = 0; a < dr; ++a)
        for (std::size_t b = 0; b < dr; ++b) {
          const double mb = m(b, a);
          if (mb == 0.0) continue;
          const double* src = t.data() + (i * dr + b) * de;
          double* dst = out.data() + (i * dr + a) * de;
          for (std::size_t k = 0; k < de; ++k) dst[k] += mb * src[k];
        }
  } else {
    for (std::size_t ij = 0; ij < de * dr; ++ij) {
      const double* src = t.data() + ij * de;
      double* dst = out.data() + ij * de;
      for (std::size_t b = 0; b < de; ++b) {
        const double sb = src[b];
        if (sb == 0.0) continue;
        const double* mrow = m.data() + b * de;
        for (std::size_t a = 0; a < de; ++a) dst[a] += sb * mrow[a];
      }
    }
  }
  return out;
}

inline void build_cache(const Model& m, ModelCache& c) {
  const TuckerParams& p = m.tk();
  if (m.kind == ModelKind::NonNegative) {
    c.lca = logtri::log_colsums(p.e);
    c.lcp = logtri::log_colsums(p.w);
    return;
  }
  if (m.kind != ModelKind::Squared) return;
  c.gram_a = gram(p.e);   // E' (de x de)
  c.gram_p = gram(p.w);   // W' (dr x dr)
  const std::size_t de = p.de, dr = p.dr;
  // Kp = T x1 E' x2 W'; G = Kp x3 E'
  std::vector<double> kp = mode_product(p.core, de, dr, c.gram_a, 0);
  kp = mode_product(kp, de, dr, c.gram_p, 1);
  c.g_tensor = mode_product(kp, de, dr, c.gram_a, 2);
  // H = T x2 W' x3 E' -> M1(i,l) = sum_jk T_ijk H_ljk
  std::vector<double> h = mode_product(p.core, de, dr, c.gram_p, 1);
  h = mode_product(h, de, dr, c.gram_a, 2);
  c.m1 = DenseMatrix(de, de, 0.0);
  for (std::size_t i = 0; i < de; ++i)
    for (std::size_t l = 0; l < de; ++l) {
      const double* ti = p.core.data() + i * dr * de;
      const double* hl = h.data() + l * dr * de;
      double acc = 0.0;
      for (std::size_t x = 0; x < dr * de; ++x) acc += ti[x] * hl[x];
      c.m1(i, l) = acc;
    }
  // Y = T x1 E' x3 E' -> M2(j,m) = sum_{l,n} Y_ljn T_lmn
  std::vector<double> y = mode_product(p.core, de, dr, c.gram_a, 0);
  y = mode_product(y, de, dr, c.gram_a, 2);
  c.m2 = DenseMatrix(dr, dr, 0.0);
  for (std::size_t j = 0; j < dr; ++j)
    for (std::size_t mm = 0; mm < dr; ++mm) {
      double acc = 0.0;
      for (std::size_t l = 0; l < de; ++l)
        for (std::size_t n = 0; n < de; ++n)
          acc += y[(l * dr + j) * de + n] * p.core[(l * dr + mm) * de + n];
      c.m2(j, mm) = acc;
    }
  // M3(k,n) = sum_{l,m} Kp_lmk T_lmn
  c.m3 = DenseMatrix(de, de, 0.0);
  for (std::size_t k = 0; k < de; ++k)
    for (std::size_t n = 0; n < de; ++n) {
      double acc = 0.0;
      for (std::size_t l = 0; l < de; ++l)
        for (std::size_t mm = 0; mm < dr; ++mm)
          acc += kp[(l * dr + mm) * de + k] * p.core[(l * dr + mm) * de + n];
      c.m3(k, n) = acc;
    }
}

inline double raw_score(const TuckerParams& p, std::int32_t s, std::int32_t r,
                        std::int32_t o) {
  auto q = ctx_object(p, p.e.row(std::size_t(s)), p.w.row(std::size_t(r)));
  return dot(q, p.e.row(std::size_t(o)));
}

// logsumexp_ijk (lt_ijk + f1_i + f2_j + f3_k)
inline double log_contract_core(const TuckerParams& p, std::span<const double> f1,
                                std::span<const double> f2, std::span<const double> f3) {
  std::vector<double> terms;
  terms.reserve(p.core.size());
  for (std::size_t i = 0; i < p.de; ++i)
    for (std::size_t j = 0; j < p.dr; ++j) {
      const double* t = p.core.data() + (i * p.dr + j) * p.de;
      const double f12 = f1[i] + f2[j];
      for (std::size_t k = 0; k < p.de; ++k) terms.push_back(t[k] + f12 + f3[k]);
    }
  return logsumexp(terms);
}

inline double log_score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const TuckerParams& p = m.tk();
  if (m.kind == ModelKind::NonNegative)
    return log_contract_core(p, p.e.row(std::size_t(s)), p.w.row(std::size_t(r)),
                             p.e.row(std::size_t(o)));
  double ph = raw_score(p, s, r, o);
  return ph == 0.0 ? -std::numeric_limits<double>::infinity()
                   : 2.0 * std::log(std::fabs(ph));
}

inline double score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const TuckerParams& p = m.tk();
  if (m.kind == ModelKind::NonNegative) return std::exp(log_score(m, s, r, o));
  double ph = raw_score(p, s, r, o);
  return m.kind == ModelKind::Squared ? ph * ph : ph;
}

inline double log_marginal(const Model& m, const Pattern& q) {
  const TuckerParams& p = m.tk();
  const ModelCache& c = m.cache;
  if (m.kind == ModelKind::NonNegative) {
    auto f1 = q.s ? p.e.row(std::size_t(*q.s)) : std::span<const double>(c.lca);
    auto f2 = q.r ? p.w.row(std::size_t(*q.r)) : std::span<const double>(c.lcp);
    auto f3 = q.o ? p.e.row(std::size_t(*q.o)) : std::span<const double>(c.lca);
    return log_contract_core(p, f1, f2, f3);
  }
  double v = 0.0;
  const int wc = int(q.wildcards());
  if (wc == 3) {
    v = 0.0;
    for (std::size_t x = 0; x < p.core.size(); ++x) v += p.core[x] * c.g_tensor[x];
  } else if (wc == 1) {
    if (!q.o) {
      auto qv = ctx_object(p, p.e.row(std::size_t(*q.s)), p.w.row(std::size_t(*q.r)));
      v = quadratic_form(c.gram_a, qv);
    } else if (!q.s) {
      auto mv = ctx_subject(p, p.w.row(std::size_t(*q.r)), p.e.row(std::size_t(*q.o)));
      v = quadratic_form(c.gram_a, mv);
    } else {
      auto uv = ctx_predicate(p, p.e.row(std::size_t(*q.s)), p.e.row(std::size_t(*q.o)));
      v = quadratic_form(c.gram_p, uv);
    }
  } else {
    if (q.s) v = quadratic_form(c.m1, p.e.row(std::size_t(*q.s)));
    else if (q.r) v = quadratic_form(c.m2, p.w.row(std::size_t(*q.r)));
    else v = quadratic_form(c.m3, p.e.row(std::size_t(*q.o)));
  }
  v = std::max(v, 0.0);
  return v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
}

inline std::vector<double> slot_scores(const Model& m, Slot target, const Pattern& q) {
  const TuckerParams& p = m.tk();
  const ModelCache& c = m.cache;
  const std::size_t ne = p.e.rows(), nr = p.w.rows();
  if (m.kind == ModelKind::EnergyBased) {
    std::vector<double> out;
    if (target == Slot::Object) {
      if (!q.s || !q.r) throw ArgumentError("energy-based models need a full context");
      auto qv = ctx_object(p, p.e.row(std::size_t(*q.s)), p.w.row(std::size_t(*q.r)));
      out.resize(ne);
      matvec(p.e, qv, out);
    } else if (target == Slot::Subject) {
      if (!q.r || !q.o) throw ArgumentError("energy-based models need a full context");
      auto mv = ctx_subject(p, p.w.row(std::size_t(*q.r)), p.e.row(std::size_t(*q.o)));
      out.resize(ne);
      matvec(p.e, mv, out);
    } else {
      if (!q.s || !q.o) throw ArgumentError("energy-based models need a full context");
      auto uv = ctx_predicate(p, p.e.row(std::size_t(*q.s)), p.e.row(std::size_t(*q.o)));
      out.resize(nr);
      matvec(p.w, uv, out);
    }
    return out;
  }
  if (m.kind == ModelKind::NonNegative) {
    // fold the two context sides into per-axis log coefficients
    auto f1 = q.s ? p.e.row(std::size_t(*q.s)) : std::span<const double>(c.lca);
    auto f2 = q.r ? p.w.row(std::size_t(*q.r)) : std::span<const double>(c.lcp);
    auto f3 = q.o ? p.e.row(std::size_t(*q.o)) : std::span<const double>(c.lca);
    std::vector<double> lctx;
    if (target == Slot::Object) {
      lctx.assign(p.de, 0.0);
      std::vector<double> terms(p.de * p.dr);
      for (std::size_t k = 0; k < p.de; ++k) {
        std::size_t n = 0;
        for (std::size_t i = 0; i < p.de; ++i)
          for (std::size_t j = 0; j < p.dr; ++j)
            terms[n++] = p.core[(i * p.dr + j) * p.de + k] + f1[i] + f2[j];
        lctx[k] = logsumexp(terms);
      }
      return logtri::log_score_vec(p.e, lctx);
    }
    if (target == Slot::Subject) {
      lctx.assign(p.de, 0.0);
      std::vector<double> terms(p.dr * p.de);
      for (std::size_t i = 0; i < p.de; ++i) {
        std::size_t n = 0;
        for (std::size_t j = 0; j < p.dr; ++j) {
          const double* t = p.core.data() + (i * p.dr + j) * p.de;
          for (std::size_t k = 0; k < p.de; ++k) terms[n++] = t[k] + f2[j] + f3[k];
        }
        lctx[i] = logsumexp(terms);
      }
      return logtri::log_score_vec(p.e, lctx);
    }
    lctx.assign(p.dr, 0.0);
    std::vector<double> terms(p.de * p.de);
    for (std::size_t j = 0; j < p.dr; ++j) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < p.de; ++i) {
        const double* t = p.core.data() + (i * p.dr + j) * p.de;
        for (std::size_t k = 0; k < p.de; ++k) terms[n++] = t[k] + f1[i] + f3[k];
      }
      lctx[j] = logsumexp(terms);
    }
    return logtri::log_score_vec(p.w, lctx);
  }
  // Squared
  std::vector<double> out;
  auto quad_rows = [](const DenseMatrix& table, const DenseMatrix& quad) {
    std::vector<double> r(table.rows());
    for (std::size_t u = 0; u < table.rows(); ++u)
      r[u] = quadratic_form(quad, table.row(u));
    return r;
  };
  if (target == Slot::Object) {
    if (q.s && q.r) {
      auto qv = ctx_object(p, p.e.row(std::size_t(*q.s)), p.w.row(std::size_t(*q.r)));
      out.resize(ne);
      matvec(p.e, qv, out);
      for (double& v : out) v *= v;
    } else if (q.s) {
      DenseMatrix ms = contract_subject(p, p.e.row(std::size_t(*q.s)));  // dr x de
      DenseMatrix quad = matmul(matmul(transpose(ms), c.gram_p), ms);    // de x de
      out = quad_rows(p.e, quad);
    } else if (q.r) {
      DenseMatrix nrm = contract_predicate(p, p.w.row(std::size_t(*q.r)));  // de x de
      DenseMatrix quad = matmul(matmul(transpose(nrm), c.gram_a), nrm);
      out = quad_rows(p.e, quad);
    } else {
      out = quad_rows(p.e, c.m3);
    }
  } else if (target == Slot::Subject) {
    if (q.r && q.o) {
      auto mv = ctx_subject(p, p.w.row(std::size_t(*q.r)), p.e.row(std::size_t(*q.o)));
      out.resize(ne);
      matvec(p.e, mv, out);
      for (double& v : out) v *= v;
    } else if (q.r) {
      DenseMatrix nrm = contract_predicate(p, p.w.row(std::size_t(*q.r)));
      DenseMatrix quad = matmul(matmul(nrm, c.gram_a), transpose(nrm));
      out = quad_rows(p.e, quad);
    } else if (q.o) {
      DenseMatrix po = contract_object(p, p.e.row(std::size_t(*q.o)));  // de x dr
      DenseMatrix quad = matmul(matmul(po, c.gram_p), transpose(po));
      out = quad_rows(p.e, quad);
    } else {
      out = quad_rows(p.e, c.m1);
    }
  } else {
    if (q.s && q.o) {
      auto uv = ctx_predicate(p, p.e.row(std::size_t(*q.s)), p.e.row(std::size_t(*q.o)));
      out.resize(nr);
      matvec(p.w, uv, out);
      for (double& v : out) v *= v;
    } else if (q.s) {
      DenseMatrix ms = contract_subject(p, p.e.row(std::size_t(*q.s)));  // dr x de
      DenseMatrix quad = matmul(matmul(ms, c.gram_a), transpose(ms));    // dr x dr
      out = quad_rows(p.w, quad);
    } else if (q.o) {
      DenseMatrix po = contract_object(p, p.e.row(std::size_t(*q.o)));  // de x dr
      DenseMatrix quad = matmul(matmul(transpose(po), c.gram_a), po);
      out = quad_rows(p.w, quad);
    } else {
      out = quad_rows(p.w, c.m2);
    }
  }
  for (double& v : out)
    v = v <= 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
  return out;
}

}  // namespace gekc::tkfam
