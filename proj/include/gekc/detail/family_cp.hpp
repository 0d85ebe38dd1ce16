#pragma once

#include <cmath>
#include <vector>

#include "gekc/detail/trilinear.hpp"
#include "gekc/model_types.hpp"

namespace gekc::tri {

// Squared-kind scores over every candidate row of `table`. Each context side
// is either a fixed row or summed out through its Gram matrix.
inline std::vector<double> sq_slot_scores(const DenseMatrix& table, const double* row1,
                                          const DenseMatrix* g1, const double* row2,
                                          const DenseMatrix* g2) {
  const std::size_t n = table.rows(), d = table.cols();
  std::vector<double> out(n);
  if (row1 && row2) {
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = row1[i] * row2[i];
    matvec(table, x, out);
    for (double& v : out) v *= v;
    return out;
  }
  if (!row1 && !row2) {
    DenseMatrix h(d, d);
    for (std::size_t k = 0; k < h.size(); ++k)
      h.data()[k] = g1->data()[k] * g2->data()[k];
    for (std::size_t c = 0; c < n; ++c) out[c] = quadratic_form(h, table.row(c));
    return out;
  }
  const double* row = row1 ? row1 : row2;
  const DenseMatrix* g = row1 ? g2 : g1;
  std::vector<double> x(d);
  for (std::size_t c = 0; c < n; ++c) {
    const double* tc = table.data() + c * d;
    for (std::size_t i = 0; i < d; ++i) x[i] = tc[i] * row[i];
    out[c] = quadratic_form(*g, x);
  }
  return out;
}

}  // namespace gekc::tri

namespace gekc::cpfam {

inline void build_cache(const Model& m, ModelCache& c) {
  const CpParams& p = m.cp();
  if (m.kind == ModelKind::Squared) {
    c.gram_a = gram(p.u);
    c.gram_p = gram(p.w);
    c.gram_b = gram(p.v);
  } else if (m.kind == ModelKind::NonNegative) {
    c.lca = logtri::log_colsums(p.u);
    c.lcp = logtri::log_colsums(p.w);
    c.lcb = logtri::log_colsums(p.v);
  }
}

inline double score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const CpParams& p = m.cp();
  switch (m.kind) {
    case ModelKind::EnergyBased: return tri::score(p.u, p.w, p.v, s, r, o);
    case ModelKind::NonNegative:
      return std::exp(logtri::log_score(p.u, p.w, p.v, s, r, o));
    case ModelKind::Squared: {
      double ph = tri::score(p.u, p.w, p.v, s, r, o);
      return ph * ph;
    }
  }
  return 0.0;
}

inline double log_score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const CpParams& p = m.cp();
  if (m.kind == ModelKind::NonNegative)
    return logtri::log_score(p.u, p.w, p.v, s, r, o);
  double ph = tri::score(p.u, p.w, p.v, s, r, o);
  return ph == 0.0 ? -std::numeric_limits<double>::infinity()
                   : 2.0 * std::log(std::fabs(ph));
}

inline double log_marginal(const Model& m, const Pattern& q) {
  const CpParams& p = m.cp();
  const ModelCache& c = m.cache;
  if (m.kind == ModelKind::NonNegative) {
    const std::size_t d = p.u.cols();
    std::vector<double> f1(d), f2(d), f3(d);
    for (std::size_t i = 0; i < d; ++i) {
      f1[i] = q.s ? p.u(std::size_t(*q.s), i) : c.lca[i];
      f2[i] = q.r ? p.w(std::size_t(*q.r), i) : c.lcp[i];
      f3[i] = q.o ? p.v(std::size_t(*q.o), i) : c.lcb[i];
    }
    return logtri::log_contract3(f1, f2, f3);
  }
  // Squared
  double v = 0.0;
  const int wc = int(q.wildcards());
  if (wc == 3) {
    v = tri::z_squared(c.gram_a, c.gram_p, c.gram_b);
  } else if (wc == 1) {
    if (!q.o)
      v = tri::marg_squared(c.gram_b, p.u.row(std::size_t(*q.s)), p.w.row(std::size_t(*q.r)));
    else if (!q.r)
      v = tri::marg_squared(c.gram_p, p.u.row(std::size_t(*q.s)), p.v.row(std::size_t(*q.o)));
    else
      v = tri::marg_squared(c.gram_a, p.w.row(std::size_t(*q.r)), p.v.row(std::size_t(*q.o)));
  } else {
    if (q.s) v = tri::marg2_squared(c.gram_p, c.gram_b, p.u.row(std::size_t(*q.s)));
    else if (q.r) v = tri::marg2_squared(c.gram_a, c.gram_b, p.w.row(std::size_t(*q.r)));
    else v = tri::marg2_squared(c.gram_a, c.gram_p, p.v.row(std::size_t(*q.o)));
  }
  v = std::max(v, 0.0);
  return v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
}

// Ranking keys over the target slot: raw phi for EnergyBased, log phi for
// GeKC kinds. Context slots may be wildcards for GeKC kinds only.
inline std::vector<double> slot_scores(const Model& m, Slot target, const Pattern& q) {
  const CpParams& p = m.cp();
  const ModelCache& c = m.cache;
  const DenseMatrix& table = target == Slot::Subject ? p.u
                             : target == Slot::Predicate ? p.w
                                                         : p.v;
  struct Side {
    const DenseMatrix* mat;
    std::optional<std::int32_t> id;
    const std::vector<double>* lcs;
    const DenseMatrix* g;
  };
  Side s1, s2;
  if (target == Slot::Subject) {
    s1 = {&p.w, q.r, &c.lcp, &c.gram_p};
    s2 = {&p.v, q.o, &c.lcb, &c.gram_b};
  } else if (target == Slot::Predicate) {
    s1 = {&p.u, q.s, &c.lca, &c.gram_a};
    s2 = {&p.v, q.o, &c.lcb, &c.gram_b};
  } else {
    s1 = {&p.u, q.s, &c.lca, &c.gram_a};
    s2 = {&p.w, q.r, &c.lcp, &c.gram_p};
  }
  if (m.kind == ModelKind::EnergyBased) {
    if (!s1.id || !s2.id)
      throw ArgumentError("energy-based models do not support marginal contexts");
    return tri::score_vec(table, s1.mat->row(std::size_t(*s1.id)),
                          s2.mat->row(std::size_t(*s2.id)));
  }
  if (m.kind == ModelKind::NonNegative) {
    const std::size_t d = table.cols();
    std::vector<double> lctx(d);
    for (std::size_t i = 0; i < d; ++i) {
      double a = s1.id ? (*s1.mat)(std::size_t(*s1.id), i) : (*s1.lcs)[i];
      double b = s2.id ? (*s2.mat)(std::size_t(*s2.id), i) : (*s2.lcs)[i];
      lctx[i] = a + b;
    }
    return logtri::log_score_vec(table, lctx);
  }
  auto out = tri::sq_slot_scores(
      table, s1.id ? s1.mat->row(std::size_t(*s1.id)).data() : nullptr, s1.g,
      s2.id ? s2.mat->row(std::size_t(*s2.id)).data() : nullptr, s2.g);
  for (double& v : out)
    v = v <= 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
  return out;
}

}  // namespace gekc::cpfam
