#pragma once

#include <cmath>
#include <vector>

#include "gekc/detail/trilinear.hpp"
#include "gekc/model_types.hpp"

namespace gekc::rsfam {

inline double bilinear(std::span<const double> x, const DenseMatrix& w,
                       std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* wi = w.data() + i * w.cols();
    double t = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) t += wi[j] * y[j];
    acc += x[i] * t;
  }
  return acc;
}

// t = W^T x
inline std::vector<double> wt_x(const DenseMatrix& w, std::span<const double> x) {
  std::vector<double> t(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* wi = w.data() + i * w.cols();
    for (std::size_t j = 0; j < w.cols(); ++j) t[j] += x[i] * wi[j];
  }
  return t;
}

// t = W y
inline std::vector<double> w_y(const DenseMatrix& w, std::span<const double> y) {
  std::vector<double> t(w.rows());
  matvec(w, y, t);
  return t;
}

inline void build_cache(const Model& m, ModelCache& c) {
  const RescalParams& p = m.rs();
  const std::size_t d = p.e.cols();
  if (m.kind == ModelKind::Squared) {
    c.gram_a = gram(p.e);
    c.q1 = DenseMatrix(d, d, 0.0);
    c.q2 = DenseMatrix(d, d, 0.0);
    for (const DenseMatrix& w : p.w) {
      DenseMatrix we = matmul(w, c.gram_a);        // W_r E'
      DenseMatrix wewt = matmul(we, transpose(w)); // W_r E' W_r^T
      DenseMatrix wt = transpose(w);
      DenseMatrix wte = matmul(wt, c.gram_a);
      DenseMatrix wtew = matmul(wte, w);           // W_r^T E' W_r
      for (std::size_t k = 0; k < c.q1.size(); ++k) {
        c.q1.data()[k] += wewt.data()[k];
        c.q2.data()[k] += wtew.data()[k];
      }
    }
  } else if (m.kind == ModelKind::NonNegative) {
    c.lca = logtri::log_colsums(p.e);
    c.lw_bar = DenseMatrix(d, d, -std::numeric_limits<double>::infinity());
    std::vector<double> terms(p.w.size());
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t r = 0; r < p.w.size(); ++r) terms[r] = p.w[r](i, j);
        c.lw_bar(i, j) = logsumexp(terms);
      }
  }
}

// logsumexp_ij (f1_i + lw_ij + f2_j)
inline double log_contract_bilinear(std::span<const double> f1, const DenseMatrix& lw,
                                    std::span<const double> f2) {
  const std::size_t d = lw.rows();
  std::vector<double> terms;
  terms.reserve(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) terms.push_back(f1[i] + lw(i, j) + f2[j]);
  return logsumexp(terms);
}

inline double score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const RescalParams& p = m.rs();
  if (m.kind == ModelKind::NonNegative)
    return std::exp(log_contract_bilinear(p.e.row(std::size_t(s)), p.w[std::size_t(r)],
                                          p.e.row(std::size_t(o))));
  double ph = bilinear(p.e.row(std::size_t(s)), p.w[std::size_t(r)],
                       p.e.row(std::size_t(o)));
  return m.kind == ModelKind::Squared ? ph * ph : ph;
}

inline double log_score(const Model& m, std::int32_t s, std::int32_t r, std::int32_t o) {
  const RescalParams& p = m.rs();
  if (m.kind == ModelKind::NonNegative)
    return log_contract_bilinear(p.e.row(std::size_t(s)), p.w[std::size_t(r)],
                                 p.e.row(std::size_t(o)));
  double ph = bilinear(p.e.row(std::size_t(s)), p.w[std::size_t(r)],
                       p.e.row(std::size_t(o)));
  return ph == 0.0 ? -std::numeric_limits<double>::infinity()
                   : 2.0 * std::log(std::fabs(ph));
}

inline double log_marginal(const Model& m, const Pattern& q) {
  const RescalParams& p = m.rs();
  const ModelCache& c = m.cache;
  const std::size_t d = p.e.cols();
  if (m.kind == ModelKind::NonNegative) {
    auto f1 = q.s ? p.e.row(std::size_t(*q.s)) : std::span<const double>(c.lca);
    auto f2 = q.o ? p.e.row(std::size_t(*q.o)) : std::span<const double>(c.lca);
    if (q.r) return log_contract_bilinear(f1, p.w[std::size_t(*q.r)], f2);
    return log_contract_bilinear(f1, c.lw_bar, f2);
  }
  double v = 0.0;
  if (q.r) {
    if (q.s && q.o) throw ArgumentError("marginal requires at least one wildcard");
    const DenseMatrix& w = p.w[std::size_t(*q.r)];
    if (q.s) {
      v = quadratic_form(c.gram_a, wt_x(w, p.e.row(std::size_t(*q.s))));
    } else if (q.o) {
      v = quadratic_form(c.gram_a, w_y(w, p.e.row(std::size_t(*q.o))));
    } else {
      DenseMatrix b = matmul(matmul(w, c.gram_a), transpose(w));
      v = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) v += c.gram_a.data()[k] * b.data()[k];
    }
  } else if (q.s && q.o) {
    for (const DenseMatrix& w : p.w) {
      double ph = bilinear(p.e.row(std::size_t(*q.s)), w, p.e.row(std::size_t(*q.o)));
      v += ph * ph;
    }
  } else if (q.s) {
    v = quadratic_form(c.q1, p.e.row(std::size_t(*q.s)));
  } else if (q.o) {
    v = quadratic_form(c.q2, p.e.row(std::size_t(*q.o)));
  } else {
    for (std::size_t k = 0; k < d * d; ++k) v += c.gram_a.data()[k] * c.q1.data()[k];
  }
  v = std::max(v, 0.0);
  return v == 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
}

inline std::vector<double> slot_scores(const Model& m, Slot target, const Pattern& q) {
  const RescalParams& p = m.rs();
  const ModelCache& c = m.cache;
  const std::size_t ne = p.e.rows(), nr = p.w.size(), d = p.e.cols();
  if (m.kind == ModelKind::EnergyBased) {
    if (target == Slot::Object) {
      if (!q.s || !q.r) throw ArgumentError("energy-based models need a full context");
      auto t = wt_x(p.w[std::size_t(*q.r)], p.e.row(std::size_t(*q.s)));
      std::vector<double> out(ne);
      matvec(p.e, t, out);
      return out;
    }
    if (target == Slot::Subject) {
      if (!q.r || !q.o) throw ArgumentError("energy-based models need a full context");
      auto t = w_y(p.w[std::size_t(*q.r)], p.e.row(std::size_t(*q.o)));
      std::vector<double> out(ne);
      matvec(p.e, t, out);
      return out;
    }
    if (!q.s || !q.o) throw ArgumentError("energy-based models need a full context");
    std::vector<double> out(nr);
    for (std::size_t r = 0; r < nr; ++r)
      out[r] = bilinear(p.e.row(std::size_t(*q.s)), p.w[r], p.e.row(std::size_t(*q.o)));
    return out;
  }
  if (m.kind == ModelKind::NonNegative) {
    std::vector<double> terms(d);
    if (target == Slot::Predicate) {
      auto f1 = q.s ? p.e.row(std::size_t(*q.s)) : std::span<const double>(c.lca);
      auto f2 = q.o ? p.e.row(std::size_t(*q.o)) : std::span<const double>(c.lca);
      std::vector<double> out(nr);
      for (std::size_t r = 0; r < nr; ++r) out[r] = log_contract_bilinear(f1, p.w[r], f2);
      return out;
    }
    // entity targets: fold the context into a d-vector of log coefficients
    std::vector<double> lctx(d);
    if (target == Slot::Object) {
      auto f1 = q.s ? p.e.row(std::size_t(*q.s)) : std::span<const double>(c.lca);
      const DenseMatrix& lw = q.r ? p.w[std::size_t(*q.r)] : c.lw_bar;
      for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < d; ++i) terms[i] = f1[i] + lw(i, j);
        lctx[j] = logsumexp(terms);
      }
    } else {
      auto f2 = q.o ? p.e.row(std::size_t(*q.o)) : std::span<const double>(c.lca);
      const DenseMatrix& lw = q.r ? p.w[std::size_t(*q.r)] : c.lw_bar;
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) terms[j] = lw(i, j) + f2[j];
        lctx[i] = logsumexp(terms);
      }
    }
    return logtri::log_score_vec(p.e, lctx);
  }
  // Squared
  std::vector<double> out;
  if (target == Slot::Predicate) {
    out.resize(nr);
    if (q.s && q.o) {
      for (std::size_t r = 0; r < nr; ++r) {
        double ph = bilinear(p.e.row(std::size_t(*q.s)), p.w[r], p.e.row(std::size_t(*q.o)));
        out[r] = ph * ph;
      }
    } else if (q.s) {
      for (std::size_t r = 0; r < nr; ++r)
        out[r] = quadratic_form(c.gram_a, wt_x(p.w[r], p.e.row(std::size_t(*q.s))));
    } else if (q.o) {
      for (std::size_t r = 0; r < nr; ++r)
        out[r] = quadratic_form(c.gram_a, w_y(p.w[r], p.e.row(std::size_t(*q.o))));
    } else {
      for (std::size_t r = 0; r < nr; ++r) {
        DenseMatrix b = matmul(matmul(p.w[r], c.gram_a), transpose(p.w[r]));
        double v = 0.0;
        for (std::size_t k = 0; k < b.size(); ++k) v += c.gram_a.data()[k] * b.data()[k];
        out[r] = v;
      }
    }
  } else {
    const bool object_side = target == Slot::Object;
    auto ctx_fixed = object_side ? q.s : q.o;
    out.resize(ne);
    if (q.r && ctx_fixed) {
      auto t = object_side ? wt_x(p.w[std::size_t(*q.r)], p.e.row(std::size_t(*ctx_fixed)))
                           : w_y(p.w[std::size_t(*q.r)], p.e.row(std::size_t(*ctx_fixed)));
      matvec(p.e, t, out);
      for (double& v : out) v *= v;
    } else if (ctx_fixed) {
      // sum over predicates with the other entity fixed
      DenseMatrix acc(d, d, 0.0);
      for (std::size_t r = 0; r < nr; ++r) {
        auto t = object_side ? wt_x(p.w[r], p.e.row(std::size_t(*ctx_fixed)))
                             : w_y(p.w[r], p.e.row(std::size_t(*ctx_fixed)));
        for (std::size_t i = 0; i < d; ++i)
          for (std::size_t j = 0; j < d; ++j) acc(i, j) += t[i] * t[j];
      }
      for (std::size_t u = 0; u < ne; ++u) out[u] = quadratic_form(acc, p.e.row(u));
    } else if (q.r) {
      // candidate object: W^T E' W; candidate subject: W E' W^T
      const DenseMatrix& w = p.w[std::size_t(*q.r)];
      DenseMatrix quad = object_side ? matmul(matmul(transpose(w), c.gram_a), w)
                                     : matmul(matmul(w, c.gram_a), transpose(w));
      for (std::size_t u = 0; u < ne; ++u) out[u] = quadratic_form(quad, p.e.row(u));
    } else {
      const DenseMatrix& qmat = object_side ? c.q2 : c.q1;
      for (std::size_t u = 0; u < ne; ++u) out[u] = quadratic_form(qmat, p.e.row(u));
    }
  }
  for (double& v : out)
    v = v <= 0.0 ? -std::numeric_limits<double>::infinity() : std::log(v);
  return out;
}

}  // namespace gekc::rsfam
