#pragma once

// Kernels for score functions of the form phi(s,r,o) = sum_i A_si P_ri B_oi,
// which covers CP directly and ComplEx through its 4d lifted factors.

#include <vector>

#include "gekc/matrix.hpp"
#include "gekc/model_types.hpp"

namespace gekc::tri {

inline double score(const DenseMatrix& a, const DenseMatrix& p, const DenseMatrix& b,
                    std::int32_t s, std::int32_t r, std::int32_t o) {
  const std::size_t d = a.cols();
  const double* as = a.data() + std::size_t(s) * d;
  const double* pr = p.data() + std::size_t(r) * d;
  const double* bo = b.data() + std::size_t(o) * d;
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) acc += as[i] * pr[i] * bo[i];
  return acc;
}

// phi over every candidate in `table` with fixed context x = row1 (.) row2.
inline std::vector<double> score_vec(const DenseMatrix& table, std::span<const double> c1,
                                     std::span<const double> c2) {
  const std::size_t d = table.cols();
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = c1[i] * c2[i];
  std::vector<double> out(table.rows());
  matvec(table, x, out);
  return out;
}

// Z of the squared model: sum_ij (A'.W'.B')_ij elementwise.
inline double z_squared(const DenseMatrix& ga, const DenseMatrix& gp,
                        const DenseMatrix& gb) {
  double z = 0.0;
  for (std::size_t k = 0; k < ga.size(); ++k)
    z += ga.data()[k] * gp.data()[k] * gb.data()[k];
  return z;
}

// sum over the slot whose Gram is `g`, context vector x = c1 (.) c2:
// x^T G x.
inline double marg_squared(const DenseMatrix& g, std::span<const double> c1,
                           std::span<const double> c2) {
  const std::size_t d = g.rows();
  std::vector<double> x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = c1[i] * c2[i];
  return quadratic_form(g, x);
}

// sum over two slots with Grams g1, g2, single fixed row c:
// c^T (G1 (.) G2) c.
inline double marg2_squared(const DenseMatrix& g1, const DenseMatrix& g2,
                            std::span<const double> c) {
  const std::size_t d = g1.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double* g1i = g1.data() + i * d;
    const double* g2i = g2.data() + i * d;
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += g1i[j] * g2i[j] * c[j];
    acc += c[i] * t;
  }
  return acc;
}

}  // namespace gekc::tri

// Log-domain kernels for fully non-negative trilinear models (CP+) whose
// parameters are stored as logarithms.
namespace gekc::logtri {

inline double log_score(const DenseMatrix& la, const DenseMatrix& lp,
                        const DenseMatrix& lb, std::int32_t s, std::int32_t r,
                        std::int32_t o) {
  const std::size_t d = la.cols();
  const double* as = la.data() + std::size_t(s) * d;
  const double* pr = lp.data() + std::size_t(r) * d;
  const double* bo = lb.data() + std::size_t(o) * d;
  std::vector<double> terms(d);
  for (std::size_t i = 0; i < d; ++i) terms[i] = as[i] + pr[i] + bo[i];
  return logsumexp(terms);
}

// Column-wise logsumexp over the rows of a log-value matrix.
inline std::vector<double> log_colsums(const DenseMatrix& lm) {
  const std::size_t n = lm.rows(), d = lm.cols();
  std::vector<double> mx(d, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = lm.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) mx[i] = std::max(mx[i], row[i]);
  }
  std::vector<double> acc(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = lm.data() + r * d;
    for (std::size_t i = 0; i < d; ++i)
      if (std::isfinite(mx[i])) acc[i] += std::exp(row[i] - mx[i]);
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i)
    out[i] = std::isfinite(mx[i]) ? mx[i] + std::log(acc[i])
                                  : -std::numeric_limits<double>::infinity();
  return out;
}

// Column-wise logsumexp restricted to a row subset.
inline std::vector<double> log_colsums_rows(const DenseMatrix& lm,
                                            std::span<const std::int32_t> rows) {
  const std::size_t d = lm.cols();
  std::vector<double> mx(d, -std::numeric_limits<double>::infinity());
  for (std::int32_t r : rows) {
    const double* row = lm.data() + std::size_t(r) * d;
    for (std::size_t i = 0; i < d; ++i) mx[i] = std::max(mx[i], row[i]);
  }
  std::vector<double> acc(d, 0.0);
  for (std::int32_t r : rows) {
    const double* row = lm.data() + std::size_t(r) * d;
    for (std::size_t i = 0; i < d; ++i)
      if (std::isfinite(mx[i])) acc[i] += std::exp(row[i] - mx[i]);
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i)
    out[i] = std::isfinite(mx[i]) ? mx[i] + std::log(acc[i])
                                  : -std::numeric_limits<double>::infinity();
  return out;
}

// logsumexp_i (f1_i + f2_i + f3_i)
inline double log_contract3(std::span<const double> f1, std::span<const double> f2,
                            std::span<const double> f3) {
  std::vector<double> terms(f1.size());
  for (std::size_t i = 0; i < f1.size(); ++i) terms[i] = f1[i] + f2[i] + f3[i];
  return logsumexp(terms);
}

// Per-candidate logsumexp_i (ctx_i + row_i) over the rows of `ltable`.
inline std::vector<double> log_score_vec(const DenseMatrix& ltable,
                                         std::span<const double> lctx) {
  const std::size_t n = ltable.rows(), d = ltable.cols();
  std::vector<double> out(n);
  std::vector<double> terms(d);
  for (std::size_t c = 0; c < n; ++c) {
    const double* row = ltable.data() + c * d;
    for (std::size_t i = 0; i < d; ++i) terms[i] = lctx[i] + row[i];
    out[c] = logsumexp(terms);
  }
  return out;
}

}  // namespace gekc::logtri
