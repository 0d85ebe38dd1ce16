#pragma once

#include <vector>

#include "gekc/matrix.hpp"
#include "gekc/model_types.hpp"

namespace gekc {

// Gradients in stored-parameter space (for NonNegative kinds these are
// derivatives with respect to the log-values / logits actually stored).
struct ModelGrads {
  // CP
  DenseMatrix u, w, v;
  // ComplEx; NonNegative uses e_re (d/dlogRe), theta, w_re, gamma
  DenseMatrix e_re, e_im, w_re, w_im, theta, gamma;
  // RESCAL
  DenseMatrix e;
  std::vector<DenseMatrix> wr;
  // TuckER
  DenseMatrix te, tw;
  std::vector<double> core;
};

inline ModelGrads make_grads(const Model& m) {
  ModelGrads g;
  switch (m.family) {
    case ModelFamily::CP: {
      const auto& p = m.cp();
      g.u = DenseMatrix(p.u.rows(), p.u.cols(), 0.0);
      g.w = DenseMatrix(p.w.rows(), p.w.cols(), 0.0);
      g.v = DenseMatrix(p.v.rows(), p.v.cols(), 0.0);
      break;
    }
    case ModelFamily::ComplEx: {
      const auto& p = m.cx();
      g.e_re = DenseMatrix(p.e_re.rows(), p.e_re.cols(), 0.0);
      g.w_re = DenseMatrix(p.w_re.rows(), p.w_re.cols(), 0.0);
      if (m.kind == ModelKind::NonNegative) {
        g.theta = DenseMatrix(p.theta.rows(), p.theta.cols(), 0.0);
        g.gamma = DenseMatrix(p.gamma.rows(), p.gamma.cols(), 0.0);
      } else {
        g.e_im = DenseMatrix(p.e_im.rows(), p.e_im.cols(), 0.0);
        g.w_im = DenseMatrix(p.w_im.rows(), p.w_im.cols(), 0.0);
      }
      break;
    }
    case ModelFamily::RESCAL: {
      const auto& p = m.rs();
      g.e = DenseMatrix(p.e.rows(), p.e.cols(), 0.0);
      for (const auto& w : p.w) g.wr.emplace_back(w.rows(), w.cols(), 0.0);
      break;
    }
    case ModelFamily::TuckER: {
      const auto& p = m.tk();
      g.te = DenseMatrix(p.e.rows(), p.e.cols(), 0.0);
      g.tw = DenseMatrix(p.w.rows(), p.w.cols(), 0.0);
      g.core.assign(p.core.size(), 0.0);
      break;
    }
  }
  return g;
}

// Parameter tensors in a canonical flat order (matches grad_views).
inline std::vector<std::span<double>> param_views(Model& m) {
  std::vector<std::span<double>> v;
  switch (m.family) {
    case ModelFamily::CP: {
      auto& p = m.cp();
      for (DenseMatrix* t : {&p.u, &p.w, &p.v}) v.push_back({t->data(), t->size()});
      break;
    }
    case ModelFamily::ComplEx: {
      auto& p = m.cx();
      if (m.kind == ModelKind::NonNegative) {
        for (DenseMatrix* t : {&p.e_re, &p.theta, &p.w_re, &p.gamma})
          v.push_back({t->data(), t->size()});
      } else {
        for (DenseMatrix* t : {&p.e_re, &p.e_im, &p.w_re, &p.w_im})
          v.push_back({t->data(), t->size()});
      }
      break;
    }
    case ModelFamily::RESCAL: {
      auto& p = m.rs();
      v.push_back({p.e.data(), p.e.size()});
      for (auto& w : p.w) v.push_back({w.data(), w.size()});
      break;
    }
    case ModelFamily::TuckER: {
      auto& p = m.tk();
      v.push_back({p.e.data(), p.e.size()});
      v.push_back({p.w.data(), p.w.size()});
      v.push_back({p.core.data(), p.core.size()});
      break;
    }
  }
  return v;
}

inline std::vector<std::span<double>> grad_views(ModelGrads& g, const Model& m) {
  std::vector<std::span<double>> v;
  switch (m.family) {
    case ModelFamily::CP:
      for (DenseMatrix* t : {&g.u, &g.w, &g.v}) v.push_back({t->data(), t->size()});
      break;
    case ModelFamily::ComplEx:
      if (m.kind == ModelKind::NonNegative) {
        for (DenseMatrix* t : {&g.e_re, &g.theta, &g.w_re, &g.gamma})
          v.push_back({t->data(), t->size()});
      } else {
        for (DenseMatrix* t : {&g.e_re, &g.e_im, &g.w_re, &g.w_im})
          v.push_back({t->data(), t->size()});
      }
      break;
    case ModelFamily::RESCAL:
      v.push_back({g.e.data(), g.e.size()});
      for (auto& w : g.wr) v.push_back({w.data(), w.size()});
      break;
    case ModelFamily::TuckER:
      v.push_back({g.te.data(), g.te.size()});
      v.push_back({g.tw.data(), g.tw.size()});
      v.push_back({g.core.data(), g.core.size()});
      break;
  }
  return v;
}

namespace detail {

// grad += coef * 2 * table * s   (the Gram-side gradient of quadratic forms)
inline void add_gram_chain(const DenseMatrix& table, const DenseMatrix& s, double coef,
                           DenseMatrix& grad) {
  const std::size_t n = table.rows(), d = table.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = table.data() + r * d;
    double* gr = grad.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      const double* sj = s.data() + j * d;
      for (std::size_t i = 0; i < d; ++i) acc += row[i] * sj[i];
      gr[j] += 2.0 * coef * acc;
    }
  }
}

// Same, restricted to a row subset.
inline void add_gram_chain_rows(const DenseMatrix& table, const DenseMatrix& s,
                                double coef, std::span<const std::int32_t> rows,
                                DenseMatrix& grad) {
  const std::size_t d = table.cols();
  for (std::int32_t r : rows) {
    const double* row = table.data() + std::size_t(r) * d;
    double* gr = grad.data() + std::size_t(r) * d;
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      const double* sj = s.data() + j * d;
      for (std::size_t i = 0; i < d; ++i) acc += row[i] * sj[i];
      gr[j] += 2.0 * coef * acc;
    }
  }
}

// grad_ei += c_i * exp(log_table_ei - log_colsum_i): gradient of log-space
// column sums through their softmax shares.
inline void add_colsum_chain(const DenseMatrix& log_table,
                             std::span<const double> log_colsums,
                             std::span<const double> coef, DenseMatrix& grad) {
  const std::size_t n = log_table.rows(), d = log_table.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = log_table.data() + r * d;
    double* gr = grad.data() + r * d;
    for (std::size_t i = 0; i < d; ++i)
      if (coef[i] != 0.0 && std::isfinite(log_colsums[i]))
        gr[i] += coef[i] * std::exp(row[i] - log_colsums[i]);
  }
}

inline void add_colsum_chain_rows(const DenseMatrix& log_table,
                                  std::span<const double> log_colsums,
                                  std::span<const double> coef,
                                  std::span<const std::int32_t> rows,
                                  DenseMatrix& grad) {
  const std::size_t d = log_table.cols();
  for (std::int32_t r : rows) {
    const double* row = log_table.data() + std::size_t(r) * d;
    double* gr = grad.data() + std::size_t(r) * d;
    for (std::size_t i = 0; i < d; ++i)
      if (coef[i] != 0.0 && std::isfinite(log_colsums[i]))
        gr[i] += coef[i] * std::exp(row[i] - log_colsums[i]);
  }
}

// accum += coef * x x^T
inline void add_outer(std::span<const double> x, double coef, DenseMatrix& accum) {
  const std::size_t d = x.size();
  for (std::size_t i = 0; i < d; ++i) {
    if (x[i] == 0.0) continue;
    double* row = accum.data() + i * d;
    const double cxi = coef * x[i];
    for (std::size_t j = 0; j < d; ++j) row[j] += cxi * x[j];
  }
}

}  // namespace detail
}  // namespace gekc
