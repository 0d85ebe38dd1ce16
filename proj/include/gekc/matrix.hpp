#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "gekc/error.hpp"

namespace gekc {

// Row-major dense matrix of doubles. All heavy kernels in the engine run on
// this one type; reductions iterate in index order so results are
// reproducible run to run.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator()(std::size_t i, std::size_t j) {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(i < rows_ && j < cols_);
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) {
    assert(i < rows_);
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const {
    assert(i < rows_);
    return {data_.data() + i * cols_, cols_};
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// M^T M, cols x cols. Fills the lower triangle from the upper one so the
// result is symmetric to bit equality.
inline DenseMatrix gram(const DenseMatrix& m) {
  const std::size_t n = m.rows(), d = m.cols();
  DenseMatrix g(d, d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = m.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double mi = row[i];
      if (mi == 0.0) continue;
      double* gi = g.data() + i * d;
      for (std::size_t j = i; j < d; ++j) gi[j] += mi * row[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

// Gram restricted to a subset of rows.
inline DenseMatrix gram_rows(const DenseMatrix& m, std::span<const std::int32_t> rows) {
  const std::size_t d = m.cols();
  DenseMatrix g(d, d, 0.0);
  for (std::int32_t r : rows) {
    const double* row = m.data() + std::size_t(r) * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double mi = row[i];
      if (mi == 0.0) continue;
      double* gi = g.data() + i * d;
      for (std::size_t j = i; j < d; ++j) gi[j] += mi * row[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

inline std::vector<double> column_sums(const DenseMatrix& m) {
  std::vector<double> s(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* row = m.data() + r * m.cols();
    for (std::size_t j = 0; j < m.cols(); ++j) s[j] += row[j];
  }
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y += c * x
inline void axpy(double c, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

// out = A x  (A: n x d, x: d)
inline void matvec(const DenseMatrix& a, std::span<const double> x,
                   std::span<double> out) {
  assert(x.size() == a.cols() && out.size() == a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
}

// x^T A x for square A.
inline double quadratic_form(const DenseMatrix& a, std::span<const double> x) {
  assert(a.rows() == a.cols() && a.rows() == x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * a.cols();
    double t = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) t += ai[j] * x[j];
    s += x[i] * t;
  }
  return s;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  assert(a.cols() == b.rows());
  DenseMatrix c(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* ci = c.data() + i * c.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* bk = b.data() + k * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

// log(sum_i exp(v_i)) with max subtraction; -inf for all-(-inf) input.
inline double logsumexp(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("logsumexp: empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (std::isinf(m) && m < 0) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double logsumexp(const std::vector<double>& v) {
  return logsumexp(std::span<const double>(v));
}

// Kahan-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

inline double compensated_sum(std::span<const double> v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value();
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace gekc
