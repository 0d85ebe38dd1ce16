#pragma once

// Small statistical helpers for the sampling tests: regularised incomplete
// gamma (for chi-square p-values) and goodness-of-fit statistics.

#include <cmath>
#include <span>
#include <vector>

namespace gekc::testing {

// Upper regularised incomplete gamma Q(a, x) via series / continued fraction.
inline double gammq(double a, double x) {
  auto gser = [](double a_, double x_) {
    double sum = 1.0 / a_, del = sum, ap = a_;
    for (int i = 0; i < 1000; ++i) {
      ap += 1.0;
      del *= x_ / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-14) break;
    }
    return sum * std::exp(-x_ + a_ * std::log(x_) - std::lgamma(a_));
  };
  auto gcf = [](double a_, double x_) {
    double b = x_ + 1.0 - a_, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i <= 1000; ++i) {
      double an = -double(i) * (double(i) - a_);
      b += 2.0;
      d = an * d + b;
      if (std::fabs(d) < 1e-300) d = 1e-300;
      c = b + an / c;
      if (std::fabs(c) < 1e-300) c = 1e-300;
      d = 1.0 / d;
      double del = d * c;
      h *= del;
      if (std::fabs(del - 1.0) < 1e-14) break;
    }
    return std::exp(-x_ + a_ * std::log(x_) - std::lgamma(a_)) * h;
  };
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  return x < a + 1.0 ? 1.0 - gser(a, x) : gcf(a, x);
}

// p-value of a chi-square statistic with df degrees of freedom.
inline double chi2_pvalue(double stat, double df) { return gammq(df / 2.0, stat / 2.0); }

// One-sample goodness of fit against expected counts; cells with zero
// expectation must have zero observations.
inline double chi2_gof_stat(std::span<const double> observed,
                            std::span<const double> expected, std::size_t& df) {
  double stat = 0.0;
  df = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) continue;
    double diff = observed[i] - expected[i];
    stat += diff * diff / expected[i];
    ++df;
  }
  df = df > 0 ? df - 1 : 0;
  return stat;
}

// Two-sample chi-square over shared cells.
inline double chi2_two_sample_stat(std::span<const double> count1,
                                   std::span<const double> count2, std::size_t& df) {
  double n1 = 0.0, n2 = 0.0;
  for (double c : count1) n1 += c;
  for (double c : count2) n2 += c;
  const double k1 = std::sqrt(n2 / n1), k2 = std::sqrt(n1 / n2);
  double stat = 0.0;
  df = 0;
  for (std::size_t i = 0; i < count1.size(); ++i) {
    double tot = count1[i] + count2[i];
    if (tot <= 0.0) continue;
    double diff = k1 * count1[i] - k2 * count2[i];
    stat += diff * diff / tot;
    ++df;
  }
  df = df > 0 ? df - 1 : 0;
  return stat;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::fabs(p[i] - q[i]);
  return tv / 2.0;
}

}  // namespace gekc::testing
