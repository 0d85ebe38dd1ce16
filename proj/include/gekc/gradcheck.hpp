#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "gekc/error.hpp"
#include "gekc/rng.hpp"

namespace gekc {

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t parameter_count = 0;
  double step = 0.0;
};

// A scalar loss over the parameters behind `params` views, together with its
// analytic gradient in the same tensor order.
struct DifferentiableLoss {
  std::function<double()> value;
  std::function<std::vector<std::vector<double>>()> gradient;
};

// Central finite differences on a random subsample of at least `min_coords`
// coordinates (all of them when there are fewer). Relative error uses the
// denominator max(|analytic|, |numeric|, 1e-8).
inline GradientCheckReport gradient_check(const DifferentiableLoss& loss,
                                          std::vector<std::span<double>> params,
                                          double step, std::uint64_t seed = 0,
                                          std::size_t min_coords = 100) {
  if (step <= 0.0) throw ArgumentError("gradient_check: step must be positive");
  double base = loss.value();
  if (!std::isfinite(base)) throw NumericError("gradient_check: non-finite loss");
  std::vector<std::vector<double>> analytic = loss.gradient();
  if (analytic.size() != params.size())
    throw ArgumentError("gradient_check: gradient/parameter tensor count mismatch");

  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  if (total <= min_coords) {
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t i = 0; i < params[t].size(); ++i) coords.emplace_back(t, i);
  } else {
    CounterRng rng(seed ^ 0x5eedc0de);
    for (std::size_t k = 0; k < min_coords; ++k) {
      std::size_t flat = std::size_t(rng.next_below(total));
      std::size_t t = 0;
      while (flat >= params[t].size()) flat -= params[t++].size();
      coords.emplace_back(t, flat);
    }
  }

  GradientCheckReport rep;
  rep.parameter_count = total;
  rep.step = step;
  for (auto [t, i] : coords) {
    double saved = params[t][i];
    params[t][i] = saved + step;
    double up = loss.value();
    params[t][i] = saved - step;
    double down = loss.value();
    params[t][i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("gradient_check: non-finite loss while probing");
    double numeric = (up - down) / (2.0 * step);
    double a = analytic[t][i];
    double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    rep.max_relative_error = std::max(rep.max_relative_error,
                                      std::fabs(a - numeric) / denom);
  }
  // restore any cached state that depended on the parameters
  (void)loss.value();
  return rep;
}

}  // namespace gekc
