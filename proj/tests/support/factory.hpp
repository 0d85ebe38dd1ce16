#pragma once

// Random model instances for tests: moderate magnitudes, seeded.

#include <cstdint>

#include "gekc/model.hpp"
#include "gekc/rng.hpp"

namespace gekc::testing {

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, CounterRng& rng,
                                 double mean = 0.0, double sd = 0.6) {
  DenseMatrix m(rows, cols);
  for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = mean + sd * rng.next_gaussian();
  return m;
}

struct Dims {
  std::size_t ne = 6, nr = 3, d = 4, de = 3, dr = 2;
};

inline Model make_model(ModelFamily family, ModelKind kind, Dims dims, std::uint64_t seed) {
  CounterRng rng(seed);
  Model m;
  m.family = family;
  m.kind = kind;
  const bool log_space = kind == ModelKind::NonNegative;
  // NonNegative stores logs; keep them near log(0.7) so linear values are
  // O(1) and brute-force sums stay well conditioned.
  const double mean = log_space ? -0.4 : 0.0;
  const double sd = log_space ? 0.5 : 0.6;
  switch (family) {
    case ModelFamily::CP: {
      CpParams p;
      p.u = random_matrix(dims.ne, dims.d, rng, mean, sd);
      p.w = random_matrix(dims.nr, dims.d, rng, mean, sd);
      p.v = random_matrix(dims.ne, dims.d, rng, mean, sd);
      m.params = std::move(p);
      break;
    }
    case ModelFamily::ComplEx: {
      ComplexParams p;
      p.e_re = random_matrix(dims.ne, dims.d, rng, mean, sd);
      p.w_re = random_matrix(dims.nr, dims.d, rng, mean, sd);
      if (log_space) {
        p.theta = random_matrix(dims.ne, dims.d, rng, 0.0, 1.0);
        p.gamma = random_matrix(dims.nr, dims.d, rng, 0.0, 1.0);
      } else {
        p.e_im = random_matrix(dims.ne, dims.d, rng, mean, sd);
        p.w_im = random_matrix(dims.nr, dims.d, rng, mean, sd);
      }
      m.params = std::move(p);
      break;
    }
    case ModelFamily::RESCAL: {
      RescalParams p;
      p.e = random_matrix(dims.ne, dims.d, rng, mean, sd);
      for (std::size_t r = 0; r < dims.nr; ++r)
        p.w.push_back(random_matrix(dims.d, dims.d, rng, mean, sd));
      m.params = std::move(p);
      break;
    }
    case ModelFamily::TuckER: {
      TuckerParams p;
      p.de = dims.de;
      p.dr = dims.dr;
      p.e = random_matrix(dims.ne, dims.de, rng, mean, sd);
      p.w = random_matrix(dims.nr, dims.dr, rng, mean, sd);
      p.core.resize(dims.de * dims.de * dims.dr);
      for (double& x : p.core) x = mean + sd * rng.next_gaussian();
      m.params = std::move(p);
      break;
    }
  }
  m.touch();
  return m;
}

}  // namespace gekc::testing
