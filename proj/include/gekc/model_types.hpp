#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gekc/error.hpp"
#include "gekc/kg.hpp"
#include "gekc/matrix.hpp"

namespace gekc {

enum class ModelFamily { CP, ComplEx, RESCAL, TuckER };
enum class ModelKind { EnergyBased, NonNegative, Squared };

inline const char* to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::CP: return "cp";
    case ModelFamily::ComplEx: return "complex";
    case ModelFamily::RESCAL: return "rescal";
    case ModelFamily::TuckER: return "tucker";
  }
  return "?";
}

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::EnergyBased: return "ebm";
    case ModelKind::NonNegative: return "nonneg";
    case ModelKind::Squared: return "squared";
  }
  return "?";
}

inline std::optional<ModelFamily> family_from_string(const std::string& s) {
  if (s == "cp") return ModelFamily::CP;
  if (s == "complex") return ModelFamily::ComplEx;
  if (s == "rescal") return ModelFamily::RESCAL;
  if (s == "tucker") return ModelFamily::TuckER;
  return std::nullopt;
}

inline std::optional<ModelKind> kind_from_string(const std::string& s) {
  if (s == "ebm") return ModelKind::EnergyBased;
  if (s == "nonneg") return ModelKind::NonNegative;
  if (s == "squared") return ModelKind::Squared;
  return std::nullopt;
}

// Subject embeddings U, predicate embeddings W, object embeddings V.
// NonNegative kind stores log-values in the same fields.
struct CpParams {
  DenseMatrix u, w, v;
};

// Complex embeddings, one entity table shared by subject and object roles
// (the object side enters conjugated). EnergyBased/Squared kinds store the
// four linear-space parts. The NonNegative kind stores e_re/w_re as
// log-values and derives the imaginary parts as Im = Re * sigmoid(theta)
// (resp. gamma), so the score stays non-negative; e_im/w_im are unused then.
struct ComplexParams {
  DenseMatrix e_re, e_im, w_re, w_im;
  DenseMatrix theta, gamma;
};

// Entity matrix E plus one d x d relation matrix per predicate.
struct RescalParams {
  DenseMatrix e;
  std::vector<DenseMatrix> w;
};

// Entity/predicate matrices plus the core tensor, core[(i*dr + j)*de + k].
struct TuckerParams {
  DenseMatrix e, w;
  std::vector<double> core;
  std::size_t de = 0, dr = 0;

  double core_at(std::size_t i, std::size_t j, std::size_t k) const {
    return core[(i * dr + j) * de + k];
  }
  double& core_at(std::size_t i, std::size_t j, std::size_t k) {
    return core[(i * dr + j) * de + k];
  }
};

// Cached per-parameter-version sufficient statistics. Which members are
// populated depends on family and kind.
struct ModelCache {
  std::uint64_t version = std::numeric_limits<std::uint64_t>::max();

  // ComplEx (EnergyBased/Squared): 4d-column lifted trilinear factors.
  DenseMatrix lift_a, lift_p, lift_b;

  // Squared kinds: Gram matrices. CP/ComplEx: subject/predicate/object side.
  // RESCAL: gram_a = E^T E. TuckER: gram_a = E^T E, gram_p = W^T W.
  DenseMatrix gram_a, gram_p, gram_b;

  // RESCAL squared: q1 = sum_r W_r E' W_r^T, q2 = sum_r W_r^T E' W_r.
  DenseMatrix q1, q2;

  // TuckER squared: per-mode partial Grams and G = T x1 E' x2 W' x3 E'.
  DenseMatrix m1, m2, m3;
  std::vector<double> g_tensor;

  // NonNegative kinds: log column sums. CP+: U/W/V. TuckER+: E/W.
  // RESCAL+: lca = entity colsums, lw_bar = logsumexp over predicates.
  std::vector<double> lca, lcp, lcb;
  DenseMatrix lw_bar;

  // ComplEx+: derived log-imaginary tables and the four log column sums.
  DenseMatrix lim_e, lim_w;
  std::vector<double> lre_e_cs, lim_e_cs, lre_w_cs, lim_w_cs;

  double log_z = std::numeric_limits<double>::quiet_NaN();
  bool has_z = false;
};

struct Model {
  ModelFamily family = ModelFamily::CP;
  ModelKind kind = ModelKind::EnergyBased;
  std::variant<CpParams, ComplexParams, RescalParams, TuckerParams> params;
  bool reciprocal = false;

  std::uint64_t version = 0;
  mutable ModelCache cache;

  // Invalidate cached statistics after any parameter update.
  void touch() { ++version; }

  bool is_gekc() const { return kind != ModelKind::EnergyBased; }

  const CpParams& cp() const { return std::get<CpParams>(params); }
  CpParams& cp() { return std::get<CpParams>(params); }
  const ComplexParams& cx() const { return std::get<ComplexParams>(params); }
  ComplexParams& cx() { return std::get<ComplexParams>(params); }
  const RescalParams& rs() const { return std::get<RescalParams>(params); }
  RescalParams& rs() { return std::get<RescalParams>(params); }
  const TuckerParams& tk() const { return std::get<TuckerParams>(params); }
  TuckerParams& tk() { return std::get<TuckerParams>(params); }

  std::size_t num_entities() const {
    switch (family) {
      case ModelFamily::CP: return cp().u.rows();
      case ModelFamily::ComplEx: return cx().e_re.rows();
      case ModelFamily::RESCAL: return rs().e.rows();
      case ModelFamily::TuckER: return tk().e.rows();
    }
    return 0;
  }
  std::size_t num_predicates() const {
    switch (family) {
      case ModelFamily::CP: return cp().w.rows();
      case ModelFamily::ComplEx: return cx().w_re.rows();
      case ModelFamily::RESCAL: return rs().w.size();
      case ModelFamily::TuckER: return tk().w.rows();
    }
    return 0;
  }
  std::size_t dim() const {
    switch (family) {
      case ModelFamily::CP: return cp().u.cols();
      case ModelFamily::ComplEx: return cx().e_re.cols();
      case ModelFamily::RESCAL: return rs().e.cols();
      case ModelFamily::TuckER: return tk().de;
    }
    return 0;
  }

  void check_ids(const Triple& t) const {
    if (t.subject < 0 || std::size_t(t.subject) >= num_entities() || t.object < 0 ||
        std::size_t(t.object) >= num_entities() || t.predicate < 0 ||
        std::size_t(t.predicate) >= num_predicates())
      throw ArgumentError("triple id out of range");
  }
};

enum class Slot { Subject, Predicate, Object };

// A triple pattern; nullopt marks a summed-out wildcard.
struct Pattern {
  std::optional<std::int32_t> s, r, o;

  std::size_t wildcards() const {
    return std::size_t(!s.has_value()) + std::size_t(!r.has_value()) +
           std::size_t(!o.has_value());
  }
};

inline double log_sigmoid(double x) {
  // -softplus(-x)
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log(exp(a) - exp(b)) for a >= b; -inf when the difference underflows.
inline double log_diff_exp(double a, double b) {
  if (std::isinf(b) && b < 0) return a;
  if (b >= a) return -std::numeric_limits<double>::infinity();
  return a + std::log1p(-std::exp(b - a));
}

}  // namespace gekc
