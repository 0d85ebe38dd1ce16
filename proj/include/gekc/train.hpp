#pragma once

// Objectives (PLL / exact MLE), Adam, initialisation schemes, the training
// loop with early stopping on validation MRR, and distillation from
// energy-based checkpoints.

#include <chrono>
#include <numeric>
#include <sstream>

#include "gekc/alloc_meter.hpp"
#include "gekc/constraints.hpp"
#include "gekc/detail/ebm_pll.hpp"
#include "gekc/detail/grad_complex.hpp"
#include "gekc/detail/grad_cp.hpp"
#include "gekc/detail/grad_rescal.hpp"
#include "gekc/detail/grad_tucker.hpp"
#include "gekc/evaluation.hpp"
#include "gekc/model.hpp"
#include "gekc/rng.hpp"

namespace gekc {

struct PllWeights {
  double ws = 1.0, wo = 1.0, wr = 1.0;
};

struct ObjectiveOptions {
  const ConstrainedModel* constraints = nullptr;
  // max doubles of the blocked EBM logits matrix (default 512 MiB)
  std::size_t ebm_block_elems = (std::size_t(512) << 20) / 8;
};

struct ObjectiveResult {
  double loss = 0.0;
  ModelGrads grads;
};

namespace detail {

struct CpBackend {
  using Accum = cpgrad::PllAccum;
  static constexpr auto score_grad = cpgrad::add_log_score_grad;
  static constexpr auto term = cpgrad::pll_term;
  static constexpr auto finish = cpgrad::pll_finish;
  static constexpr auto zgrad = cpgrad::add_log_partition_grad;
  static constexpr auto zgrad_constrained = cpgrad::add_constrained_log_partition_grad;
};
struct CxBackend {
  using Accum = cxgrad::PllAccum;
  static constexpr auto score_grad = cxgrad::add_log_score_grad;
  static constexpr auto term = cxgrad::pll_term;
  static constexpr auto finish = cxgrad::pll_finish;
  static constexpr auto zgrad = cxgrad::add_log_partition_grad;
  static constexpr auto zgrad_constrained = cxgrad::add_constrained_log_partition_grad;
};
struct RsBackend {
  using Accum = rsgrad::PllAccum;
  static constexpr auto score_grad = rsgrad::add_log_score_grad;
  static constexpr auto term = rsgrad::pll_term;
  static constexpr auto finish = rsgrad::pll_finish;
  static constexpr auto zgrad = rsgrad::add_log_partition_grad;
  static constexpr auto zgrad_constrained = rsgrad::add_constrained_log_partition_grad;
};
struct TkBackend {
  using Accum = tkgrad::PllAccum;
  static constexpr auto score_grad = tkgrad::add_log_score_grad;
  static constexpr auto term = tkgrad::pll_term;
  static constexpr auto finish = tkgrad::pll_finish;
  static constexpr auto zgrad = tkgrad::add_log_partition_grad;
  static constexpr auto zgrad_constrained = tkgrad::add_constrained_log_partition_grad;
};

template <class B>
ObjectiveResult pll_gekc(const Model& m, std::span<const Triple> batch,
                         const PllWeights& w, const ObjectiveOptions& opts) {
  const ConstrainedModel* cm = opts.constraints;
  ObjectiveResult res;
  res.grads = make_grads(m);
  typename B::Accum acc;
  acc.init(m, cm ? cm->circuit().groups.size() : 1);
  const double invb = 1.0 / double(batch.size());
  const double wsum = w.ws + w.wo + w.wr;
  for (const Triple& t : batch) {
    if (cm && !cm->circuit().satisfies(t)) {
      std::ostringstream os;
      os << "training triple (" << t.subject << "," << t.predicate << "," << t.object
         << ") violates the constraints";
      throw NumericError(os.str());
    }
    double lphi = log_score(m, t);
    if (!std::isfinite(lphi)) {
      std::ostringstream os;
      os << "triple (" << t.subject << "," << t.predicate << "," << t.object
         << ") has zero score";
      throw NumericError(os.str());
    }
    res.loss -= invb * wsum * lphi;
    B::score_grad(m, t, -invb * wsum, res.grads);
    if (w.wo > 0)
      res.loss += invb * w.wo * B::term(m, cm, acc, Slot::Object, t, invb * w.wo, res.grads);
    if (w.ws > 0)
      res.loss += invb * w.ws * B::term(m, cm, acc, Slot::Subject, t, invb * w.ws, res.grads);
    if (w.wr > 0)
      res.loss +=
          invb * w.wr * B::term(m, cm, acc, Slot::Predicate, t, invb * w.wr, res.grads);
  }
  B::finish(m, cm, acc, res.grads);
  return res;
}

inline ObjectiveResult pll_ebm(const Model& m, std::span<const Triple> batch,
                               const PllWeights& w, const ObjectiveOptions& opts) {
  ObjectiveResult res;
  res.grads = make_grads(m);
  ebm::Workspace ws;
  const double invb = 1.0 / double(batch.size());
  for (auto [target, omega] : {std::pair{Slot::Object, w.wo},
                               std::pair{Slot::Subject, w.ws},
                               std::pair{Slot::Predicate, w.wr}}) {
    if (omega <= 0) continue;
    DenseMatrix f, gf;
    DenseMatrix* gtable = nullptr;
    std::vector<std::int32_t> truth;
    const DenseMatrix& table = ebm::setup_direction(m, target, batch, ws, res.grads, f,
                                                    gtable, truth);
    gf = DenseMatrix(f.rows(), f.cols(), 0.0);
    res.loss += ebm::direction_loss(table, f, truth, invb * omega, opts.ebm_block_elems,
                                    *gtable, gf);
    ebm::unchain_context(m, target, batch, gf, ws, res.grads);
  }
  ebm::flush(ws, res.grads);
  return res;
}

}  // namespace detail

// Negative weighted pseudo-log-likelihood of the batch (mean per triple),
// with analytic gradients. GeKC kinds use the cached column-sum / Gram
// normaliser paths; energy-based models use the blocked logits matrix.
inline ObjectiveResult pll_loss(const Model& m, std::span<const Triple> batch,
                                const PllWeights& w = {},
                                const ObjectiveOptions& opts = {}) {
  if (batch.empty()) throw ArgumentError("pll_loss: empty batch");
  if (w.ws < 0 || w.wo < 0 || w.wr < 0 || w.ws + w.wo + w.wr == 0.0)
    throw ArgumentError("pll_loss: weights must be nonnegative and not all zero");
  if (m.kind == ModelKind::EnergyBased) {
    if (opts.constraints)
      throw ArgumentError("constrained training requires a GeKC kind");
    return detail::pll_ebm(m, batch, w, opts);
  }
  switch (m.family) {
    case ModelFamily::CP: return detail::pll_gekc<detail::CpBackend>(m, batch, w, opts);
    case ModelFamily::ComplEx:
      return detail::pll_gekc<detail::CxBackend>(m, batch, w, opts);
    case ModelFamily::RESCAL:
      return detail::pll_gekc<detail::RsBackend>(m, batch, w, opts);
    case ModelFamily::TuckER:
      return detail::pll_gekc<detail::TkBackend>(m, batch, w, opts);
  }
  throw ArgumentError("unknown family");
}

// Value-only reference path: per-triple normalisation over explicit candidate
// score vectors.
inline double pll_value_naive(const Model& m, std::span<const Triple> batch,
                              const PllWeights& w = {},
                              const ConstrainedModel* cm = nullptr) {
  if (batch.empty()) throw ArgumentError("pll_value_naive: empty batch");
  double loss = 0.0;
  const double invb = 1.0 / double(batch.size());
  for (const Triple& t : batch) {
    for (auto [target, omega] : {std::pair{Slot::Object, w.wo},
                                 std::pair{Slot::Subject, w.ws},
                                 std::pair{Slot::Predicate, w.wr}}) {
      if (omega <= 0) continue;
      Pattern ctx{.s = t.subject, .r = t.predicate, .o = t.object};
      std::int32_t truth;
      if (target == Slot::Object) {
        ctx.o.reset();
        truth = t.object;
      } else if (target == Slot::Subject) {
        ctx.s.reset();
        truth = t.subject;
      } else {
        ctx.r.reset();
        truth = t.predicate;
      }
      std::vector<double> keys =
          cm ? cm->candidate_scores(target, ctx) : candidate_scores(m, target, ctx);
      loss += invb * omega * (logsumexp(keys) - keys[std::size_t(truth)]);
    }
  }
  return loss;
}

// Exact negative log-likelihood: -(1/|B|) sum log phi + log Z (or Z_K).
inline ObjectiveResult mle_loss(const Model& m, std::span<const Triple> batch,
                                const ObjectiveOptions& opts = {}) {
  if (batch.empty()) throw ArgumentError("mle_loss: empty batch");
  if (m.kind == ModelKind::EnergyBased)
    throw ArgumentError(
        "exact MLE is not tractable for energy-based models: computing Z means "
        "summing exp(phi) over every triple");
  const ConstrainedModel* cm = opts.constraints;
  ObjectiveResult res;
  res.grads = make_grads(m);
  const double invb = 1.0 / double(batch.size());
  double lz = cm ? cm->log_partition() : log_partition(m);
  if (!std::isfinite(lz)) throw NumericError("mle_loss: degenerate model with Z = 0");
  for (const Triple& t : batch) {
    if (cm && !cm->circuit().satisfies(t)) {
      std::ostringstream os;
      os << "training triple (" << t.subject << "," << t.predicate << "," << t.object
         << ") violates the constraints";
      throw NumericError(os.str());
    }
    double lphi = log_score(m, t);
    if (!std::isfinite(lphi)) {
      std::ostringstream os;
      os << "triple (" << t.subject << "," << t.predicate << "," << t.object
         << ") has zero score";
      throw NumericError(os.str());
    }
    res.loss -= invb * lphi;
  }
  res.loss += lz;
  auto score_grad = [&](const Triple& t, double c) {
    switch (m.family) {
      case ModelFamily::CP: cpgrad::add_log_score_grad(m, t, c, res.grads); break;
      case ModelFamily::ComplEx: cxgrad::add_log_score_grad(m, t, c, res.grads); break;
      case ModelFamily::RESCAL: rsgrad::add_log_score_grad(m, t, c, res.grads); break;
      case ModelFamily::TuckER: tkgrad::add_log_score_grad(m, t, c, res.grads); break;
    }
  };
  for (const Triple& t : batch) score_grad(t, -invb);
  switch (m.family) {
    case ModelFamily::CP:
      cm ? cpgrad::add_constrained_log_partition_grad(m, *cm, 1.0, res.grads)
         : cpgrad::add_log_partition_grad(m, 1.0, res.grads);
      break;
    case ModelFamily::ComplEx:
      cm ? cxgrad::add_constrained_log_partition_grad(m, *cm, 1.0, res.grads)
         : cxgrad::add_log_partition_grad(m, 1.0, res.grads);
      break;
    case ModelFamily::RESCAL:
      cm ? rsgrad::add_constrained_log_partition_grad(m, *cm, 1.0, res.grads)
         : rsgrad::add_log_partition_grad(m, 1.0, res.grads);
      break;
    case ModelFamily::TuckER:
      cm ? tkgrad::add_constrained_log_partition_grad(m, *cm, 1.0, res.grads)
         : tkgrad::add_log_partition_grad(m, 1.0, res.grads);
      break;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m1, m2;
  std::size_t t = 0;

  void init(const std::vector<std::span<double>>& params) {
    m1.clear();
    m2.clear();
    for (const auto& p : params) {
      m1.emplace_back(p.size(), 0.0);
      m2.emplace_back(p.size(), 0.0);
    }
    t = 0;
  }
};

inline void adam_step(std::vector<std::span<double>> params,
                      const std::vector<std::span<double>>& grads, AdamState& st,
                      const AdamConfig& cfg) {
  if (st.m1.size() != params.size()) st.init(params);
  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(st.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto gr = grads[k];
    auto& m = st.m1[k];
    auto& v = st.m2[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Initialisation

enum class InitKind { Gaussian, Dirichlet, LogNormal };

struct InitScheme {
  InitKind kind = InitKind::Gaussian;
  double sigma = 1e-3;
  double alpha = 1e3;  // Dirichlet concentration
};

inline InitScheme default_init(ModelKind kind) {
  switch (kind) {
    case ModelKind::EnergyBased: return {InitKind::Gaussian, 1e-3, 0.0};
    case ModelKind::NonNegative: return {InitKind::Dirichlet, 1e-3, 1e3};
    case ModelKind::Squared: return {InitKind::LogNormal, 1e-3, 0.0};
  }
  return {};
}

struct ModelDims {
  std::size_t ne = 0, nr = 0, d = 0, de = 0, dr = 0;
};

// Mean of the log-normal initialiser: log scores start centred near zero
// (Fenton-Wilkinson matching of the initial score magnitude).
inline double lognormal_mu(ModelFamily family, const ModelDims& dims, double sigma) {
  switch (family) {
    case ModelFamily::CP: return -std::log(double(dims.d)) / 3.0 - sigma * sigma / 2.0;
    case ModelFamily::ComplEx:
      return -std::log(2.0 * double(dims.d)) / 3.0 - sigma * sigma / 2.0;
    case ModelFamily::RESCAL:
      return -std::log(double(dims.d) * double(dims.d)) / 3.0 - sigma * sigma / 2.0;
    case ModelFamily::TuckER:
      return -std::log(double(dims.de) * double(dims.de) * double(dims.dr)) / 4.0 -
             sigma * sigma / 2.0;
  }
  return 0.0;
}

namespace detail {

inline void fill_gaussian(DenseMatrix& m, CounterRng& rng, double sigma) {
  for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = sigma * rng.next_gaussian();
}

inline void fill_lognormal(DenseMatrix& m, CounterRng& rng, double mu, double sigma) {
  for (std::size_t k = 0; k < m.size(); ++k) m.data()[k] = rng.next_lognormal(mu, sigma);
}

// log of a per-column Dirichlet draw over the vocabulary dimension.
inline void fill_log_dirichlet_cols(DenseMatrix& m, CounterRng& rng, double alpha) {
  for (std::size_t col = 0; col < m.cols(); ++col) {
    auto p = rng.next_dirichlet(m.rows(), alpha);
    for (std::size_t row = 0; row < m.rows(); ++row) m(row, col) = std::log(p[row]);
  }
}

}  // namespace detail

inline Model init_params(ModelFamily family, ModelKind kind, const ModelDims& dims,
                         const InitScheme& scheme, std::uint64_t seed) {
  if (scheme.kind == InitKind::Dirichlet && kind != ModelKind::NonNegative)
    throw ArgumentError("Dirichlet initialisation applies to the NonNegative kind only");
  if (scheme.kind == InitKind::LogNormal && kind != ModelKind::Squared)
    throw ArgumentError("LogNormal initialisation applies to the Squared kind only");
  if (scheme.kind == InitKind::Gaussian && kind == ModelKind::NonNegative)
    throw ArgumentError("NonNegative models initialise from Dirichlet draws");
  CounterRng rng(seed);
  Model m;
  m.family = family;
  m.kind = kind;
  const double mu = lognormal_mu(family, dims, scheme.sigma);
  auto fill = [&](DenseMatrix& t) {
    if (scheme.kind == InitKind::Gaussian) detail::fill_gaussian(t, rng, scheme.sigma);
    else if (scheme.kind == InitKind::LogNormal)
      detail::fill_lognormal(t, rng, mu, scheme.sigma);
    else detail::fill_log_dirichlet_cols(t, rng, scheme.alpha);
  };
  switch (family) {
    case ModelFamily::CP: {
      CpParams p;
      p.u = DenseMatrix(dims.ne, dims.d);
      p.w = DenseMatrix(dims.nr, dims.d);
      p.v = DenseMatrix(dims.ne, dims.d);
      fill(p.u);
      fill(p.w);
      fill(p.v);
      m.params = std::move(p);
      break;
    }
    case ModelFamily::ComplEx: {
      ComplexParams p;
      p.e_re = DenseMatrix(dims.ne, dims.d);
      p.w_re = DenseMatrix(dims.nr, dims.d);
      fill(p.e_re);
      fill(p.w_re);
      if (kind == ModelKind::NonNegative) {
        // the reparametrisation logits start near zero (sigma = 1e-2)
        p.theta = DenseMatrix(dims.ne, dims.d);
        p.gamma = DenseMatrix(dims.nr, dims.d);
        detail::fill_gaussian(p.theta, rng, 1e-2);
        detail::fill_gaussian(p.gamma, rng, 1e-2);
      } else {
        p.e_im = DenseMatrix(dims.ne, dims.d);
        p.w_im = DenseMatrix(dims.nr, dims.d);
        fill(p.e_im);
        fill(p.w_im);
      }
      m.params = std::move(p);
      break;
    }
    case ModelFamily::RESCAL: {
      RescalParams p;
      p.e = DenseMatrix(dims.ne, dims.d);
      fill(p.e);
      if (kind == ModelKind::NonNegative) {
        // predicate matrices: Dirichlet across predicates per (i, j) cell
        std::vector<DenseMatrix> ws(dims.nr, DenseMatrix(dims.d, dims.d));
        for (std::size_t i = 0; i < dims.d; ++i)
          for (std::size_t j = 0; j < dims.d; ++j) {
            auto pr = rng.next_dirichlet(dims.nr, scheme.alpha);
            for (std::size_t r = 0; r < dims.nr; ++r) ws[r](i, j) = std::log(pr[r]);
          }
        p.w = std::move(ws);
      } else {
        for (std::size_t r = 0; r < dims.nr; ++r) {
          DenseMatrix w(dims.d, dims.d);
          fill(w);
          p.w.push_back(std::move(w));
        }
      }
      m.params = std::move(p);
      break;
    }
    case ModelFamily::TuckER: {
      TuckerParams p;
      p.de = dims.de;
      p.dr = dims.dr;
      p.e = DenseMatrix(dims.ne, dims.de);
      p.w = DenseMatrix(dims.nr, dims.dr);
      fill(p.e);
      fill(p.w);
      p.core.resize(dims.de * dims.de * dims.dr);
      if (kind == ModelKind::NonNegative) {
        // one Dirichlet over all branch weights
        auto pr = rng.next_dirichlet(p.core.size(), scheme.alpha);
        for (std::size_t x = 0; x < p.core.size(); ++x) p.core[x] = std::log(pr[x]);
      } else {
        for (double& x : p.core)
          x = scheme.kind == InitKind::Gaussian ? scheme.sigma * rng.next_gaussian()
                                                : rng.next_lognormal(mu, scheme.sigma);
      }
      m.params = std::move(p);
      break;
    }
  }
  m.touch();
  validate(m);
  return m;
}

// ---------------------------------------------------------------------------
// Distillation

struct DistillReport {
  double nonneg_fraction = 0.0;
  std::size_t queries = 0;
  std::size_t skipped = 0;  // queries with a negative candidate score
  double min_kendall_tau = 1.0;
};

inline double kendall_tau(std::span<const double> a, std::span<const double> b) {
  std::size_t concordant = 0, discordant = 0, usable = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0.0 || db == 0.0) continue;
      ++usable;
      if ((da > 0) == (db > 0)) ++concordant;
      else ++discordant;
    }
  if (usable == 0) return 1.0;
  return (double(concordant) - double(discordant)) / double(usable);
}

// Copies an energy-based CP/ComplEx checkpoint into its squared counterpart
// and checks the ranking-invariance premise on the supplied triples.
inline Model distill(const Model& ebm, std::span<const Triple> eval_triples,
                     DistillReport* report = nullptr, std::size_t max_queries = 1000) {
  if (ebm.kind != ModelKind::EnergyBased)
    throw ArgumentError("distillation starts from an energy-based model");
  if (ebm.family != ModelFamily::CP && ebm.family != ModelFamily::ComplEx)
    throw ArgumentError("distillation supports the CP and ComplEx families");
  Model sq = ebm;
  sq.kind = ModelKind::Squared;
  sq.cache = ModelCache{};
  sq.touch();
  if (report) {
    *report = DistillReport{};
    if (!eval_triples.empty())
      report->nonneg_fraction = nonneg_score_fraction(ebm, eval_triples);
    std::size_t n = std::min(max_queries, eval_triples.size());
    for (std::size_t qi = 0; qi < n; ++qi) {
      const Triple& t = eval_triples[qi];
      auto raw = candidate_scores(ebm, Slot::Object, Pattern{.s = t.subject, .r = t.predicate});
      bool all_nonneg = true;
      for (double v : raw)
        if (v < 0.0) {
          all_nonneg = false;
          break;
        }
      if (!all_nonneg) {
        ++report->skipped;
        continue;
      }
      auto sqs = candidate_scores(sq, Slot::Object, Pattern{.s = t.subject, .r = t.predicate});
      report->min_kendall_tau = std::min(report->min_kendall_tau, kendall_tau(raw, sqs));
      ++report->queries;
    }
  }
  return sq;
}

// ---------------------------------------------------------------------------
// Training loop

enum class Objective { PLL, MLE };
enum class Precision { Double, Single };

struct TrainConfig {
  Objective objective = Objective::PLL;
  PllWeights weights;
  std::size_t batch_size = 256;
  double learning_rate = 0.0;  // 0 = per-kind default (1e-2 nonneg, 1e-3 otherwise)
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t patience = 3;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  Precision precision = Precision::Double;
  std::size_t valid_sample = 0;  // cap on validation queries per epoch, 0 = all
  std::size_t ebm_block_elems = (std::size_t(512) << 20) / 8;
};

struct EpochStats {
  std::size_t epoch = 0;
  double objective_value = 0.0;
  double valid_mrr = 0.0;
  double seconds = 0.0;
  std::size_t peak_bytes = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> log;
  std::size_t best_epoch = 0;
  double best_valid_mrr = 0.0;
};

// Stop when the metric has not improved for `patience` consecutive epochs;
// the caller keeps the snapshot of the best epoch.
struct EarlyStopper {
  std::size_t patience = 3;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_best = 0;
  std::size_t epoch = 0;

  // returns true when the new value is an improvement
  bool update(double value) {
    ++epoch;
    if (value > best) {
      best = value;
      best_epoch = epoch;
      since_best = 0;
      return true;
    }
    ++since_best;
    return false;
  }
  bool should_stop() const { return since_best >= patience; }
};

inline double resolved_learning_rate(const TrainConfig& cfg, ModelKind kind) {
  if (cfg.learning_rate > 0.0) return cfg.learning_rate;
  return kind == ModelKind::NonNegative ? 1e-2 : 1e-3;
}

inline TrainResult fit(Model model, const KnowledgeGraph& kg, const TrainConfig& cfg,
                       const ConstraintCircuit* constraints = nullptr) {
  if (model.num_entities() != kg.num_entities() ||
      model.num_predicates() != kg.num_predicates())
    throw ArgumentError("fit: model dimensions do not match the knowledge graph");
  if (kg.train.empty()) throw ArgumentError("fit: empty training split");
  if (cfg.objective == Objective::MLE && model.kind == ModelKind::EnergyBased)
    throw ArgumentError("exact MLE training is infeasible for energy-based models");
  if (cfg.precision != Precision::Double)
    throw ArgumentError(
        "this build trains in double precision only; all stated tolerances assume it");

  std::optional<ConstrainedModel> cm;
  if (constraints) cm.emplace(model, *constraints);
  ObjectiveOptions opts;
  opts.constraints = cm ? &*cm : nullptr;
  opts.ebm_block_elems = cfg.ebm_block_elems;

  AdamConfig adam{resolved_learning_rate(cfg, model.kind), cfg.beta1, cfg.beta2, cfg.eps};
  AdamState adam_state;

  CounterRng rng(cfg.seed);
  std::vector<std::size_t> order(kg.train.size());
  std::iota(order.begin(), order.end(), 0);

  // fixed validation subsample so per-epoch MRRs are comparable
  std::vector<Triple> valid = kg.valid;
  if (cfg.valid_sample > 0 && valid.size() > cfg.valid_sample) {
    CounterRng vr = rng.stream(0x7a11d);
    for (std::size_t i = 0; i < cfg.valid_sample; ++i) {
      std::size_t j = i + std::size_t(vr.next_below(valid.size() - i));
      std::swap(valid[i], valid[j]);
    }
    valid.resize(cfg.valid_sample);
  }

  TrainResult result;
  result.model = model;
  EarlyStopper stopper{cfg.patience};
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto start = std::chrono::steady_clock::now();
    memtrack::reset_peak();
    CounterRng er = rng.stream(epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = std::size_t(er.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    std::vector<Triple> batch;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      batch.clear();
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(kg.train[order[i]]);
      ObjectiveResult obj = cfg.objective == Objective::PLL
                                ? pll_loss(model, batch, cfg.weights, opts)
                                : mle_loss(model, batch, opts);
      ++step;
      if (!std::isfinite(obj.loss)) {
        double pn = 0.0;
        for (auto v : param_views(model))
          for (double x : v) pn += x * x;
        std::ostringstream os;
        os << "non-finite loss at step " << step << " (parameter norm "
           << std::sqrt(pn) << ")";
        throw NumericError(os.str());
      }
      epoch_loss += obj.loss;
      ++batches;
      adam_step(param_views(model), grad_views(obj.grads, model), adam_state, adam);
      model.touch();
    }
    epoch_loss /= double(std::max<std::size_t>(1, batches));

    double mrr = 0.0;
    if (!valid.empty()) {
      SlotScorer scorer = cm ? make_scorer(*cm) : make_scorer(model);
      mrr = mrr_hits(scorer, valid, kg.filter, {1}).mrr;
    }
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    result.log.push_back({epoch, epoch_loss, mrr,
                          elapsed.count(), std::size_t(std::max<std::int64_t>(
                                               0, memtrack::peak_bytes()))});
    if (!valid.empty()) {
      if (stopper.update(mrr)) {
        result.model = model;
        result.best_epoch = epoch;
        result.best_valid_mrr = mrr;
      }
      if (stopper.should_stop()) break;
    } else {
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace gekc
