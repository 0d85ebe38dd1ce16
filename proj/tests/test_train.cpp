#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gekc/gradcheck.hpp"
#include "gekc/train.hpp"
#include "support/factory.hpp"
#include "support/oracles.hpp"
#include "support/toy_kg.hpp"

using namespace gekc;
using gekc::testing::Dims;
using gekc::testing::make_model;
using gekc::testing::oracle_partition;
using gekc::testing::oracle_score;
using gekc::testing::rel_err;

namespace {

std::vector<Triple> random_triples(std::size_t n, std::size_t ne, std::size_t nr,
                                   std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Triple> out;
  std::unordered_set<Triple, TripleHash> seen;
  while (out.size() < n) {
    Triple t{std::int32_t(rng.next_below(ne)), std::int32_t(rng.next_below(nr)),
             std::int32_t(rng.next_below(ne))};
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

DifferentiableLoss objective_loss(Model& m, const std::vector<Triple>& batch,
                                  Objective obj, const PllWeights& w,
                                  const ConstrainedModel* cm = nullptr) {
  return DifferentiableLoss{
      [&m, &batch, obj, w, cm]() {
        m.touch();  // parameters may have been perturbed in place
        ObjectiveOptions opts;
        opts.constraints = cm;
        return obj == Objective::PLL ? pll_loss(m, batch, w, opts).loss
                                     : mle_loss(m, batch, opts).loss;
      },
      [&m, &batch, obj, w, cm]() {
        m.touch();
        ObjectiveOptions opts;
        opts.constraints = cm;
        ObjectiveResult r = obj == Objective::PLL ? pll_loss(m, batch, w, opts)
                                                  : mle_loss(m, batch, opts);
        std::vector<std::vector<double>> out;
        for (auto v : grad_views(r.grads, m)) out.emplace_back(v.begin(), v.end());
        return out;
      }};
}

}  // namespace

TEST_CASE("gradient_check validates a quadratic and a constant") {
  std::vector<double> p{0.3, -1.2, 2.0};
  DifferentiableLoss quad{
      [&]() { return p[0] * p[0] + p[1] * p[1] + p[2] * p[2]; },
      [&]() {
        return std::vector<std::vector<double>>{{2 * p[0], 2 * p[1], 2 * p[2]}};
      }};
  auto rep = gradient_check(quad, {std::span<double>(p)}, 1e-5);
  REQUIRE(rep.max_relative_error < 1e-7);
  REQUIRE(rep.parameter_count == 3);

  DifferentiableLoss constant{[]() { return 5.0; },
                              []() {
                                return std::vector<std::vector<double>>{{0.0, 0.0, 0.0}};
                              }};
  REQUIRE(gradient_check(constant, {std::span<double>(p)}, 1e-5).max_relative_error ==
          0.0);
}

TEST_CASE("one adam step matches the hand-computed update") {
  std::vector<double> p{1.0};
  std::vector<double> g{2.0};
  AdamState st;
  AdamConfig cfg{.lr = 0.1};
  adam_step({std::span<double>(p)}, {std::span<double>(g)}, st, cfg);
  double m = (1 - 0.9) * 2.0, v = (1 - 0.999) * 4.0;
  double expect = 1.0 - 0.1 * (m / (1 - 0.9)) / (std::sqrt(v / (1 - 0.999)) + 1e-8);
  REQUIRE(p[0] == expect);
}

TEST_CASE("gradients pass finite-difference checks for all objectives") {
  Dims dims{.ne = 6, .nr = 3, .d = 3, .de = 3, .dr = 2};
  auto batch = random_triples(6, dims.ne, dims.nr, 99);
  for (ModelFamily f : {ModelFamily::CP, ModelFamily::ComplEx, ModelFamily::RESCAL,
                        ModelFamily::TuckER}) {
    for (ModelKind k :
         {ModelKind::EnergyBased, ModelKind::NonNegative, ModelKind::Squared}) {
      Model m = make_model(f, k, dims, 4000 + int(f) * 7 + int(k));
      auto loss = objective_loss(m, batch, Objective::PLL, PllWeights{1.0, 1.0, 1.0});
      auto rep = gradient_check(loss, param_views(m), 1e-5, 11);
      INFO("pll " << to_string(f) << "/" << to_string(k));
      REQUIRE(rep.max_relative_error < 1e-4);
      if (k != ModelKind::EnergyBased) {
        auto mle = objective_loss(m, batch, Objective::MLE, {});
        auto rep2 = gradient_check(mle, param_views(m), 1e-5, 12);
        INFO("mle " << to_string(f) << "/" << to_string(k));
        REQUIRE(rep2.max_relative_error < 1e-4);
      }
    }
  }
}

TEST_CASE("constrained objectives pass gradient checks") {
  KnowledgeGraph kg;
  for (int e = 0; e < 6; ++e) kg.vocab.add_entity("e" + std::to_string(e));
  for (int r = 0; r < 3; ++r) kg.vocab.add_predicate("r" + std::to_string(r));
  DomainMetadata meta;
  meta.domain_names = {"a", "b"};
  meta.entity_domain = {0, 1, 0, 1, 0, 1};
  meta.predicate_domains = {{0, 1}, {1, 0}, {0, 0}};
  ConstraintCircuit circuit = compile_constraints(meta, kg);
  std::vector<Triple> batch{{0, 0, 1}, {2, 0, 3}, {1, 1, 0}, {4, 2, 2}};
  for (ModelFamily f : {ModelFamily::CP, ModelFamily::ComplEx, ModelFamily::RESCAL,
                        ModelFamily::TuckER})
    for (ModelKind k : {ModelKind::NonNegative, ModelKind::Squared}) {
      Model m = make_model(f, k, {.ne = 6, .nr = 3, .d = 3, .de = 2, .dr = 2},
                           6100 + int(f) + 3 * int(k));
      ConstrainedModel cm(m, circuit);
      for (Objective obj : {Objective::PLL, Objective::MLE}) {
        auto loss = objective_loss(m, batch, obj, PllWeights{1, 1, 1}, &cm);
        auto rep = gradient_check(loss, param_views(m), 1e-5, 21);
        INFO(to_string(f) << "/" << to_string(k)
                          << (obj == Objective::PLL ? " pll" : " mle"));
        REQUIRE(rep.max_relative_error < 1e-4);
      }
    }
}

TEST_CASE("uniform model pll with only the object term is log |E|") {
  Model m;
  m.family = ModelFamily::CP;
  m.kind = ModelKind::Squared;
  CpParams p;
  p.u = DenseMatrix(3, 2, 1.0);
  p.w = DenseMatrix(2, 2, 1.0);
  p.v = DenseMatrix(3, 2, 1.0);
  m.params = std::move(p);
  m.touch();
  std::vector<Triple> batch{{0, 0, 1}, {1, 1, 2}};
  auto r = pll_loss(m, batch, PllWeights{0.0, 1.0, 0.0});
  REQUIRE_THAT(r.loss, Catch::Matchers::WithinAbs(std::log(3.0), 1e-12));
  REQUIRE_THROWS_AS(pll_loss(m, batch, PllWeights{0.0, 0.0, 0.0}), ArgumentError);
}

TEST_CASE("efficient pll equals the naive per-triple normalisation") {
  auto batch = random_triples(16, 50, 3, 5);
  for (ModelFamily f : {ModelFamily::CP, ModelFamily::ComplEx, ModelFamily::RESCAL,
                        ModelFamily::TuckER})
    for (ModelKind k : {ModelKind::NonNegative, ModelKind::Squared}) {
      Model m = make_model(f, k, {.ne = 50, .nr = 3, .d = 4, .de = 3, .dr = 2},
                           777 + int(f) * 3 + int(k));
      double eff = pll_loss(m, batch, {}).loss;
      double naive = pll_value_naive(m, batch, {});
      INFO(to_string(f) << "/" << to_string(k));
      REQUIRE(rel_err(eff, naive) < 1e-9);
    }
}

TEST_CASE("blocked ebm pll value is independent of the block size") {
  auto batch = random_triples(12, 40, 3, 6);
  Model m = make_model(ModelFamily::CP, ModelKind::EnergyBased,
                       {.ne = 40, .nr = 3, .d = 4}, 2023);
  ObjectiveOptions small_blocks;
  small_blocks.ebm_block_elems = 64;  // forces many entity blocks
  double blocked = pll_loss(m, batch, {}, small_blocks).loss;
  double full = pll_loss(m, batch, {}).loss;
  REQUIRE_THAT(blocked, Catch::Matchers::WithinAbs(full, 1e-12));
  REQUIRE(rel_err(full, pll_value_naive(m, batch, {})) < 1e-12);
}

TEST_CASE("mle loss of the all-ones cp+ is log 18 per triple") {
  Model m;
  m.family = ModelFamily::CP;
  m.kind = ModelKind::NonNegative;
  CpParams p;
  p.u = DenseMatrix(3, 2, 0.0);
  p.w = DenseMatrix(2, 2, 0.0);
  p.v = DenseMatrix(3, 2, 0.0);
  m.params = std::move(p);
  m.touch();
  std::vector<Triple> batch{{0, 0, 1}, {2, 1, 0}};
  REQUIRE_THAT(mle_loss(m, batch).loss,
               Catch::Matchers::WithinAbs(std::log(18.0), 1e-12));
  Model ebm = m;
  ebm.kind = ModelKind::EnergyBased;
  ebm.touch();
  REQUIRE_THROWS_AS(mle_loss(ebm, batch), ArgumentError);
}

TEST_CASE("mle loss is invariant to rescaling one factor") {
  for (ModelKind k : {ModelKind::NonNegative, ModelKind::Squared}) {
    Model m = make_model(ModelFamily::CP, k, Dims{}, 4242 + int(k));
    auto batch = random_triples(8, 6, 3, 9);
    double before = mle_loss(m, batch).loss;
    const double c = 3.7;
    for (std::size_t i = 0; i < m.cp().w.size(); ++i) {
      if (k == ModelKind::NonNegative) m.cp().w.data()[i] += std::log(c);
      else m.cp().w.data()[i] *= c;
    }
    m.touch();
    REQUIRE_THAT(mle_loss(m, batch).loss, Catch::Matchers::WithinAbs(before, 1e-12));
  }
}

TEST_CASE("mle loss equals the brute-force normalised likelihood") {
  Model m = make_model(ModelFamily::ComplEx, ModelKind::NonNegative,
                       {.ne = 6, .nr = 3, .d = 3}, 31);
  auto batch = random_triples(10, 6, 3, 77);
  double z = oracle_partition(m);
  double expect = 0.0;
  for (const Triple& t : batch)
    expect -= std::log(oracle_score(m, t.subject, t.predicate, t.object) / z) /
              double(batch.size());
  REQUIRE(rel_err(mle_loss(m, batch).loss, expect) < 1e-9);
}

TEST_CASE("lognormal mu matches the d=1000 arithmetic") {
  REQUIRE_THAT(lognormal_mu(ModelFamily::CP, {.d = 1000}, 1e-3),
               Catch::Matchers::WithinAbs(-std::log(1000.0) / 3.0 - 5e-7, 1e-12));
  REQUIRE_THAT(lognormal_mu(ModelFamily::CP, {.d = 1000}, 1e-3),
               Catch::Matchers::WithinAbs(-2.30259, 1e-4));
  REQUIRE_THAT(lognormal_mu(ModelFamily::ComplEx, {.d = 500}, 1e-3),
               Catch::Matchers::WithinAbs(-std::log(1000.0) / 3.0 - 5e-7, 1e-12));
}

TEST_CASE("init_params is reproducible and validates scheme/kind pairs") {
  ModelDims dims{.ne = 5, .nr = 2, .d = 3, .de = 3, .dr = 2};
  Model a = init_params(ModelFamily::CP, ModelKind::EnergyBased, dims,
                        {InitKind::Gaussian, 1e-3}, 9);
  Model b = init_params(ModelFamily::CP, ModelKind::EnergyBased, dims,
                        {InitKind::Gaussian, 1e-3}, 9);
  REQUIRE(a.cp().u.raw() == b.cp().u.raw());
  REQUIRE(a.cp().w.raw() == b.cp().w.raw());

  REQUIRE_THROWS_AS(init_params(ModelFamily::CP, ModelKind::EnergyBased, dims,
                                {InitKind::Dirichlet}, 1),
                    ArgumentError);
  REQUIRE_THROWS_AS(init_params(ModelFamily::CP, ModelKind::NonNegative, dims,
                                {InitKind::LogNormal}, 1),
                    ArgumentError);
  REQUIRE_THROWS_AS(init_params(ModelFamily::CP, ModelKind::NonNegative, dims,
                                {InitKind::Gaussian}, 1),
                    ArgumentError);

  Model nn = init_params(ModelFamily::CP, ModelKind::NonNegative, dims,
                         {InitKind::Dirichlet, 1e-3, 1e3}, 4);
  for (std::size_t col = 0; col < dims.d; ++col) {
    double total = 0.0;
    for (std::size_t e = 0; e < dims.ne; ++e) total += std::exp(nn.cp().u(e, col));
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("early stopping follows the patience-3 rule trace") {
  EarlyStopper st{3};
  const double seq[] = {0.2, 0.3, 0.29, 0.28, 0.27};
  std::size_t stopped_after = 0;
  for (double v : seq) {
    st.update(v);
    if (st.should_stop()) {
      stopped_after = st.epoch;
      break;
    }
  }
  REQUIRE(stopped_after == 5);
  REQUIRE(st.best_epoch == 2);
}

TEST_CASE("fit is deterministic given a seed and improves the mle objective") {
  // ~200 training triples
  KnowledgeGraph kg = gekc::testing::make_toy_kg({.entities = 40,
                                                  .clusters = 4,
                                                  .cluster_predicates = 4,
                                                  .pattern_predicates = 1,
                                                  .edge_rate = 0.4,
                                                  .seed = 11});
  TrainConfig cfg;
  cfg.objective = Objective::MLE;
  cfg.batch_size = 64;
  cfg.max_epochs = 10;
  cfg.patience = 10;
  cfg.seed = 3;
  ModelDims dims{.ne = kg.num_entities(), .nr = kg.num_predicates(), .d = 8};
  Model init = init_params(ModelFamily::CP, ModelKind::Squared, dims,
                           default_init(ModelKind::Squared), 3);
  TrainResult r1 = fit(init, kg, cfg);
  TrainResult r2 = fit(init, kg, cfg);
  REQUIRE(r1.model.cp().u.raw() == r2.model.cp().u.raw());
  REQUIRE(r1.log.size() == r2.log.size());
  for (std::size_t i = 0; i < r1.log.size(); ++i) {
    REQUIRE(r1.log[i].objective_value == r2.log[i].objective_value);
    REQUIRE(r1.log[i].valid_mrr == r2.log[i].valid_mrr);
  }
  // negative log-likelihood trends down over the first epochs (1% slack)
  for (std::size_t i = 1; i < r1.log.size(); ++i)
    REQUIRE(r1.log[i].objective_value <=
            r1.log[i - 1].objective_value * 1.01 + 1e-9);
}

TEST_CASE("distillation from an all-positive ebm agrees on every query") {
  Model ebm = make_model(ModelFamily::CP, ModelKind::EnergyBased,
                         {.ne = 8, .nr = 3, .d = 4}, 5150);
  for (DenseMatrix* t : {&ebm.cp().u, &ebm.cp().w, &ebm.cp().v})
    for (std::size_t i = 0; i < t->size(); ++i)
      t->data()[i] = std::fabs(t->data()[i]) + 0.01;
  ebm.touch();
  auto triples = random_triples(20, 8, 3, 9);
  DistillReport rep;
  Model sq = distill(ebm, triples, &rep);
  REQUIRE(sq.kind == ModelKind::Squared);
  REQUIRE(rep.nonneg_fraction == 1.0);
  REQUIRE(rep.skipped == 0);
  REQUIRE(rep.queries == 20);
  REQUIRE(rep.min_kendall_tau == 1.0);
}

TEST_CASE("queries with negative candidate scores are skipped and flagged") {
  Model ebm = make_model(ModelFamily::CP, ModelKind::EnergyBased,
                         {.ne = 8, .nr = 3, .d = 4}, 5151);
  auto triples = random_triples(20, 8, 3, 10);
  DistillReport rep;
  distill(ebm, triples, &rep);
  REQUIRE(rep.skipped > 0);
  REQUIRE(rep.queries + rep.skipped == 20);
  Model nn = make_model(ModelFamily::CP, ModelKind::NonNegative, Dims{}, 1);
  REQUIRE_THROWS_AS(distill(nn, triples), ArgumentError);
  Model rs = make_model(ModelFamily::RESCAL, ModelKind::EnergyBased, Dims{}, 1);
  REQUIRE_THROWS_AS(distill(rs, triples), ArgumentError);
}

TEST_CASE("single-precision training is rejected explicitly") {
  KnowledgeGraph kg = gekc::testing::make_toy_kg({.entities = 20,
                                                  .clusters = 2,
                                                  .cluster_predicates = 1,
                                                  .pattern_predicates = 1,
                                                  .edge_rate = 0.5,
                                                  .seed = 2});
  TrainConfig cfg;
  cfg.precision = Precision::Single;
  cfg.max_epochs = 1;
  ModelDims dims{kg.num_entities(), kg.num_predicates(), 4, 4, 4};
  Model init = init_params(ModelFamily::CP, ModelKind::Squared, dims,
                           default_init(ModelKind::Squared), 1);
  REQUIRE_THROWS_AS(fit(std::move(init), kg, cfg), ArgumentError);
}
