#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "gekc/constraints.hpp"
#include "support/factory.hpp"
#include "support/oracles.hpp"

using namespace gekc;
using gekc::testing::Dims;
using gekc::testing::make_model;
using gekc::testing::oracle_score;
using gekc::testing::rel_err;

namespace {

KnowledgeGraph synthetic_kg(std::size_t ne, std::size_t nr) {
  KnowledgeGraph kg;
  for (std::size_t e = 0; e < ne; ++e) kg.vocab.add_entity("e" + std::to_string(e));
  for (std::size_t r = 0; r < nr; ++r) kg.vocab.add_predicate("r" + std::to_string(r));
  return kg;
}

// Entities round-robin over `nd` domains; predicate r gets the pair
// (r mod nd, (r / nd) mod nd).
DomainMetadata synthetic_domains(const KnowledgeGraph& kg, std::size_t nd) {
  DomainMetadata meta;
  for (std::size_t d = 0; d < nd; ++d)
    meta.domain_names.push_back("dom" + std::to_string(d));
  meta.entity_domain.resize(kg.num_entities());
  for (std::size_t e = 0; e < kg.num_entities(); ++e)
    meta.entity_domain[e] = std::int32_t(e % nd);
  meta.predicate_domains.resize(kg.num_predicates());
  for (std::size_t r = 0; r < kg.num_predicates(); ++r)
    meta.predicate_domains[r] = {std::int32_t(r % nd), std::int32_t((r / nd) % nd)};
  return meta;
}

double brute_constrained_z(const Model& m, const ConstraintCircuit& c) {
  CompensatedSum z;
  for (std::int32_t s = 0; s < std::int32_t(m.num_entities()); ++s)
    for (std::int32_t r = 0; r < std::int32_t(m.num_predicates()); ++r)
      for (std::int32_t o = 0; o < std::int32_t(m.num_entities()); ++o)
        if (c.satisfies({s, r, o})) z.add(oracle_score(m, s, r, o));
  return z.value();
}

const ModelFamily kFamilies[] = {ModelFamily::CP, ModelFamily::ComplEx,
                                 ModelFamily::RESCAL, ModelFamily::TuckER};
const ModelKind kGekcKinds[] = {ModelKind::NonNegative, ModelKind::Squared};

}  // namespace

TEST_CASE("shared domains collapse to one group of size 2|E| + |R|") {
  KnowledgeGraph kg = synthetic_kg(9, 5);
  DomainMetadata meta = synthetic_domains(kg, 1);
  ConstraintCircuit c = compile_constraints(meta, kg);
  REQUIRE(c.groups.size() == 1);
  REQUIRE(c.compiled_size() == 2 * 9 + 5);
}

TEST_CASE("distinct domain pairs give one group per predicate") {
  KnowledgeGraph kg = synthetic_kg(12, 4);
  DomainMetadata meta = synthetic_domains(kg, 2);  // pairs (0,0),(1,0),(0,1),(1,1)
  ConstraintCircuit c = compile_constraints(meta, kg);
  REQUIRE(c.groups.size() == 4);
  std::size_t expected = kg.num_predicates();
  for (const auto& g : c.groups) expected += g.kappa_s.size() + g.kappa_o.size();
  REQUIRE(c.compiled_size() == expected);
  // each kappa holds half the entities, so the size scales as |E| * |R|
  REQUIRE(c.compiled_size() == 4 * 12 + 4);
}

TEST_CASE("empty domains and missing metadata are compile errors") {
  KnowledgeGraph kg = synthetic_kg(4, 2);
  DomainMetadata meta = synthetic_domains(kg, 2);
  meta.domain_names.push_back("ghost");
  meta.predicate_domains[1] = {0, 2};  // "ghost" has no members
  REQUIRE_THROWS_AS(compile_constraints(meta, kg), DataError);

  DomainMetadata missing = synthetic_domains(kg, 2);
  missing.predicate_domains[0] = {-1, -1};
  REQUIRE_THROWS_AS(compile_constraints(missing, kg), DataError);
  ConstraintCircuit c = compile_constraints(missing, kg, /*allow_unconstrained=*/true);
  REQUIRE(c.groups[c.group_of_predicate[0]].kappa_s.size() == kg.num_entities());
}

TEST_CASE("satisfies checks both memberships") {
  KnowledgeGraph kg = synthetic_kg(6, 2);
  DomainMetadata meta = synthetic_domains(kg, 2);  // even entities dom0, odd dom1
  meta.predicate_domains[0] = {0, 1};              // subjects even, objects odd
  meta.predicate_domains[1] = {1, 0};
  ConstraintCircuit c = compile_constraints(meta, kg);
  REQUIRE(c.satisfies({0, 0, 1}));
  REQUIRE_FALSE(c.satisfies({0, 0, 2}));  // object in the wrong domain
  REQUIRE_FALSE(c.satisfies({1, 0, 1}));  // subject in the wrong domain
}

TEST_CASE("unconstrained kappa sets leave Z unchanged") {
  KnowledgeGraph kg = synthetic_kg(6, 3);
  DomainMetadata meta = synthetic_domains(kg, 1);
  ConstraintCircuit c = compile_constraints(meta, kg);
  for (ModelKind k : kGekcKinds) {
    Model m = make_model(ModelFamily::CP, k, Dims{}, 5 + int(k));
    ConstrainedModel cm(m, c);
    REQUIRE(rel_err(cm.partition(), partition_function(m)) < 1e-12);
  }
}

TEST_CASE("singleton subject group of the all-ones cp+ contributes 6") {
  ConstraintCircuit c;
  c.num_entities = 3;
  c.group_of_predicate = {0, 1};
  ConstraintGroup g0;
  g0.predicates = {0};
  g0.kappa_s = {0};
  g0.kappa_o = {0, 1, 2};
  ConstraintGroup g1;
  g1.predicates = {1};
  g1.kappa_s = {0, 1, 2};
  g1.kappa_o = {0, 1, 2};
  c.groups = {g0, g1};
  c.build_membership();

  Model m;
  m.family = ModelFamily::CP;
  m.kind = ModelKind::NonNegative;
  CpParams p;
  p.u = DenseMatrix(3, 2, 0.0);  // logs of all-ones
  p.w = DenseMatrix(2, 2, 0.0);
  p.v = DenseMatrix(3, 2, 0.0);
  m.params = std::move(p);
  m.touch();
  ConstrainedModel cm(m, c);
  REQUIRE_THAT(std::exp(cm.group_stats(0).log_z), Catch::Matchers::WithinRel(6.0, 1e-12));
  REQUIRE_THAT(cm.partition(), Catch::Matchers::WithinRel(24.0, 1e-12));
}

TEST_CASE("constrained partition matches filtered brute force for all GeKCs") {
  KnowledgeGraph kg = synthetic_kg(8, 4);
  DomainMetadata meta = synthetic_domains(kg, 3);
  ConstraintCircuit c = compile_constraints(meta, kg);
  REQUIRE(c.groups.size() >= 2);
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, {.ne = 8, .nr = 4, .d = 3, .de = 3, .dr = 2},
                           700 + int(f) * 2 + int(k));
      ConstrainedModel cm(m, c);
      INFO(to_string(f) << "/" << to_string(k));
      REQUIRE(rel_err(cm.partition(), brute_constrained_z(m, c)) < 1e-9);
      REQUIRE(cm.partition() <= partition_function(m) * (1.0 + 1e-12));
    }
}

TEST_CASE("constrained conditionals zero out violators exactly") {
  KnowledgeGraph kg = synthetic_kg(6, 3);
  DomainMetadata meta = synthetic_domains(kg, 2);
  ConstraintCircuit c = compile_constraints(meta, kg);
  for (ModelFamily f : {ModelFamily::CP, ModelFamily::ComplEx})
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, {.ne = 6, .nr = 3, .d = 3}, 900 + int(f) + int(k));
      ConstrainedModel cm(m, c);
      auto p = cm.conditional_distribution(Slot::Object, Pattern{.s = 0, .r = 0});
      double total = 0.0;
      for (std::size_t o = 0; o < p.size(); ++o) {
        if (!c.object_allowed(0, std::int32_t(o))) REQUIRE(p[o] == 0.0);
        total += p[o];
      }
      REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
      double denom = 0.0;
      std::vector<double> brute(p.size(), 0.0);
      for (std::size_t o = 0; o < p.size(); ++o) {
        if (c.satisfies({0, 0, std::int32_t(o)}))
          brute[o] = oracle_score(m, 0, 0, std::int32_t(o));
        denom += brute[o];
      }
      for (std::size_t o = 0; o < p.size(); ++o)
        REQUIRE_THAT(p[o], Catch::Matchers::WithinAbs(brute[o] / denom, 1e-10));
    }
}

TEST_CASE("a context that violates the constraints has zero mass") {
  KnowledgeGraph kg = synthetic_kg(6, 3);
  DomainMetadata meta = synthetic_domains(kg, 2);
  ConstraintCircuit c = compile_constraints(meta, kg);
  Model m = make_model(ModelFamily::CP, ModelKind::Squared, {.ne = 6, .nr = 3, .d = 3}, 3);
  ConstrainedModel cm(m, c);
  // subject 1 lives in domain 1; predicate 0 wants domain-0 subjects
  REQUIRE_THROWS_AS(cm.conditional_distribution(Slot::Object, Pattern{.s = 1, .r = 0}),
                    NumericError);
}

TEST_CASE("constrained scores are the base scores times the indicator") {
  KnowledgeGraph kg = synthetic_kg(6, 3);
  DomainMetadata meta = synthetic_domains(kg, 2);
  ConstraintCircuit c = compile_constraints(meta, kg);
  Model m = make_model(ModelFamily::RESCAL, ModelKind::Squared, {.ne = 6, .nr = 3, .d = 3}, 8);
  ConstrainedModel cm(m, c);
  for (std::int32_t s = 0; s < 6; ++s)
    for (std::int32_t r = 0; r < 3; ++r)
      for (std::int32_t o = 0; o < 6; ++o) {
        Triple t{s, r, o};
        if (c.satisfies(t)) REQUIRE(cm.score(t) == score(m, t));
        else REQUIRE(cm.score(t) == 0.0);
      }
}

TEST_CASE("autoregressive priors match the filtered brute force") {
  KnowledgeGraph kg = synthetic_kg(7, 4);
  DomainMetadata meta = synthetic_domains(kg, 3);
  ConstraintCircuit c = compile_constraints(meta, kg);
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, {.ne = 7, .nr = 4, .d = 3, .de = 2, .dr = 2},
                           1300 + int(f) * 5 + int(k));
      ConstrainedModel cm(m, c);
      auto lp_s = cm.log_subject_prior();
      for (std::int32_t s = 0; s < 7; ++s) {
        CompensatedSum acc;
        for (std::int32_t r = 0; r < 4; ++r)
          for (std::int32_t o = 0; o < 7; ++o)
            if (c.satisfies({s, r, o})) acc.add(oracle_score(m, s, r, o));
        INFO(to_string(f) << "/" << to_string(k) << " s=" << s);
        if (acc.value() == 0.0) REQUIRE(std::exp(lp_s[s]) == 0.0);
        else REQUIRE(rel_err(std::exp(lp_s[s]), acc.value()) < 1e-9);
      }
      std::int32_t s0 = c.groups[0].kappa_s[0];
      auto lp_r = cm.log_predicate_given_subject(s0);
      for (std::int32_t r = 0; r < 4; ++r) {
        CompensatedSum acc;
        for (std::int32_t o = 0; o < 7; ++o)
          if (c.satisfies({s0, r, o})) acc.add(oracle_score(m, s0, r, o));
        INFO(to_string(f) << "/" << to_string(k) << " r=" << r);
        if (acc.value() == 0.0) REQUIRE(std::exp(lp_r[r]) == 0.0);
        else REQUIRE(rel_err(std::exp(lp_r[r]), acc.value()) < 1e-9);
      }
    }
}
