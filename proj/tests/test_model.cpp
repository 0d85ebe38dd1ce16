#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gekc/model.hpp"
#include "support/factory.hpp"
#include "support/oracles.hpp"

using namespace gekc;
using gekc::testing::Dims;
using gekc::testing::make_model;
using gekc::testing::oracle_marginal;
using gekc::testing::oracle_partition;
using gekc::testing::oracle_score;
using gekc::testing::rel_err;

namespace {

const ModelFamily kFamilies[] = {ModelFamily::CP, ModelFamily::ComplEx,
                                 ModelFamily::RESCAL, ModelFamily::TuckER};
const ModelKind kGekcKinds[] = {ModelKind::NonNegative, ModelKind::Squared};

Model all_ones_cp(ModelKind kind, std::size_t ne = 3, std::size_t nr = 2,
                  std::size_t d = 2) {
  Model m;
  m.family = ModelFamily::CP;
  m.kind = kind;
  // NonNegative stores logs, so log(1) = 0 encodes all-ones embeddings.
  double fill = kind == ModelKind::NonNegative ? 0.0 : 1.0;
  CpParams p;
  p.u = DenseMatrix(ne, d, fill);
  p.w = DenseMatrix(nr, d, fill);
  p.v = DenseMatrix(ne, d, fill);
  m.params = std::move(p);
  m.touch();
  return m;
}

}  // namespace

TEST_CASE("cp score with orthogonal components is zero") {
  Model m;
  m.family = ModelFamily::CP;
  m.kind = ModelKind::EnergyBased;
  CpParams p;
  p.u = DenseMatrix(1, 2);
  p.w = DenseMatrix(1, 2);
  p.v = DenseMatrix(1, 2);
  p.u(0, 0) = 1.0; p.u(0, 1) = 0.0;
  p.w(0, 0) = 1.0; p.w(0, 1) = 1.0;
  p.v(0, 0) = 0.0; p.v(0, 1) = 1.0;
  m.params = std::move(p);
  m.touch();
  REQUIRE(score(m, {0, 0, 0}) == 0.0);
}

TEST_CASE("complex score with zero imaginary parts is the real trilinear") {
  Model m;
  m.family = ModelFamily::ComplEx;
  m.kind = ModelKind::EnergyBased;
  ComplexParams p;
  p.e_re = DenseMatrix(2, 2);
  p.e_im = DenseMatrix(2, 2, 0.0);
  p.w_re = DenseMatrix(1, 2);
  p.w_im = DenseMatrix(1, 2, 0.0);
  p.e_re(0, 0) = 1.0; p.e_re(0, 1) = 2.0;  // e_s
  p.e_re(1, 0) = 1.0; p.e_re(1, 1) = 1.0;  // e_o
  p.w_re(0, 0) = 1.0; p.w_re(0, 1) = 1.0;
  m.params = std::move(p);
  m.touch();
  REQUIRE_THAT(score(m, {0, 0, 1}), Catch::Matchers::WithinAbs(3.0, 1e-12));
}

TEST_CASE("random cp squared equals naive trilinear squared") {
  Model m = make_model(ModelFamily::CP, ModelKind::Squared, {.ne = 5, .nr = 2, .d = 4}, 99);
  for (std::int32_t s = 0; s < 5; ++s)
    for (std::int32_t o = 0; o < 5; ++o) {
      double lib = score(m, {s, 1, o});
      double naive = oracle_score(m, s, 1, o);
      REQUIRE(rel_err(lib, naive) < 1e-12);
    }
}

TEST_CASE("score matches the naive oracle for every family and kind") {
  for (ModelFamily f : kFamilies)
    for (ModelKind k : {ModelKind::EnergyBased, ModelKind::NonNegative, ModelKind::Squared}) {
      Model m = make_model(f, k, Dims{}, 1234 + int(f) * 10 + int(k));
      for (std::int32_t s = 0; s < 3; ++s)
        for (std::int32_t r = 0; r < 2; ++r)
          for (std::int32_t o = 0; o < 3; ++o) {
            INFO(to_string(f) << "/" << to_string(k));
            REQUIRE(rel_err(score(m, {s, r, o}), oracle_score(m, s, r, o)) < 1e-11);
          }
    }
}

TEST_CASE("all-ones cp+ has Z = 36 and cp2 has Z = 72") {
  Model plus = all_ones_cp(ModelKind::NonNegative);
  REQUIRE_THAT(partition_function(plus), Catch::Matchers::WithinRel(36.0, 1e-12));
  REQUIRE_THAT(brute_force_partition(plus), Catch::Matchers::WithinRel(36.0, 1e-12));
  Model sq = all_ones_cp(ModelKind::Squared);
  REQUIRE_THAT(partition_function(sq), Catch::Matchers::WithinRel(72.0, 1e-12));
  REQUIRE_THAT(brute_force_partition(sq), Catch::Matchers::WithinRel(72.0, 1e-12));
}

TEST_CASE("partition refuses energy-based models; brute force has a size guard") {
  Model m = make_model(ModelFamily::CP, ModelKind::EnergyBased, Dims{}, 1);
  REQUIRE_THROWS_AS(partition_function(m), ArgumentError);
  Model big = make_model(ModelFamily::CP, ModelKind::Squared, {.ne = 3000, .nr = 5, .d = 2}, 2);
  REQUIRE_THROWS_AS(brute_force_partition(big), ArgumentError);
}

TEST_CASE("closed-form Z equals brute force for every GeKC family and kind") {
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds)
      for (std::uint64_t seed : {10, 11, 12}) {
        Dims dims{.ne = 7, .nr = 4, .d = 5, .de = 4, .dr = 3};
        Model m = make_model(f, k, dims, seed + int(f) * 100 + int(k) * 7);
        INFO(to_string(f) << "/" << to_string(k) << " seed " << seed);
        REQUIRE(rel_err(partition_function(m), brute_force_partition(m)) < 1e-9);
      }
}

TEST_CASE("random complex squared Z matches brute force") {
  Model m = make_model(ModelFamily::ComplEx, ModelKind::Squared,
                       {.ne = 6, .nr = 3, .d = 4}, 2024);
  REQUIRE(rel_err(partition_function(m), brute_force_partition(m)) < 1e-9);
}

TEST_CASE("random tucker squared cross-checks both directions") {
  Model m = make_model(ModelFamily::TuckER, ModelKind::Squared,
                       {.ne = 5, .nr = 2, .de = 3, .dr = 2}, 77);
  double closed = partition_function(m);
  double brute = brute_force_partition(m);
  REQUIRE(rel_err(closed, brute) < 1e-9);
}

TEST_CASE("all-ones cp+ marginal over objects is 6") {
  Model m = all_ones_cp(ModelKind::NonNegative);
  REQUIRE_THAT(marginal(m, Pattern{.s = 0, .r = 0}), Catch::Matchers::WithinRel(6.0, 1e-12));
}

TEST_CASE("marginal over all wildcards equals the partition function") {
  Model m = make_model(ModelFamily::CP, ModelKind::Squared, Dims{}, 5);
  REQUIRE_THAT(marginal(m, Pattern{}),
               Catch::Matchers::WithinRel(partition_function(m), 1e-12));
}

TEST_CASE("marginal argument and kind guards") {
  Model m = make_model(ModelFamily::CP, ModelKind::Squared, Dims{}, 5);
  REQUIRE_THROWS_AS(marginal(m, Pattern{.s = 0, .r = 0, .o = 0}), ArgumentError);
  Model ebm = make_model(ModelFamily::CP, ModelKind::EnergyBased, Dims{}, 5);
  REQUIRE_THROWS_AS(marginal(ebm, Pattern{.s = 0, .r = 0}), ArgumentError);
}

TEST_CASE("every marginal pattern matches the brute-force oracle") {
  const Pattern patterns[] = {
      {.s = 1, .r = 1, .o = std::nullopt}, {.s = 1, .r = std::nullopt, .o = 2},
      {.s = std::nullopt, .r = 1, .o = 2}, {.s = 1, .r = std::nullopt, .o = std::nullopt},
      {.s = std::nullopt, .r = 1, .o = std::nullopt},
      {.s = std::nullopt, .r = std::nullopt, .o = 2}};
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, Dims{}, 31 + int(f) + 17 * int(k));
      for (const Pattern& q : patterns) {
        INFO(to_string(f) << "/" << to_string(k));
        REQUIRE(rel_err(marginal(m, q), oracle_marginal(m, q)) < 1e-9);
      }
    }
}

TEST_CASE("candidate scores match per-candidate oracle scores in every context shape") {
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, Dims{}, 400 + int(f) * 3 + int(k));
      struct Case {
        Slot target;
        Pattern ctx;
      };
      const Case cases[] = {
          {Slot::Object, {.s = 1, .r = 1}},
          {Slot::Subject, {.r = 1, .o = 2}},
          {Slot::Predicate, {.s = 1, .o = 2}},
          {Slot::Object, {.s = 1}},
          {Slot::Object, {.r = 1}},
          {Slot::Object, {}},
          {Slot::Subject, {.r = 1}},
          {Slot::Subject, {.o = 2}},
          {Slot::Subject, {}},
          {Slot::Predicate, {.s = 1}},
          {Slot::Predicate, {.o = 2}},
          {Slot::Predicate, {}},
      };
      for (const Case& c : cases) {
        auto keys = candidate_scores(m, c.target, c.ctx);
        std::size_t n = c.target == Slot::Predicate ? m.num_predicates() : m.num_entities();
        REQUIRE(keys.size() == n);
        for (std::size_t cand = 0; cand < n; ++cand) {
          Pattern q = c.ctx;
          if (c.target == Slot::Subject) q.s = std::int32_t(cand);
          if (c.target == Slot::Predicate) q.r = std::int32_t(cand);
          if (c.target == Slot::Object) q.o = std::int32_t(cand);
          double expected = q.wildcards() == 0
                                ? oracle_score(m, *q.s, *q.r, *q.o)
                                : oracle_marginal(m, q);
          INFO(to_string(f) << "/" << to_string(k) << " target " << int(c.target)
                            << " cand " << cand);
          REQUIRE(rel_err(std::exp(keys[cand]), expected) < 1e-9);
        }
      }
    }
}

TEST_CASE("conditional of an all-equal model is uniform") {
  Model m = all_ones_cp(ModelKind::Squared);
  auto p = conditional_distribution(m, Slot::Object, Pattern{.s = 0, .r = 1});
  for (double x : p) REQUIRE_THAT(x, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
}

TEST_CASE("rank-1 cp+ conditional follows the object column") {
  Model m;
  m.family = ModelFamily::CP;
  m.kind = ModelKind::NonNegative;
  CpParams p;
  p.u = DenseMatrix(2, 1, 0.0);
  p.w = DenseMatrix(1, 1, 0.0);
  p.v = DenseMatrix(2, 1);
  p.v(0, 0) = std::log(1.0);
  p.v(1, 0) = std::log(3.0);
  m.params = std::move(p);
  m.touch();
  auto pd = conditional_distribution(m, Slot::Object, Pattern{.s = 1, .r = 0});
  REQUIRE_THAT(pd[0], Catch::Matchers::WithinAbs(0.25, 1e-12));
  REQUIRE_THAT(pd[1], Catch::Matchers::WithinAbs(0.75, 1e-12));
}

TEST_CASE("conditionals normalise and match brute-force normalisation") {
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, {.ne = 5, .nr = 3, .d = 3, .de = 3, .dr = 2},
                           900 + int(f) * 3 + int(k));
      for (Slot target : {Slot::Subject, Slot::Predicate, Slot::Object}) {
        Pattern ctx;
        if (target == Slot::Subject) ctx = {.r = 1, .o = 3};
        else if (target == Slot::Predicate) ctx = {.s = 2, .o = 0};
        else ctx = {.s = 4, .r = 2};
        auto p = conditional_distribution(m, target, ctx);
        double total = std::accumulate(p.begin(), p.end(), 0.0);
        REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-9));
        // brute-force normalisation over oracle scores
        double denom = 0.0;
        std::vector<double> brute(p.size());
        for (std::size_t cand = 0; cand < p.size(); ++cand) {
          Pattern q = ctx;
          if (target == Slot::Subject) q.s = std::int32_t(cand);
          else if (target == Slot::Predicate) q.r = std::int32_t(cand);
          else q.o = std::int32_t(cand);
          brute[cand] = oracle_score(m, *q.s, *q.r, *q.o);
          denom += brute[cand];
        }
        for (std::size_t cand = 0; cand < p.size(); ++cand) {
          INFO(to_string(f) << "/" << to_string(k) << " target " << int(target));
          REQUIRE_THAT(p[cand], Catch::Matchers::WithinAbs(brute[cand] / denom, 1e-10));
        }
      }
    }
}

TEST_CASE("zero-mass context raises a degenerate-context error") {
  Model m = all_ones_cp(ModelKind::Squared);
  m.cp().u.row(0)[0] = 0.0;
  m.cp().u.row(0)[1] = 0.0;
  m.touch();
  REQUIRE_THROWS_AS(conditional_distribution(m, Slot::Object, Pattern{.s = 0, .r = 0}),
                    NumericError);
}

TEST_CASE("log_prob of the all-ones cp+ is log(1/18)") {
  Model m = all_ones_cp(ModelKind::NonNegative);
  REQUIRE_THAT(log_prob(m, {1, 1, 2}),
               Catch::Matchers::WithinAbs(std::log(1.0 / 18.0), 1e-12));
}

TEST_CASE("an exactly-zero squared score maps to -inf log_prob") {
  Model m = all_ones_cp(ModelKind::Squared);
  m.cp().v.row(2)[0] = 0.0;
  m.cp().v.row(2)[1] = 0.0;
  m.touch();
  REQUIRE(log_prob(m, {0, 0, 2}) == -std::numeric_limits<double>::infinity());
  REQUIRE(score(m, {0, 0, 2}) == 0.0);
}

TEST_CASE("exp(log_prob) sums to one over all triples") {
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, Dims{}, 3100 + int(f) + 5 * int(k));
      CompensatedSum total;
      for (std::int32_t s = 0; s < std::int32_t(m.num_entities()); ++s)
        for (std::int32_t r = 0; r < std::int32_t(m.num_predicates()); ++r)
          for (std::int32_t o = 0; o < std::int32_t(m.num_entities()); ++o)
            total.add(std::exp(log_prob(m, {s, r, o})));
      INFO(to_string(f) << "/" << to_string(k));
      REQUIRE_THAT(total.value(), Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("nonnegative and squared kinds score >= 0 on full enumeration") {
  for (ModelFamily f : kFamilies)
    for (ModelKind k : kGekcKinds) {
      Model m = make_model(f, k, Dims{}, 41 + int(f) + 11 * int(k));
      for (std::int32_t s = 0; s < std::int32_t(m.num_entities()); ++s)
        for (std::int32_t r = 0; r < std::int32_t(m.num_predicates()); ++r)
          for (std::int32_t o = 0; o < std::int32_t(m.num_entities()); ++o)
            REQUIRE(score(m, {s, r, o}) >= 0.0);
    }
}

TEST_CASE("complex+ reparametrisation keeps Re >= Im and scores nonnegative") {
  Model m = make_model(ModelFamily::ComplEx, ModelKind::NonNegative, Dims{}, 555);
  const auto& p = m.cx();
  for (std::size_t u = 0; u < p.e_re.rows(); ++u)
    for (std::size_t i = 0; i < p.e_re.cols(); ++i) {
      double re = std::exp(p.e_re(u, i));
      double im = re * sigmoid(p.theta(u, i));
      REQUIRE(re >= im);
    }
  for (std::int32_t s = 0; s < 6; ++s)
    for (std::int32_t r = 0; r < 3; ++r)
      for (std::int32_t o = 0; o < 6; ++o) REQUIRE(oracle_score(m, s, r, o) >= -1e-15);
}

TEST_CASE("squaring preserves the ranking where energy-based scores are nonnegative") {
  Model ebm = make_model(ModelFamily::CP, ModelKind::EnergyBased, Dims{}, 808);
  // force positive parameters so all scores are positive
  for (DenseMatrix* t : {&ebm.cp().u, &ebm.cp().w, &ebm.cp().v})
    for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = std::fabs(t->data()[i]) + 0.05;
  ebm.touch();
  Model sq = ebm;
  sq.kind = ModelKind::Squared;
  sq.touch();
  auto raw = candidate_scores(ebm, Slot::Object, Pattern{.s = 1, .r = 1});
  auto sqk = candidate_scores(sq, Slot::Object, Pattern{.s = 1, .r = 1});
  std::vector<std::size_t> ord1(raw.size()), ord2(raw.size());
  std::iota(ord1.begin(), ord1.end(), 0);
  ord2 = ord1;
  std::sort(ord1.begin(), ord1.end(), [&](auto a, auto b) { return raw[a] > raw[b]; });
  std::sort(ord2.begin(), ord2.end(), [&](auto a, auto b) { return sqk[a] > sqk[b]; });
  REQUIRE(ord1 == ord2);
}

TEST_CASE("circuit size reproduces the complex d=1000 anchor") {
  std::size_t size = circuit_size(ModelFamily::ComplEx, ModelKind::EnergyBased,
                                  {.d = 1000}, 93773, 51);
  REQUIRE(std::fabs(double(size) - 375e6) / 375e6 < 0.001);
}

TEST_CASE("cp circuit size at d=1 is the hand count") {
  std::size_t ne = 9, nr = 4;
  REQUIRE(circuit_size(ModelFamily::CP, ModelKind::EnergyBased, {.d = 1}, ne, nr) ==
          2 * ne + nr + 3 + 1);
}

TEST_CASE("tucker product/sum part grows as de^2 * dr") {
  // with empty vocabularies only product and sum edges remain
  REQUIRE(circuit_size(ModelFamily::TuckER, ModelKind::EnergyBased,
                       {.de = 5, .dr = 3}, 0, 0) == 4 * 5 * 5 * 3);
  REQUIRE(circuit_size(ModelFamily::TuckER, ModelKind::EnergyBased,
                       {.de = 10, .dr = 3}, 0, 0) == 4 * 10 * 10 * 3);
}

TEST_CASE("nonneg_score_fraction counts sign flips correctly") {
  Model m = make_model(ModelFamily::CP, ModelKind::EnergyBased, Dims{}, 31337);
  std::vector<Triple> triples;
  for (std::int32_t s = 0; s < 6; ++s)
    for (std::int32_t o = 0; o < 6; ++o) triples.push_back({s, 0, o});
  double frac = nonneg_score_fraction(m, triples);
  REQUIRE(frac >= 0.0);
  REQUIRE(frac <= 1.0);
  double strictly_pos = 0.0;
  for (const auto& t : triples)
    if (score(m, t) > 0.0) strictly_pos += 1.0;
  strictly_pos /= double(triples.size());
  Model neg = m;
  for (std::size_t i = 0; i < neg.cp().u.size(); ++i) neg.cp().u.data()[i] *= -1.0;
  neg.touch();
  REQUIRE_THAT(nonneg_score_fraction(neg, triples),
               Catch::Matchers::WithinAbs(1.0 - strictly_pos, 1e-12));

  Model pos = m;
  for (DenseMatrix* t : {&pos.cp().u, &pos.cp().w, &pos.cp().v})
    for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = std::fabs(t->data()[i]);
  pos.touch();
  REQUIRE(nonneg_score_fraction(pos, triples) == 1.0);

  REQUIRE_THROWS_AS(nonneg_score_fraction(m, std::span<const Triple>{}), ArgumentError);
  Model gekc = make_model(ModelFamily::CP, ModelKind::Squared, Dims{}, 1);
  REQUIRE_THROWS_AS(nonneg_score_fraction(gekc, triples), ArgumentError);
}

TEST_CASE("cached partition function survives reads and dies on updates") {
  Model m = make_model(ModelFamily::CP, ModelKind::Squared, Dims{}, 6);
  double z1 = partition_function(m);
  REQUIRE(partition_function(m) == z1);
  m.cp().u(0, 0) += 0.5;
  m.touch();
  double z2 = partition_function(m);
  REQUIRE(z1 != z2);
  REQUIRE(rel_err(z2, brute_force_partition(m)) < 1e-9);
}
