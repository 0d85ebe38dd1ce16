#pragma once

// Synthetic relational KG with structure that rewards signed embeddings:
// cluster-typed predicates plus permutation ("matches") and ring
// ("successor") patterns that non-negative factorisations fit poorly.

#include <algorithm>
#include <numeric>
#include <string>

#include "gekc/kg.hpp"
#include "gekc/rng.hpp"

namespace gekc::testing {

struct ToyKgConfig {
  std::size_t entities = 120;
  std::size_t clusters = 4;
  std::size_t cluster_predicates = 3;
  std::size_t pattern_predicates = 3;  // shifted rings (+ optional matching)
  bool random_matching = true;         // pattern 0 is a random permutation
  double edge_rate = 0.25;             // fraction of allowed cluster pairs kept
  std::uint64_t seed = 7;
};

inline KnowledgeGraph make_toy_kg(const ToyKgConfig& cfg = {}) {
  CounterRng rng(cfg.seed);
  KnowledgeGraph kg;
  for (std::size_t e = 0; e < cfg.entities; ++e)
    kg.vocab.add_entity("e" + std::to_string(e));
  for (std::size_t r = 0; r < cfg.cluster_predicates; ++r)
    kg.vocab.add_predicate("rel" + std::to_string(r));
  for (std::size_t r = 0; r < cfg.pattern_predicates; ++r)
    kg.vocab.add_predicate("pat" + std::to_string(r));

  std::vector<std::int32_t> cluster(cfg.entities);
  for (std::size_t e = 0; e < cfg.entities; ++e)
    cluster[e] = std::int32_t(e % cfg.clusters);

  std::vector<Triple> all;
  // cluster predicates connect one source cluster to one target cluster
  for (std::size_t r = 0; r < cfg.cluster_predicates; ++r) {
    std::int32_t cs = std::int32_t(rng.next_below(cfg.clusters));
    std::int32_t co = std::int32_t((cs + 1 + rng.next_below(cfg.clusters - 1)) %
                                   cfg.clusters);
    for (std::size_t s = 0; s < cfg.entities; ++s) {
      if (cluster[s] != cs) continue;
      for (std::size_t o = 0; o < cfg.entities; ++o) {
        if (cluster[o] != co || s == o) continue;
        if (rng.next_double() < cfg.edge_rate)
          all.push_back({std::int32_t(s), std::int32_t(r), std::int32_t(o)});
      }
    }
  }
  // pattern predicates: a random permutation and shifted rings
  std::vector<std::int32_t> perm(cfg.entities);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = cfg.entities; i > 1; --i)
    std::swap(perm[i - 1], perm[std::size_t(rng.next_below(i))]);
  for (std::size_t r = 0; r < cfg.pattern_predicates; ++r) {
    std::int32_t rid = std::int32_t(cfg.cluster_predicates + r);
    for (std::size_t s = 0; s < cfg.entities; ++s) {
      std::int32_t o = (r == 0 && cfg.random_matching)
                           ? perm[s]
                           : std::int32_t((s + 3 * r + 1) % cfg.entities);
      if (std::int32_t(s) != o) all.push_back({std::int32_t(s), rid, o});
    }
  }

  // deterministic shuffle, then 80/10/10 split
  for (std::size_t i = all.size(); i > 1; --i)
    std::swap(all[i - 1], all[std::size_t(rng.next_below(i))]);
  std::size_t n_test = all.size() / 10;
  std::size_t n_valid = all.size() / 10;
  std::size_t n_train = all.size() - n_test - n_valid;
  kg.train.assign(all.begin(), all.begin() + n_train);
  kg.valid.assign(all.begin() + n_train, all.begin() + n_train + n_valid);
  kg.test.assign(all.begin() + n_train + n_valid, all.end());
  kg.rebuild_filter();
  return kg;
}

}  // namespace gekc::testing
