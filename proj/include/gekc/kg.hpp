#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gekc/error.hpp"

namespace gekc {

struct Triple {
  std::int32_t subject = 0;
  std::int32_t predicate = 0;
  std::int32_t object = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

inline std::uint64_t pair_key(std::int32_t a, std::int32_t b) {
  return (std::uint64_t(std::uint32_t(a)) << 32) | std::uint32_t(b);
}

struct TripleHash {
  std::size_t operator()(const Triple& t) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::uint64_t v : {std::uint64_t(t.subject), std::uint64_t(t.predicate),
                            std::uint64_t(t.object)}) {
      h ^= v;
      h *= 1099511628211ULL;
    }
    return std::size_t(h);
  }
};

// Dense string<->id mapping, first-occurrence order.
class Vocabulary {
 public:
  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_predicates() const { return predicate_names_.size(); }

  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& predicate_names() const { return predicate_names_; }

  std::int32_t entity_id(const std::string& name) const {
    auto it = entity_ids_.find(name);
    return it == entity_ids_.end() ? -1 : it->second;
  }
  std::int32_t predicate_id(const std::string& name) const {
    auto it = predicate_ids_.find(name);
    return it == predicate_ids_.end() ? -1 : it->second;
  }

  std::int32_t add_entity(const std::string& name) {
    auto it = entity_ids_.find(name);
    if (it != entity_ids_.end()) return it->second;
    std::int32_t id = std::int32_t(entity_names_.size());
    entity_names_.push_back(name);
    entity_ids_.emplace(name, id);
    return id;
  }
  std::int32_t add_predicate(const std::string& name) {
    auto it = predicate_ids_.find(name);
    if (it != predicate_ids_.end()) return it->second;
    std::int32_t id = std::int32_t(predicate_names_.size());
    predicate_names_.push_back(name);
    predicate_ids_.emplace(name, id);
    return id;
  }

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> predicate_names_;
  std::unordered_map<std::string, std::int32_t> entity_ids_;
  std::unordered_map<std::string, std::int32_t> predicate_ids_;
};

// Filtered-ranking candidate structure: known completions per key over the
// union of all splits.
struct FilterIndex {
  std::unordered_map<std::uint64_t, std::unordered_set<std::int32_t>> sr_to_objects;
  std::unordered_map<std::uint64_t, std::unordered_set<std::int32_t>> ro_to_subjects;

  void insert(const Triple& t) {
    sr_to_objects[pair_key(t.subject, t.predicate)].insert(t.object);
    ro_to_subjects[pair_key(t.predicate, t.object)].insert(t.subject);
  }
  bool known_object(std::int32_t s, std::int32_t r, std::int32_t o) const {
    auto it = sr_to_objects.find(pair_key(s, r));
    return it != sr_to_objects.end() && it->second.count(o) > 0;
  }
  bool known_subject(std::int32_t s, std::int32_t r, std::int32_t o) const {
    auto it = ro_to_subjects.find(pair_key(r, o));
    return it != ro_to_subjects.end() && it->second.count(s) > 0;
  }
  std::size_t total_triples() const {
    std::size_t n = 0;
    for (const auto& [k, v] : sr_to_objects) n += v.size();
    return n;
  }
};

inline FilterIndex build_filter_index(const std::vector<Triple>& train,
                                      const std::vector<Triple>& valid,
                                      const std::vector<Triple>& test) {
  FilterIndex idx;
  for (const auto* split : {&train, &valid, &test})
    for (const Triple& t : *split) idx.insert(t);
  return idx;
}

struct KnowledgeGraph {
  Vocabulary vocab;
  std::vector<Triple> train, valid, test;
  FilterIndex filter;
  bool reciprocal = false;
  // duplicates dropped per split at load time; the tensor view is boolean
  std::size_t duplicates_removed[3] = {0, 0, 0};

  std::size_t num_entities() const { return vocab.num_entities(); }
  std::size_t num_predicates() const { return vocab.num_predicates(); }

  void rebuild_filter() { filter = build_filter_index(train, valid, test); }
};

struct LoadOptions {
  bool frozen_vocab = false;       // unseen names are an error
  bool allow_unseen = false;       // overrides frozen_vocab per split
};

// One triple per line, `subject<TAB>predicate<TAB>object`, UTF-8, no header.
inline std::vector<Triple> load_triples(const std::string& path, Vocabulary& vocab,
                                        const LoadOptions& opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open triple file: " + path);
  std::vector<Triple> triples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos ||
        line.find('\t', t2 + 1) != std::string::npos) {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 3 tab-separated fields");
    }
    std::string s = line.substr(0, t1);
    std::string p = line.substr(t1 + 1, t2 - t1 - 1);
    std::string o = line.substr(t2 + 1);
    Triple t;
    if (opts.frozen_vocab && !opts.allow_unseen) {
      t.subject = vocab.entity_id(s);
      t.predicate = vocab.predicate_id(p);
      t.object = vocab.entity_id(o);
      if (t.subject < 0 || t.predicate < 0 || t.object < 0) {
        throw DataError(path + ":" + std::to_string(lineno) +
                        ": name not in frozen vocabulary");
      }
    } else {
      t.subject = vocab.add_entity(s);
      t.predicate = vocab.add_predicate(p);
      t.object = vocab.add_entity(o);
    }
    triples.push_back(t);
  }
  return triples;
}

inline std::size_t deduplicate(std::vector<Triple>& triples) {
  std::unordered_set<Triple, TripleHash> seen;
  std::vector<Triple> out;
  out.reserve(triples.size());
  for (const Triple& t : triples)
    if (seen.insert(t).second) out.push_back(t);
  std::size_t removed = triples.size() - out.size();
  triples = std::move(out);
  return removed;
}

inline void add_reciprocals(std::vector<Triple>& triples, std::size_t num_predicates) {
  std::size_t n = triples.size();
  triples.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Triple& t = triples[i];
    triples.push_back({t.object, std::int32_t(t.predicate + num_predicates), t.subject});
  }
}

struct KgLoadConfig {
  bool reciprocal = false;
  bool allow_unseen_in_eval = false;
};

// Loads train (+ optional valid/test against the train-first vocabulary),
// deduplicates each split and builds the filter index. With `reciprocal`,
// every predicate r gains an inverse r' = r + |R| with swapped roles.
inline KnowledgeGraph load_kg(const std::string& train_path,
                              const std::string& valid_path = "",
                              const std::string& test_path = "",
                              const KgLoadConfig& cfg = {}) {
  KnowledgeGraph kg;
  kg.train = load_triples(train_path, kg.vocab);
  if (!valid_path.empty())
    kg.valid = load_triples(valid_path, kg.vocab,
                            {.frozen_vocab = !cfg.allow_unseen_in_eval,
                             .allow_unseen = cfg.allow_unseen_in_eval});
  if (!test_path.empty())
    kg.test = load_triples(test_path, kg.vocab,
                           {.frozen_vocab = !cfg.allow_unseen_in_eval,
                            .allow_unseen = cfg.allow_unseen_in_eval});
  kg.duplicates_removed[0] = deduplicate(kg.train);
  kg.duplicates_removed[1] = deduplicate(kg.valid);
  kg.duplicates_removed[2] = deduplicate(kg.test);
  if (cfg.reciprocal) {
    std::size_t nr = kg.vocab.num_predicates();
    for (std::size_t r = 0; r < nr; ++r)
      kg.vocab.add_predicate(kg.vocab.predicate_names()[r] + "#inv");
    add_reciprocals(kg.train, nr);
    add_reciprocals(kg.valid, nr);
    add_reciprocals(kg.test, nr);
    kg.reciprocal = true;
  }
  kg.rebuild_filter();
  return kg;
}

inline void save_triples(const std::string& path, const std::vector<Triple>& triples,
                         const Vocabulary& vocab, const std::string& header = "") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write triple file: " + path);
  if (!header.empty()) out << "# " << header << "\n";
  for (const Triple& t : triples) {
    out << vocab.entity_names()[t.subject] << '\t'
        << vocab.predicate_names()[t.predicate] << '\t'
        << vocab.entity_names()[t.object] << '\n';
  }
}

// Per-entity and per-predicate domain labels. kappa_S(r) / kappa_O(r) are the
// entity sets whose label matches r's subject/object domain.
struct DomainMetadata {
  std::vector<std::string> domain_names;
  std::vector<std::int32_t> entity_domain;                       // -1 = unlabelled
  std::vector<std::pair<std::int32_t, std::int32_t>> predicate_domains;  // (-1,-1) = absent
  std::vector<std::string> warnings;

  std::int32_t domain_id(const std::string& name) const {
    for (std::size_t i = 0; i < domain_names.size(); ++i)
      if (domain_names[i] == name) return std::int32_t(i);
    return -1;
  }

  bool has_predicate_domains(std::int32_t r) const {
    return r >= 0 && r < std::int32_t(predicate_domains.size()) &&
           predicate_domains[r].first >= 0;
  }

  std::vector<std::int32_t> entities_in_domain(std::int32_t dom) const {
    std::vector<std::int32_t> ids;
    for (std::size_t e = 0; e < entity_domain.size(); ++e)
      if (entity_domain[e] == dom) ids.push_back(std::int32_t(e));
    return ids;
  }

  std::vector<std::int32_t> kappa_subjects(std::int32_t r) const {
    return entities_in_domain(predicate_domains[r].first);
  }
  std::vector<std::int32_t> kappa_objects(std::int32_t r) const {
    return entities_in_domain(predicate_domains[r].second);
  }
};

// Domain metadata file: 2-field lines `entity<TAB>domain`, 3-field lines
// `predicate<TAB>subj_domain<TAB>obj_domain`; the two kinds may be mixed in
// one file or split across files loaded in sequence.
inline void parse_domain_file(const std::string& path, const KnowledgeGraph& kg,
                              DomainMetadata& meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open domain file: " + path);
  std::string line;
  std::size_t lineno = 0;
  auto intern_domain = [&meta](const std::string& name) {
    std::int32_t id = meta.domain_id(name);
    if (id >= 0) return id;
    meta.domain_names.push_back(name);
    return std::int32_t(meta.domain_names.size() - 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      std::size_t tab = line.find('\t', start);
      f.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (f.size() == 2) {
      std::int32_t e = kg.vocab.entity_id(f[0]);
      if (e < 0)
        throw DataError(path + ":" + std::to_string(lineno) + ": unknown entity " + f[0]);
      meta.entity_domain[e] = intern_domain(f[1]);
    } else if (f.size() == 3) {
      std::int32_t r = kg.vocab.predicate_id(f[0]);
      if (r < 0)
        throw DataError(path + ":" + std::to_string(lineno) + ": unknown predicate " + f[0]);
      meta.predicate_domains[r] = {intern_domain(f[1]), intern_domain(f[2])};
    } else {
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected 2 or 3 tab-separated fields");
    }
  }
}

inline DomainMetadata load_domains(const std::vector<std::string>& paths,
                                   const KnowledgeGraph& kg) {
  DomainMetadata meta;
  meta.entity_domain.assign(kg.num_entities(), -1);
  meta.predicate_domains.assign(kg.num_predicates(), {-1, -1});
  for (const auto& p : paths) parse_domain_file(p, kg, meta);
  // a referenced domain with no member entities would zero out a predicate
  std::vector<std::size_t> members(meta.domain_names.size(), 0);
  for (std::int32_t d : meta.entity_domain)
    if (d >= 0) ++members[d];
  for (std::size_t r = 0; r < meta.predicate_domains.size(); ++r) {
    auto [sd, od] = meta.predicate_domains[r];
    for (std::int32_t d : {sd, od}) {
      if (d >= 0 && members[d] == 0)
        meta.warnings.push_back("predicate " + kg.vocab.predicate_names()[r] +
                                " references empty domain " + meta.domain_names[d]);
    }
  }
  return meta;
}

inline DomainMetadata load_domains(const std::string& path, const KnowledgeGraph& kg) {
  return load_domains(std::vector<std::string>{path}, kg);
}

}  // namespace gekc
