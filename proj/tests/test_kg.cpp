#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gekc/kg.hpp"

using namespace gekc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gekc_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& content) const {
    fs::path p = path / name;
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p.string();
  }
};

}  // namespace

TEST_CASE("load_triples builds a dense vocabulary in first-occurrence order") {
  TempDir tmp;
  auto path = tmp.file("train.tsv", "a\tr\tb\nb\tr\ta\n");
  Vocabulary vocab;
  auto triples = load_triples(path, vocab);
  REQUIRE(triples.size() == 2);
  REQUIRE(vocab.num_entities() == 2);
  REQUIRE(vocab.num_predicates() == 1);
  REQUIRE(vocab.entity_id("a") == 0);
  REQUIRE(vocab.entity_id("b") == 1);
  REQUIRE(triples[0] == Triple{0, 0, 1});
  REQUIRE(triples[1] == Triple{1, 0, 0});
}

TEST_CASE("empty file yields no triples and empty vocab") {
  TempDir tmp;
  auto path = tmp.file("empty.tsv", "");
  Vocabulary vocab;
  auto triples = load_triples(path, vocab);
  REQUIRE(triples.empty());
  REQUIRE(vocab.num_entities() == 0);
  REQUIRE(vocab.num_predicates() == 0);
}

TEST_CASE("malformed line reports its line number") {
  TempDir tmp;
  auto path = tmp.file("bad.tsv", "a\tr\tb\noops_no_tabs\n");
  Vocabulary vocab;
  try {
    load_triples(path, vocab);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("frozen vocabulary rejects unseen names unless allowed") {
  TempDir tmp;
  auto train = tmp.file("train.tsv", "a\tr\tb\n");
  auto test = tmp.file("test.tsv", "a\tr\tzebra\n");
  Vocabulary vocab;
  load_triples(train, vocab);
  REQUIRE_THROWS_AS(load_triples(test, vocab, {.frozen_vocab = true}), DataError);
  auto t = load_triples(test, vocab, {.frozen_vocab = true, .allow_unseen = true});
  REQUIRE(t.size() == 1);
  REQUIRE(vocab.num_entities() == 3);
}

TEST_CASE("filter index covers all splits in both directions") {
  std::vector<Triple> train{{0, 0, 1}};
  std::vector<Triple> valid{};
  std::vector<Triple> test{{0, 0, 2}};
  FilterIndex idx = build_filter_index(train, valid, test);
  REQUIRE(idx.sr_to_objects.at(pair_key(0, 0)) == std::unordered_set<std::int32_t>{1, 2});
  for (const auto& t : {Triple{0, 0, 1}, Triple{0, 0, 2}}) {
    REQUIRE(idx.known_object(t.subject, t.predicate, t.object));
    REQUIRE(idx.known_subject(t.subject, t.predicate, t.object));
  }
}

TEST_CASE("disjoint predicates give per-key singletons") {
  std::vector<Triple> train{{0, 0, 1}, {1, 1, 0}};
  FilterIndex idx = build_filter_index(train, {}, {});
  REQUIRE(idx.sr_to_objects.at(pair_key(0, 0)).size() == 1);
  REQUIRE(idx.sr_to_objects.at(pair_key(1, 1)).size() == 1);
}

TEST_CASE("duplicates are removed with a count and loading is deterministic") {
  TempDir tmp;
  auto train = tmp.file("train.tsv", "a\tr\tb\na\tr\tb\nb\tr\ta\n");
  KnowledgeGraph kg1 = load_kg(train);
  REQUIRE(kg1.train.size() == 2);
  REQUIRE(kg1.duplicates_removed[0] == 1);
  KnowledgeGraph kg2 = load_kg(train);
  REQUIRE(kg1.vocab.entity_names() == kg2.vocab.entity_names());
  REQUIRE(kg1.train == kg2.train);
}

TEST_CASE("round trip preserves the triple multiset") {
  TempDir tmp;
  auto train = tmp.file("train.tsv", "a\tr\tb\nb\tr\ta\nc\ts\ta\n");
  KnowledgeGraph kg = load_kg(train);
  auto out = (tmp.path / "out.tsv").string();
  save_triples(out, kg.train, kg.vocab);
  KnowledgeGraph kg2 = load_kg(out);
  REQUIRE(kg.train == kg2.train);
  REQUIRE(kg.vocab.entity_names() == kg2.vocab.entity_names());
  REQUIRE(kg.vocab.predicate_names() == kg2.vocab.predicate_names());
}

TEST_CASE("reciprocal augmentation doubles predicates and triples") {
  TempDir tmp;
  auto train = tmp.file("train.tsv", "a\tr\tb\n");
  KnowledgeGraph kg = load_kg(train, "", "", {.reciprocal = true});
  REQUIRE(kg.vocab.num_predicates() == 2);
  REQUIRE(kg.train.size() == 2);
  REQUIRE(kg.train[1] == Triple{1, 1, 0});
  REQUIRE(kg.reciprocal);
}

TEST_CASE("domain metadata resolves kappa sets") {
  TempDir tmp;
  auto train = tmp.file("train.tsv",
                        "d1\tinteracts\tp1\n"
                        "d2\tinteracts\tp1\n");
  KnowledgeGraph kg = load_kg(train);
  auto dom = tmp.file("domains.tsv",
                      "d1\tdrug\n"
                      "d2\tdrug\n"
                      "p1\tprotein\n"
                      "interacts\tdrug\tprotein\n");
  DomainMetadata meta = load_domains(dom, kg);
  std::int32_t r = kg.vocab.predicate_id("interacts");
  REQUIRE(meta.has_predicate_domains(r));
  REQUIRE(meta.kappa_subjects(r).size() == 2);
  REQUIRE(meta.kappa_objects(r).size() == 1);
  REQUIRE(meta.warnings.empty());
}

TEST_CASE("single shared domain makes kappa equal to all entities") {
  TempDir tmp;
  auto train = tmp.file("train.tsv", "a\tr\tb\nb\tr\tc\n");
  KnowledgeGraph kg = load_kg(train);
  std::string lines;
  for (const auto& e : kg.vocab.entity_names()) lines += e + "\tthing\n";
  lines += "r\tthing\tthing\n";
  auto dom = tmp.file("domains.tsv", lines);
  DomainMetadata meta = load_domains(dom, kg);
  REQUIRE(meta.kappa_subjects(0).size() == kg.num_entities());
  REQUIRE(meta.kappa_objects(0).size() == kg.num_entities());
}

TEST_CASE("unknown names in domain files are errors; empty domains warn") {
  TempDir tmp;
  auto train = tmp.file("train.tsv", "a\tr\tb\n");
  KnowledgeGraph kg = load_kg(train);
  auto bad = tmp.file("bad.tsv", "nosuch\tdrug\n");
  REQUIRE_THROWS_AS(load_domains(bad, kg), DataError);
  auto empty_dom = tmp.file("empty_dom.tsv",
                            "a\tdrug\n"
                            "b\tdrug\n"
                            "r\tdrug\tprotein\n");
  DomainMetadata meta = load_domains(empty_dom, kg);
  REQUIRE(meta.warnings.size() == 1);
}

// Full-scale datasets are not bundled; when FB15k-237 is provided via the
// GEKC_FB15K237_DIR environment variable the published split sizes are
// checked, otherwise this is skipped.
TEST_CASE("fb15k-237 split statistics when the dataset is available") {
  const char* dir = std::getenv("GEKC_FB15K237_DIR");
  if (!dir || !*dir) {
    SUCCEED("dataset not provided; skipping");
    return;
  }
  std::string base(dir);
  KnowledgeGraph kg = load_kg(base + "/train.txt", base + "/valid.txt",
                              base + "/test.txt");
  REQUIRE(kg.train.size() == 272115);
  REQUIRE(kg.num_entities() == 14541);
  REQUIRE(kg.num_predicates() == 237);
  REQUIRE(kg.filter.total_triples() == 310116);
}

TEST_CASE("comment lines in triple files are skipped") {
  TempDir tmp;
  auto path = tmp.file("s.tsv", "# model abc method ancestral seed 1 n 2\na\tr\tb\nb\tr\ta\n");
  Vocabulary vocab;
  auto triples = load_triples(path, vocab);
  REQUIRE(triples.size() == 2);
}
