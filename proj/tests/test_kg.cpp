#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "kgpat/kg.hpp"
#include "oracle.hpp"

using namespace kgpat;
namespace fs = std::filesystem;

namespace {
std::string write_temp(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p.string();
}
}  // namespace

TEST_CASE("load_tsv parses, extends vocab, and reports malformed lines") {
    auto path = write_temp("kgpat_kg1.tsv", "a\tr\tb\na\tr\tc\n");
    Vocab ents, rels;
    auto triples = load_tsv(path, ents, rels);
    REQUIRE(triples.size() == 2);
    CHECK(ents.size() == 3);
    CHECK(rels.size() == 1);
    CHECK(ents.label(0) == "a");  // first-appearance order
    CHECK(triples[0] == Triple{0, 0, 1});

    auto bad = write_temp("kgpat_kg2.tsv", "a\tr\tb\nno_tabs_here\n");
    Vocab e2, r2;
    try {
        load_tsv(bad, e2, r2);
        FAIL("expected parse error");
    } catch (const DataError& err) {
        CHECK(std::string(err.what()).find(":2:") != std::string::npos);  // line number
    }
}

TEST_CASE("load_tsv fixed vocabulary rejects unknown labels") {
    auto path = write_temp("kgpat_kg3.tsv", "a\tr\tb\n");
    Vocab ents, rels;
    load_tsv(path, ents, rels);
    auto extra = write_temp("kgpat_kg4.tsv", "a\tr\tzz\n");
    CHECK_THROWS_AS(load_tsv(extra, ents, rels, VocabMode::Fixed), DataError);
    // extend mode accepts it
    auto t = load_tsv(extra, ents, rels, VocabMode::Extend);
    CHECK(t.size() == 1);
    CHECK(ents.size() == 3);
}

TEST_CASE("empty file gives an empty split and leaves vocabularies unchanged") {
    auto path = write_temp("kgpat_kg5.tsv", "");
    Vocab ents, rels;
    ents.add_or_get("a");
    auto triples = load_tsv(path, ents, rels);
    CHECK(triples.empty());
    CHECK(ents.size() == 1);
    CHECK(rels.size() == 0);
}

TEST_CASE("duplicate triples are removed with a warning") {
    Vocab ents, rels;
    ents.add_or_get("a");
    ents.add_or_get("b");
    rels.add_or_get("r");
    DatasetOptions opts;
    opts.quiet = true;
    auto kg = KnowledgeGraph::from_splits(ents, rels, {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}}, {}, {}, opts);
    CHECK(kg.train.size() == 1);
}

TEST_CASE("grounding queries on a tiny graph") {
    // {(a,r,b),(a,r,c)}
    Vocab ents, rels;
    for (auto* n : {"a", "b", "c", "d"}) ents.add_or_get(n);
    rels.add_or_get("r");
    auto kg = KnowledgeGraph::from_splits(ents, rels, {{0, 0, 1}, {0, 0, 2}}, {}, {}, {});

    CHECK(kg.tails_of(0, 0) == std::vector<int32_t>{1, 2});
    CHECK(kg.heads_of(0, 3).empty());
    CHECK(kg.entity_frequency(0) == 2);
    CHECK(kg.contains(0, 0, 1));
    CHECK_FALSE(kg.contains(1, 0, 0));
    CHECK(kg.pairs_of(0).size() == 2);
    CHECK_THROWS_AS(kg.tails_of(99, 0), DataError);
    CHECK_THROWS_AS(kg.tails_of(0, 7), DataError);
}

TEST_CASE("filtered candidates keep the target and drop known completions") {
    Vocab ents, rels;
    for (auto* n : {"a", "b", "c"}) ents.add_or_get(n);
    rels.add_or_get("r");
    auto kg = KnowledgeGraph::from_splits(ents, rels, {{0, 0, 1}}, {}, {}, {});

    CHECK(kg.filtered_candidates_tail(0, 0, 2) == std::vector<EntityId>{0, 2});
    // the known completion is the target itself: kept
    CHECK(kg.filtered_candidates_tail(0, 0, 1) == std::vector<EntityId>{0, 1, 2});
    // removing the filter yields a superset
    auto filtered = kg.filtered_candidates_tail(0, 0, 2);
    for (EntityId e : filtered) CHECK(e >= 0);
    CHECK(filtered.size() <= 3);
}

TEST_CASE("index invariants on random graphs") {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 10; ++round) {
        auto triples = oracle::random_kg(rng, 12, 4, 60);
        int E = 12, R = 4;
        auto kg = oracle::kg_from_triples(triples, E, R);

        // sum over relations of |pairs| equals the train size
        size_t total = 0;
        for (RelationId r = 0; r < kg.num_relations(); ++r) total += kg.pairs_of(r).size();
        CHECK(total == kg.train.size());

        // contains  <=>  tail index  <=>  head index
        for (const Triple& t : kg.train) {
            CHECK(kg.contains(t.head, t.relation, t.tail));
            const auto& tails = kg.tails_of(t.head, t.relation);
            CHECK(std::binary_search(tails.begin(), tails.end(), t.tail));
            const auto& heads = kg.heads_of(t.relation, t.tail);
            CHECK(std::binary_search(heads.begin(), heads.end(), t.head));
        }

        // frequency = head occurrences + tail occurrences
        std::vector<int64_t> freq(static_cast<size_t>(E), 0);
        for (const Triple& t : kg.train) {
            ++freq[static_cast<size_t>(t.head)];
            ++freq[static_cast<size_t>(t.tail)];
        }
        for (EntityId e = 0; e < E; ++e) CHECK(kg.entity_frequency(e) == freq[static_cast<size_t>(e)]);

        // rebuilding from the triple list reproduces identical indexes
        auto kg2 = oracle::kg_from_triples(kg.train, E, R);
        for (const Triple& t : kg.train)
            CHECK(kg2.tails_of(t.head, t.relation) == kg.tails_of(t.head, t.relation));
    }
}

TEST_CASE("filtered candidates never contain another known completion") {
    std::mt19937_64 rng(11);
    auto triples = oracle::random_kg(rng, 10, 3, 50);
    // split into train/valid/test thirds
    std::vector<Triple> train, valid, test;
    for (size_t i = 0; i < triples.size(); ++i)
        (i % 3 == 0 ? train : i % 3 == 1 ? valid : test).push_back(triples[i]);
    Vocab ents, rels;
    for (int e = 0; e < 10; ++e) ents.add_or_get("e" + std::to_string(e));
    for (int r = 0; r < 3; ++r) rels.add_or_get("r" + std::to_string(r));
    auto kg = KnowledgeGraph::from_splits(ents, rels, train, valid, test, {});
    for (const Triple& t : kg.test) {
        auto cand = kg.filtered_candidates_tail(t.head, t.relation, t.tail);
        CHECK(std::find(cand.begin(), cand.end(), t.tail) != cand.end());
        for (EntityId e : cand) {
            if (e == t.tail) continue;
            CHECK_FALSE(kg.known_anywhere(t.head, t.relation, e));
        }
    }
}

TEST_CASE("toy dataset loads with the documented statistics") {
    auto kg = KnowledgeGraph::load_dataset(KGPAT_TOY_DATA);
    CHECK(kg.train.size() == 46);
    CHECK(kg.valid.size() == 4);
    CHECK(kg.test.size() == 6);
    CHECK(kg.num_entities() == 14);
    CHECK(kg.num_relations() == 9);
    CHECK(kg.vocab_hash() == KnowledgeGraph::load_dataset(KGPAT_TOY_DATA).vocab_hash());
}

TEST_CASE("vocabulary export is two-column TSV in id order") {
    auto kg = KnowledgeGraph::load_dataset(KGPAT_TOY_DATA);
    auto tsv = kg.export_vocab_tsv(kg.relations);
    auto first = tsv.substr(0, tsv.find('\n'));
    CHECK(first == kg.relations.label(0) + "\t0");
}
