#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "kgpat/models.hpp"

using namespace kgpat;
namespace fs = std::filesystem;

namespace {

ModelParameters random_params(ModelFamily f, int dim, int32_t E, int32_t R, uint64_t seed) {
    return init_parameters(f, dim, E, R, seed, /*vocab_hash=*/0xabcdef);
}

void set_row(std::span<float> row, std::initializer_list<double> vals) {
    REQUIRE(row.size() == vals.size());
    size_t i = 0;
    for (double v : vals) row[i++] = static_cast<float>(v);
}

}  // namespace

TEST_CASE("TransE exact translation scores zero") {
    ModelParameters p = random_params(ModelFamily::TransE, 2, 3, 1, 1);
    set_row(p.entity_row(0), {1.0, 0.0});
    set_row(p.entity_row(1), {2.0, 1.0});
    set_row(p.relation_row(0), {1.0, 1.0});
    CHECK(score(p, 0, 0, 1) == 0.0);
    // and a mismatch scores the negated L1 distance
    set_row(p.entity_row(2), {0.0, 0.0});
    CHECK(score(p, 0, 0, 2) == -3.0);
}

TEST_CASE("DistMult is symmetric in head and tail") {
    ModelParameters p = random_params(ModelFamily::DistMult, 8, 5, 2, 2);
    for (EntityId h = 0; h < 5; ++h)
        for (EntityId t = 0; t < 5; ++t) CHECK(score(p, h, 0, t) == Catch::Approx(score(p, t, 0, h)).margin(1e-12).epsilon(0));
}

TEST_CASE("RotatE with all phases pi is symmetric") {
    ModelParameters p = random_params(ModelFamily::RotatE, 6, 4, 1, 3);
    RelVec pi_rel(static_cast<size_t>(p.dim), M_PI);  // exactly representable view
    for (EntityId h = 0; h < 4; ++h)
        for (EntityId t = 0; t < 4; ++t)
            CHECK(score_with(p, h, pi_rel, t) ==
                  Catch::Approx(score_with(p, t, pi_rel, h)).margin(1e-10).epsilon(0));
}

TEST_CASE("path with a single relation reduces to score for every family") {
    for (ModelFamily f : kAllFamilies) {
        ModelParameters p = random_params(f, 6, 4, 3, 11);
        for (RelationId r = 0; r < 3; ++r) {
            RelationId chain[1] = {r};
            CHECK(path_score(p, 1, chain, 2) == score(p, 1, r, 2));
            // single-hop inverse ids reduce identically
            RelationId inv_chain[1] = {p.space().inverse(r)};
            CHECK(path_score(p, 1, inv_chain, 2) == score(p, 1, p.space().inverse(r), 2));
        }
    }
}

TEST_CASE("TransE composition is exact when r = r1 + r2") {
    ModelParameters p = random_params(ModelFamily::TransE, 4, 3, 3, 7);
    // exactly representable halves so the sum is exact in float and double
    set_row(p.relation_row(0), {0.5, -0.25, 1.5, 0.75});
    set_row(p.relation_row(1), {0.25, 0.5, -0.5, 0.25});
    set_row(p.relation_row(2), {0.75, 0.25, 1.0, 1.0});  // r0 + r1
    RelationId chain[2] = {0, 1};
    for (EntityId h = 0; h < 3; ++h)
        for (EntityId t = 0; t < 3; ++t)
            CHECK(path_score(p, h, chain, t) == Catch::Approx(score(p, h, 2, t)).margin(1e-10).epsilon(0));
}

TEST_CASE("inverse constructions match the published table") {
    SECTION("TransE negation") {
        ModelParameters p = random_params(ModelFamily::TransE, 2, 2, 1, 5);
        set_row(p.relation_row(0), {1.0, -2.0});
        auto inv = inverse_relation(p, 0);
        CHECK(inv[0] == -1.0);
        CHECK(inv[1] == 2.0);
    }
    SECTION("DistMult reciprocal") {
        ModelParameters p = random_params(ModelFamily::DistMult, 2, 2, 1, 5);
        set_row(p.relation_row(0), {2.0, -0.5});
        auto inv = inverse_relation(p, 0);
        CHECK(inv[0] == 0.5);
        CHECK(inv[1] == -2.0);
    }
    SECTION("PairRE reciprocal of both halves") {
        ModelParameters p = random_params(ModelFamily::PairRE, 2, 2, 1, 5);
        set_row(p.relation_row(0), {2.0, 4.0, 0.5, 0.25});
        auto inv = inverse_relation(p, 0);
        CHECK(inv[0] == 0.5);
        CHECK(inv[1] == 0.25);
        CHECK(inv[2] == 2.0);
        CHECK(inv[3] == 4.0);
    }
    SECTION("zero components are singular") {
        ModelParameters p = random_params(ModelFamily::DistMult, 2, 2, 1, 5);
        set_row(p.relation_row(0), {0.0, 1.0});
        CHECK_THROWS_AS(inverse_relation(p, 0), NumericError);
    }
}

TEST_CASE("inverse is an involution for every family") {
    for (ModelFamily f : kAllFamilies) {
        ModelParameters p = random_params(f, 5, 2, 2, 17);
        for (RelationId r = 0; r < 2; ++r) {
            RelVec raw = raw_relvec(p, r);
            RelVec twice = invert_relvec(f, p.dim, invert_relvec(f, p.dim, raw));
            REQUIRE(twice.size() == raw.size());
            for (size_t i = 0; i < raw.size(); ++i)
                CHECK(twice[i] == Catch::Approx(raw[i]).margin(1e-10).epsilon(0));
        }
    }
}

TEST_CASE("distance families satisfy score(h,r,t) = score(t, r^-1, h)") {
    for (ModelFamily f : {ModelFamily::TransE, ModelFamily::RotatE}) {
        ModelParameters p = random_params(f, 6, 5, 2, 23);
        for (RelationId r = 0; r < 2; ++r) {
            RelationId rinv = p.space().inverse(r);
            for (EntityId h = 0; h < 5; ++h)
                for (EntityId t = 0; t < 5; ++t)
                    CHECK(score(p, h, r, t) == Catch::Approx(score(p, t, rinv, h)).margin(1e-10).epsilon(0));
        }
    }
    // PairRE under unit-magnitude relations
    ModelParameters p = random_params(ModelFamily::PairRE, 4, 4, 1, 29);
    set_row(p.relation_row(0), {1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0});
    RelationId rinv = p.space().inverse(0);
    for (EntityId h = 0; h < 4; ++h)
        for (EntityId t = 0; t < 4; ++t)
            CHECK(score(p, h, 0, t) == Catch::Approx(score(p, t, rinv, h)).margin(1e-10).epsilon(0));
}

TEST_CASE("r composed with its inverse cancels to the identity relation") {
    for (ModelFamily f : {ModelFamily::DistMult, ModelFamily::ComplEx, ModelFamily::DualE}) {
        ModelParameters p = random_params(f, 5, 4, 1, 31);
        RelationId chain[2] = {0, p.space().inverse(0)};
        RelVec id = identity_relvec(f, p.dim);
        // conjugation inverts a DualE relation exactly only when the stored
        // dual quaternion is exactly unit; float32 storage bounds that to
        // float precision
        double rel_tol = (f == ModelFamily::DualE) ? 1e-5 : 0.0;
        for (EntityId h = 0; h < 4; ++h)
            for (EntityId t = 0; t < 4; ++t) {
                double via_path = path_score(p, h, chain, t);
                double via_identity = score_with(p, h, id, t);
                CHECK(via_path ==
                      Catch::Approx(via_identity).margin(1e-10).epsilon(rel_tol));
            }
    }
}

TEST_CASE("score_all vectors agree with scalar probes") {
    std::mt19937_64 rng(41);
    for (ModelFamily f : kAllFamilies) {
        ModelParameters p = random_params(f, 5, 30, 3, 37);
        for (int probe = 0; probe < 100; ++probe) {
            EntityId h = static_cast<EntityId>(rng() % 30);
            EntityId t = static_cast<EntityId>(rng() % 30);
            RelationId r = static_cast<RelationId>(rng() % 3);
            auto tails = score_all_tails(p, h, r);
            REQUIRE(tails.size() == 30);
            CHECK(tails[static_cast<size_t>(t)] == score(p, h, r, t));  // same kernel, bit-equal
            auto heads = score_all_heads(p, r, t);
            REQUIRE(heads.size() == 30);
            CHECK(heads[static_cast<size_t>(h)] == Catch::Approx(score(p, h, r, t)).epsilon(1e-9));
        }
    }
}

TEST_CASE("a perfect TransE fit ranks the true tail first") {
    ModelParameters p = random_params(ModelFamily::TransE, 2, 4, 1, 43);
    set_row(p.entity_row(0), {0.0, 0.0});
    set_row(p.entity_row(1), {1.0, 1.0});
    set_row(p.entity_row(2), {5.0, -3.0});
    set_row(p.entity_row(3), {-2.0, 7.0});
    set_row(p.relation_row(0), {1.0, 1.0});
    auto scores = score_all_tails(p, 0, 0);
    CHECK(std::max_element(scores.begin(), scores.end()) - scores.begin() == 1);
}

TEST_CASE("checkpoint round trip is bit-identical") {
    auto path = (fs::temp_directory_path() / "kgpat_ckpt_test.bin").string();
    for (ModelFamily f : kAllFamilies) {
        ModelParameters p = random_params(f, 4, 7, 3, 47);
        save_checkpoint(p, path);
        auto q = load_checkpoint(path);
        CHECK(q.family == p.family);
        CHECK(q.dim == p.dim);
        CHECK(q.vocab_hash == p.vocab_hash);
        REQUIRE(q.entities.size() == p.entities.size());
        REQUIRE(q.relations.size() == p.relations.size());
        CHECK(std::memcmp(q.entities.data(), p.entities.data(), p.entities.size() * 4) == 0);
        CHECK(std::memcmp(q.relations.data(), p.relations.data(), p.relations.size() * 4) == 0);
        CHECK(q.hake_mix == p.hake_mix);
    }
}

TEST_CASE("checkpoint validation errors") {
    auto path = (fs::temp_directory_path() / "kgpat_ckpt_val.bin").string();
    ModelParameters p = random_params(ModelFamily::TransE, 4, 7, 3, 53);
    save_checkpoint(p, path);
    ModelFamily wrong = ModelFamily::RotatE;
    CHECK_THROWS_AS(load_checkpoint(path, nullptr, &wrong), DataError);
    uint64_t other_vocab = 0x1234;
    CHECK_THROWS_AS(load_checkpoint(path, &other_vocab, nullptr), DataError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), DataError);
    // corrupt header
    write_text_file(path, "not json\n");
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("DualE relations are unit dual quaternions after init") {
    ModelParameters p = random_params(ModelFamily::DualE, 3, 2, 2, 59);
    for (RelationId r = 0; r < 2; ++r) {
        auto row = p.relation_row(r);
        for (int k = 0; k < p.dim; ++k) {
            double c[4], d[4];
            for (int i = 0; i < 4; ++i) c[i] = row[static_cast<size_t>(8 * k + i)];
            for (int i = 0; i < 4; ++i) d[i] = row[static_cast<size_t>(8 * k + 4 + i)];
            CHECK(quat::dot(c, c) == Catch::Approx(1.0).margin(1e-6));
            CHECK(quat::dot(c, d) == Catch::Approx(0.0).margin(1e-6));
        }
    }
}

TEST_CASE("out-of-bounds ids are rejected") {
    ModelParameters p = random_params(ModelFamily::TransE, 2, 3, 2, 61);
    CHECK_THROWS_AS(score(p, 5, 0, 1), DataError);
    CHECK_THROWS_AS(score(p, 0, 9, 1), DataError);
}
