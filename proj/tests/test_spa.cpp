#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "kgpat/eval.hpp"
#include "kgpat/mining.hpp"
#include "kgpat/spa.hpp"
#include "kgpat/training.hpp"

using namespace kgpat;

namespace {

struct ToyFixture {
    KnowledgeGraph kg = KnowledgeGraph::load_dataset(KGPAT_TOY_DATA);
    std::vector<ScoredRule> rules;
    SpaRuleSets rulesets;
    ModelParameters params;

    explicit ToyFixture(ModelFamily family = ModelFamily::TransE, uint64_t seed = 123) {
        MiningConfig mcfg;
        mcfg.min_pca = 0.8;
        mcfg.min_hc = 0.5;
        mcfg.min_support = 1;
        rules = mine_rules(kg, mcfg);
        rulesets = build_spa_rulesets(rules, kg.relation_space());
        params = init_parameters(family, 8, kg.num_entities(), kg.num_relations(), seed,
                                 kg.vocab_hash());
    }

    RelationId rel(const char* name) const { return *kg.relations.find(name); }
};

}  // namespace

TEST_CASE("SPA scores follow the pattern substitution table") {
    ToyFixture fx;
    const auto& p = fx.params;
    RelationId spouse = fx.rel("spouse");
    RelationId child_of = fx.rel("child_of");
    RelationId parent_of = fx.rel("parent_of");
    RelationId capital_of = fx.rel("capital_of");
    RelationId city_in = fx.rel("city_in");

    SECTION("symmetric: f(t, r, h)") {
        SpaRule rule{PatternType::Symmetric, 1.0, spouse, {-1, -1}};
        CHECK(spa_score(p, rule, 0, spouse, 1) == score(p, 1, spouse, 0));
    }
    SECTION("inverse: f(t, r', h)") {
        SpaRule rule{PatternType::Inverse, 1.0, parent_of, {-1, -1}};
        CHECK(spa_score(p, rule, 7, child_of, 3) == score(p, 3, parent_of, 7));
    }
    SECTION("multiple: f(h, r', t)") {
        SpaRule rule{PatternType::Multiple, 1.0, city_in, {-1, -1}};
        CHECK(spa_score(p, rule, 9, capital_of, 13) == score(p, 9, city_in, 13));
    }
    SECTION("compositional2: Path(h, r1 r2, t)") {
        RelationId born_in = fx.rel("born_in");
        SpaRule rule{PatternType::Compositional2, 1.0, -1, {born_in, city_in}};
        RelationId chain[2] = {born_in, city_in};
        CHECK(spa_score(p, rule, 0, fx.rel("nationality"), 12) == path_score(p, 0, chain, 12));
    }
}

TEST_CASE("DistMult symmetric SPA score equals the base score identically") {
    ToyFixture fx(ModelFamily::DistMult, 321);
    RelationId spouse = fx.rel("spouse");
    SpaRule rule{PatternType::Symmetric, 1.0, spouse, {-1, -1}};
    for (EntityId h = 0; h < 8; ++h)
        for (EntityId t = 0; t < 8; ++t)
            CHECK(spa_score(fx.params, rule, h, spouse, t) ==
                  Catch::Approx(score(fx.params, h, spouse, t)).margin(1e-12));
}

TEST_CASE("TransE comp2 SPA score with an inverted first hop") {
    // r(H,T) <= r1^-1(H,X), r2(X,T): the path substitutes -r1 for the hop
    ToyFixture fx;
    auto& p = fx.params;
    RelationSpace rs = fx.kg.relation_space();
    RelationId r1 = fx.rel("born_in"), r2 = fx.rel("city_in");
    SpaRule rule{PatternType::Compositional2, 1.0, -1, {rs.inverse(r1), r2}};
    EntityId h = 2, t = 13;
    auto hv = p.entity_row(h);
    auto tv = p.entity_row(t);
    auto r1v = p.relation_row(r1);
    auto r2v = p.relation_row(r2);
    double expected = 0;
    for (int i = 0; i < p.dim; ++i)
        expected += std::abs(static_cast<double>(hv[i]) + (-static_cast<double>(r1v[i])) +
                             static_cast<double>(r2v[i]) - static_cast<double>(tv[i]));
    CHECK(spa_score(p, rule, h, 0, t) == Catch::Approx(-expected).margin(1e-9));
}

TEST_CASE("Eq. 2 blend: worked example is exact") {
    std::vector<std::pair<double, std::vector<SpaTerm>>> groups;
    groups.push_back({1.0, {{0.5, 2.0}, {1.0, 4.0}}});
    CHECK(spa_blend(1.0, groups) == 10.0 / 3.0);
}

TEST_CASE("Eq. 2 blend edge cases") {
    SECTION("lambda 0 passes the base score through bit-exactly") {
        std::vector<std::pair<double, std::vector<SpaTerm>>> groups;
        groups.push_back({0.0, {{0.5, 99.0}}});
        double base = 0.12345678901234567;
        CHECK(spa_blend(base, groups) == base);
    }
    SECTION("single rule with lambda 1 reproduces the pattern score") {
        std::vector<std::pair<double, std::vector<SpaTerm>>> groups;
        groups.push_back({1.0, {{0.73, 4.25}}});
        CHECK(spa_blend(-1.5, groups) == Catch::Approx(4.25).epsilon(1e-12));
    }
    SECTION("positive rescaling of confidences leaves the blend unchanged") {
        std::vector<std::pair<double, std::vector<SpaTerm>>> a, b;
        a.push_back({2.5, {{0.5, 2.0}, {0.25, -3.0}, {1.0, 0.5}}});
        b.push_back({2.5, {{1.0, 2.0}, {0.5, -3.0}, {2.0, 0.5}}});  // x2, exact in floats
        CHECK(spa_blend(0.7, a) == spa_blend(0.7, b));
    }
    SECTION("degenerate confidence sum is an error") {
        std::vector<std::pair<double, std::vector<SpaTerm>>> groups;
        groups.push_back({1.0, {{0.0, 2.0}}});
        CHECK_THROWS_AS(spa_blend(0.0, groups), NumericError);
    }
}

TEST_CASE("SPA with all lambdas zero reproduces the base ranking exactly") {
    ToyFixture fx;
    SpaConfig cfg;  // all lambdas zero
    SpaScorer spa(fx.params, fx.rulesets, cfg);
    BaseScorer base(fx.params);
    for (const Triple& t : fx.kg.test) {
        auto sv = spa.all_tails(t.head, t.relation);
        auto bv = base.all_tails(t.head, t.relation);
        CHECK(sv == bv);  // bit-exact scores, hence identical ranking
        CHECK(rank_query(spa, {t, false}, fx.kg) == rank_query(base, {t, false}, fx.kg));
    }
}

TEST_CASE("combined vectors match scalar combined scores") {
    ToyFixture fx(ModelFamily::RotatE, 777);
    SpaConfig cfg = SpaConfig::defaults_for(ModelFamily::RotatE);
    SpaScorer spa(fx.params, fx.rulesets, cfg);
    std::mt19937_64 rng(55);
    for (int probe = 0; probe < 100; ++probe) {
        EntityId h = static_cast<EntityId>(rng() % 14);
        EntityId t = static_cast<EntityId>(rng() % 14);
        RelationId r = static_cast<RelationId>(rng() % 9);
        auto tails = spa.all_tails(h, r);
        CHECK(tails[static_cast<size_t>(t)] ==
              Catch::Approx(spa.combined(h, r, t)).epsilon(1e-9).margin(1e-9));
        auto heads = spa.all_heads(r, t);
        CHECK(heads[static_cast<size_t>(h)] ==
              Catch::Approx(spa.combined(h, r, t)).epsilon(1e-9).margin(1e-9));
    }
}

TEST_CASE("relations without patterns score exactly as the base") {
    ToyFixture fx;
    SpaConfig cfg = SpaConfig::defaults_for(ModelFamily::TransE);
    SpaRuleSets empty;
    SpaScorer spa(fx.params, empty, cfg);
    for (RelationId r = 0; r < fx.kg.num_relations(); ++r) {
        auto sv = spa.all_tails(0, r);
        auto bv = score_all_tails(fx.params, 0, r);
        CHECK(sv == bv);
    }
}

TEST_CASE("RotatE symmetric SPA differs from base where the score is asymmetric") {
    ToyFixture fx(ModelFamily::RotatE, 901);
    SpaConfig cfg;
    cfg.lambda_sym = -4.0;
    SpaScorer spa(fx.params, fx.rulesets, cfg);
    RelationId spouse = fx.rel("spouse");
    REQUIRE(fx.rulesets.count(spouse));
    auto sv = spa.all_tails(0, spouse);
    auto bv = score_all_tails(fx.params, 0, spouse);
    bool any_diff = false;
    for (size_t i = 0; i < sv.size(); ++i)
        if (sv[i] != bv[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("SPA never mutates model parameters") {
    ToyFixture fx;
    auto entities_before = fx.params.entities;
    auto relations_before = fx.params.relations;
    SpaConfig cfg = SpaConfig::defaults_for(ModelFamily::TransE);
    SpaScorer spa(fx.params, fx.rulesets, cfg);
    EvalOptions opts;
    evaluate(spa, fx.kg.test, fx.kg, opts);
    CHECK(fx.params.entities == entities_before);
    CHECK(fx.params.relations == relations_before);
}

TEST_CASE("Table 8 per-family defaults") {
    auto t = SpaConfig::defaults_for(ModelFamily::TransE);
    CHECK(t.lambda_sym == -2.0);
    CHECK(t.lambda_inv == -2.0);
    CHECK(t.lambda_mul == -3.0);
    CHECK(t.lambda_comp2 == 0.2);
    auto pr = SpaConfig::defaults_for(ModelFamily::PairRE);
    CHECK(pr.lambda_sym == -10.0);
    CHECK(pr.lambda_comp2 == 0.5);
    auto dm = SpaConfig::defaults_for(ModelFamily::DistMult);
    CHECK(dm.lambda_comp2 == 1e-5);
}

TEST_CASE("ruleset construction normalizes bodies onto real relations") {
    ToyFixture fx;
    RelationId child_of = fx.rel("child_of");
    RelationId parent_of = fx.rel("parent_of");
    auto it = fx.rulesets.find(child_of);
    REQUIRE(it != fx.rulesets.end());
    REQUIRE(it->second.count(PatternType::Inverse));
    const auto& set = it->second.at(PatternType::Inverse);
    REQUIRE_FALSE(set.rules.empty());
    for (const auto& r : set.rules) {
        CHECK(r.other == parent_of);  // real id, not a formal inverse
        CHECK(r.mean_confidence > 0);
    }
    CHECK(set.confidence_sum > 0);
}
