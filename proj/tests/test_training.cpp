#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "kgpat/eval.hpp"
#include "kgpat/training.hpp"

using namespace kgpat;

namespace {

KnowledgeGraph toy_kg() { return KnowledgeGraph::load_dataset(KGPAT_TOY_DATA); }

std::vector<Triple> sample_positives(const KnowledgeGraph& kg, size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Triple> out;
    for (size_t i = 0; i < n; ++i)
        out.push_back(kg.train[static_cast<size_t>(rng() % kg.train.size())]);
    return out;
}

}  // namespace

TEST_CASE("negative sampling contract") {
    auto kg = toy_kg();
    std::mt19937_64 rng(3);
    auto pos = sample_positives(kg, 4, 1);

    SECTION("k=0 is a config error") {
        CHECK_THROWS_AS(negative_sample(pos, kg, 0, rng), ConfigError);
    }
    SECTION("fixed seed reproduces the corruption sequence") {
        std::mt19937_64 a(7), b(7);
        auto na = negative_sample(pos, kg, 8, a);
        auto nb = negative_sample(pos, kg, 8, b);
        CHECK(na.triples == nb.triples);
        CHECK(na.replaced_head == nb.replaced_head);
    }
    SECTION("head/tail replacement is a fair coin within 2%") {
        std::mt19937_64 r(11);
        auto many = negative_sample(sample_positives(kg, 10000, 2), kg, 1, r);
        int64_t heads = 0;
        for (uint8_t h : many.replaced_head) heads += h;
        double frac = static_cast<double>(heads) / static_cast<double>(many.replaced_head.size());
        CHECK(frac > 0.48);
        CHECK(frac < 0.52);
    }
    SECTION("corruptions keep the uncorrupted side and flag known triples") {
        std::mt19937_64 r(13);
        auto negs = negative_sample(pos, kg, 6, r);
        REQUIRE(negs.triples.size() == pos.size() * 6);
        for (size_t i = 0; i < negs.triples.size(); ++i) {
            const Triple& n = negs.triples[i];
            const Triple& p = pos[i / 6];
            CHECK(n.relation == p.relation);
            if (negs.replaced_head[i]) CHECK(n.tail == p.tail);
            else CHECK(n.head == p.head);
            CHECK(negs.known[i] == (kg.contains(n.head, n.relation, n.tail) ? 1 : 0));
        }
    }
    SECTION("filtered mode avoids known corruptions when possible") {
        std::mt19937_64 r(17);
        auto negs = negative_sample(pos, kg, 16, r, /*filtered=*/true);
        for (uint8_t k : negs.known) CHECK(k == 0);
    }
    SECTION("bernoulli mode skews the corruption side by relation shape") {
        // nationality: 7 distinct heads, 2 distinct tails -> tph=1, hpt=3.5,
        // so heads are replaced with probability 1/4.5
        RelationId nationality = *kg.relations.find("nationality");
        std::vector<Triple> nat;
        for (const Triple& t : kg.train)
            if (t.relation == nationality) nat.push_back(t);
        std::vector<Triple> many;
        for (int i = 0; i < 700; ++i) many.push_back(nat[static_cast<size_t>(i) % nat.size()]);
        std::mt19937_64 r(19);
        auto negs = negative_sample(many, kg, 1, r, false, /*bernoulli=*/true);
        double heads = 0;
        for (uint8_t h : negs.replaced_head) heads += h;
        double frac = heads / static_cast<double>(negs.replaced_head.size());
        CHECK(frac > 0.12);
        CHECK(frac < 0.32);
    }
}

TEST_CASE("self-adversarial loss properties") {
    TrainConfig cfg;
    cfg.dim = 6;
    cfg.margin = 2.0;
    cfg.adv_temp = 1.0;
    auto kg = toy_kg();
    ModelParameters p =
        init_parameters(ModelFamily::TransE, cfg.dim, kg.num_entities(), kg.num_relations(), 5);

    SECTION("equal negative scores give uniform softmax weights") {
        // duplicate the same corruption so every negative scores identically
        std::vector<Triple> pos = {kg.train[0]};
        NegativeBatch negs;
        negs.per_positive = 4;
        for (int i = 0; i < 4; ++i) negs.triples.push_back(kg.train[1]);
        auto w = adversarial_weights(p, pos, negs, cfg);
        for (double v : w) CHECK(v == Catch::Approx(0.25).margin(1e-12));
    }
    SECTION("loss approaches zero for perfectly separated scores") {
        // gamma + s(pos) large positive, gamma + s(neg) large negative
        ModelParameters q = p;
        // positive (h,r,t) with exact translation (score 0), negative far away
        q.dim = 2;
        q.family = ModelFamily::TransE;
        q.num_entities = 3;
        q.num_relations = 1;
        q.entities = {0.f, 0.f, 50.f, 50.f, -300.f, -300.f};
        q.relations = {50.f, 50.f};
        std::vector<Triple> pos = {{0, 0, 1}};
        NegativeBatch negs;
        negs.per_positive = 1;
        negs.triples = {{0, 0, 2}};
        TrainConfig big = cfg;
        big.margin = 30.0;
        double loss = compute_loss(q, pos, negs, big);
        CHECK(loss < 1e-6);
        CHECK(loss >= 0.0);
    }
    SECTION("loss is invariant under permutation of the negative set") {
        auto pos = sample_positives(kg, 3, 21);
        std::mt19937_64 r(23);
        auto negs = negative_sample(pos, kg, 5, r);
        double base = compute_loss(p, pos, negs, cfg);
        NegativeBatch shuffled = negs;
        // reverse each positive's block
        for (size_t i = 0; i < pos.size(); ++i)
            std::reverse(shuffled.triples.begin() + static_cast<int64_t>(i) * 5,
                         shuffled.triples.begin() + static_cast<int64_t>(i + 1) * 5);
        CHECK(compute_loss(p, pos, shuffled, cfg) == Catch::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradients match central finite differences for all families") {
    // The objective holds the self-adversarial weights fixed, matching the
    // detached-softmax gradient. Perturbations use the float deltas actually
    // applied, so the comparison is immune to float32 rounding.
    auto kg = toy_kg();
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.margin = 1.5;
    cfg.adv_temp = 0.7;
    const double eps = std::pow(2.0, -14);
    const double tol = 1e-4;

    for (ModelFamily f : kAllFamilies) {
        CAPTURE(family_name(f));
        ModelParameters p =
            init_parameters(f, cfg.dim, kg.num_entities(), kg.num_relations(), 1009);
        auto pos = sample_positives(kg, 3, 31);
        std::mt19937_64 r(37);
        auto negs = negative_sample(pos, kg, 4, r);
        auto frozen = adversarial_weights(p, pos, negs, cfg);

        SparseGrad grad;
        double base_loss = compute_loss(p, pos, negs, cfg, &grad, &frozen);
        REQUIRE(std::isfinite(base_loss));

        auto check_component = [&](float* slot, double analytic) {
            float original = *slot;
            *slot = static_cast<float>(static_cast<double>(original) + eps);
            double up = static_cast<double>(*slot);
            double loss_up = compute_loss(p, pos, negs, cfg, nullptr, &frozen);
            *slot = static_cast<float>(static_cast<double>(original) - eps);
            double down = static_cast<double>(*slot);
            double loss_down = compute_loss(p, pos, negs, cfg, nullptr, &frozen);
            *slot = original;
            double fd = (loss_up - loss_down) / (up - down);
            double denom = std::max({std::abs(fd), std::abs(analytic), 1e-6});
            CAPTURE(analytic, fd);
            CHECK(std::abs(fd - analytic) / denom <= tol);
        };

        for (auto& [e, g] : grad.entity) {
            auto row = p.entity_row(e);
            for (size_t i = 0; i < g.size(); ++i) check_component(&row[i], g[i]);
        }
        for (auto& [rel, g] : grad.relation) {
            auto row = p.relation_row(rel);
            for (size_t i = 0; i < g.size(); ++i) check_component(&row[i], g[i]);
        }
        if (f == ModelFamily::HAKE) check_component(&p.hake_mix, grad.hake_mix);
    }
}

TEST_CASE("training determinism and basic contracts") {
    auto kg = toy_kg();
    TrainConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 5;
    cfg.batch_size = 16;
    cfg.negatives = 4;
    cfg.margin = 4.0;
    cfg.learning_rate = 0.05;
    cfg.valid_every = 2;
    cfg.seed = 77;

    SECTION("epochs=0 returns the initialization") {
        TrainConfig zero = cfg;
        zero.epochs = 0;
        auto result = train(kg, ModelFamily::TransE, zero);
        auto fresh = init_parameters(ModelFamily::TransE, cfg.dim, kg.num_entities(),
                                     kg.num_relations(), cfg.seed, kg.vocab_hash());
        CHECK(result.params.entities == fresh.entities);
        CHECK(result.params.relations == fresh.relations);
    }
    SECTION("same seed twice gives bit-identical checkpoints") {
        auto a = train(kg, ModelFamily::RotatE, cfg);
        auto b = train(kg, ModelFamily::RotatE, cfg);
        CHECK(a.params.entities == b.params.entities);
        CHECK(a.params.relations == b.params.relations);
    }
    SECTION("phases stay wrapped after updates") {
        auto result = train(kg, ModelFamily::RotatE, cfg);
        for (float v : result.params.relations) {
            CHECK(v >= 0.0f);
            CHECK(v < static_cast<float>(kTwoPi));
        }
    }
    SECTION("invalid configs are rejected") {
        TrainConfig bad = cfg;
        bad.negatives = 0;
        CHECK_THROWS_AS(train(kg, ModelFamily::TransE, bad), ConfigError);
        bad = cfg;
        bad.optimizer = "lbfgs";
        CHECK_THROWS_AS(train(kg, ModelFamily::TransE, bad), ConfigError);
    }
}

TEST_CASE("TransE fits the toy graph to high train MRR") {
    auto kg = toy_kg();
    TrainConfig cfg;
    cfg.dim = 32;
    cfg.epochs = 500;
    cfg.batch_size = 16;
    cfg.negatives = 8;
    cfg.margin = 4.0;
    cfg.learning_rate = 0.1;
    cfg.optimizer = "adam";
    cfg.learning_rate = 0.02;
    cfg.valid_every = 100;
    cfg.patience = 100;
    cfg.seed = 7;
    auto result = train(kg, ModelFamily::TransE, cfg);
    REQUIRE_FALSE(result.diverged);
    BaseScorer scorer(result.params);
    EvalOptions opts;
    auto report = evaluate(scorer, kg.train, kg, opts);
    CHECK(report.overall.mrr >= 0.9);
}
