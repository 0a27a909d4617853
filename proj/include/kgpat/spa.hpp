#pragma once

#include <array>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/eval.hpp"
#include "kgpat/mining.hpp"
#include "kgpat/models.hpp"
#include "kgpat/patterns.hpp"
#include "kgpat/rules.hpp"

namespace kgpat {

// Per-pattern blend weights. Defaults per family reflect the published
// tuning on FB15k-237; compositional SPA uses length-2 chains only.
struct SpaConfig {
    double lambda_sym = 0.0;
    double lambda_inv = 0.0;
    double lambda_mul = 0.0;
    double lambda_comp2 = 0.0;
    ConfidenceAggregation aggregation = ConfidenceAggregation::MeanStdPca;

    double lambda_for(PatternType p) const {
        switch (p) {
            case PatternType::Symmetric: return lambda_sym;
            case PatternType::Inverse: return lambda_inv;
            case PatternType::Multiple: return lambda_mul;
            case PatternType::Compositional2: return lambda_comp2;
            default: return 0.0;  // compositional3 never rescored
        }
    }

    static SpaConfig defaults_for(ModelFamily f) {
        SpaConfig c;
        switch (f) {
            case ModelFamily::TransE: c.lambda_sym = -2; c.lambda_inv = -2; c.lambda_mul = -3; c.lambda_comp2 = 0.2; break;
            case ModelFamily::RotatE: c.lambda_sym = -4; c.lambda_inv = -1; c.lambda_mul = -4; c.lambda_comp2 = -0.01; break;
            case ModelFamily::HAKE: c.lambda_sym = -2; c.lambda_inv = -1; c.lambda_mul = -3; c.lambda_comp2 = 0.1; break;
            case ModelFamily::DistMult: c.lambda_sym = -2; c.lambda_inv = -2; c.lambda_mul = -4; c.lambda_comp2 = 1e-5; break;
            case ModelFamily::ComplEx: c.lambda_sym = -2; c.lambda_inv = -1; c.lambda_mul = -4; c.lambda_comp2 = -0.01; break;
            case ModelFamily::DualE: c.lambda_sym = -2; c.lambda_inv = -1; c.lambda_mul = -3; c.lambda_comp2 = -0.01; break;
            default: c.lambda_sym = -10; c.lambda_inv = -2; c.lambda_mul = -2; c.lambda_comp2 = 0.5; break;  // PairRE
        }
        return c;
    }
};

// One supporting rule prepared for rescoring a relation under a pattern.
struct SpaRule {
    PatternType pattern;
    double mean_confidence = 0.0;
    RelationId other = -1;                 // inverse/multiple body relation (real id)
    std::array<RelationId, 2> chain{-1, -1};  // compositional2 body, augmented ids
};

struct PatternRuleSet {
    std::vector<SpaRule> rules;
    double confidence_sum = 0.0;
};

// relation -> pattern -> supporting rules with confidences
using SpaRuleSets = std::unordered_map<RelationId, std::map<PatternType, PatternRuleSet>>;

// Prepares the rescoring rule sets from mined rules at the classification
// thresholds. compositional3 rules are dropped; symmetric/inverse bodies are
// normalized onto real relations.
inline SpaRuleSets build_spa_rulesets(const std::vector<ScoredRule>& rules, const RelationSpace& rs,
                                      const ClassifyConfig& cfg = {},
                                      ConfidenceAggregation aggregation = ConfidenceAggregation::MeanStdPca) {
    SpaRuleSets out;
    for (const ScoredRule& sr : rules) {
        if (sr.metrics.pca_confidence < cfg.min_pca || sr.metrics.head_coverage < cfg.min_hc) continue;
        if (sr.rule.body.size() == 1 && sr.rule.body.front() == sr.rule.head) continue;
        PatternType p = rule_pattern(sr.rule, rs);
        if (p == PatternType::Compositional3) continue;
        SpaRule rule;
        rule.pattern = p;
        rule.mean_confidence =
            aggregate_confidence(sr.metrics.std_confidence, sr.metrics.pca_confidence, aggregation);
        switch (p) {
            case PatternType::Symmetric:
                rule.other = sr.rule.head;
                break;
            case PatternType::Inverse:
            case PatternType::Multiple:
                rule.other = rs.base(sr.rule.body.front());
                break;
            default:
                rule.chain = {sr.rule.body[0], sr.rule.body[1]};
                break;
        }
        auto& set = out[sr.rule.head][p];
        set.rules.push_back(rule);
        set.confidence_sum += rule.mean_confidence;
    }
    for (auto& [r, pats] : out)
        for (auto& [p, set] : pats)
            if (!set.rules.empty() && !(set.confidence_sum > 0))
                throw NumericError(std::string("degenerate confidence sum for pattern ") +
                                   pattern_name(p) + " on relation " + std::to_string(r));
    return out;
}

// Pattern-specific score drawn from the rule body (the tail-query case):
// symmetric f(t,r,h); inverse f(t,r',h); multiple f(h,r',t); compositional2
// Path(h, r1 r2, t).
inline double spa_score(const ModelParameters& params, const SpaRule& rule, EntityId h, RelationId r,
                        EntityId t) {
    switch (rule.pattern) {
        case PatternType::Symmetric: return score(params, t, r, h);
        case PatternType::Inverse: return score(params, t, rule.other, h);
        case PatternType::Multiple: return score(params, h, rule.other, t);
        case PatternType::Compositional2: {
            std::array<RelationId, 2> chain = rule.chain;
            return path_score(params, h, std::span<const RelationId>(chain.data(), 2), t);
        }
        default: throw ConfigError("compositional3 rules are not rescored");
    }
}

struct SpaTerm {
    double mean_confidence;
    double pattern_score;
};

// s = s_kge + sum_p lambda_p * (sum_t MC_t (s_p,t - s_kge)) / (sum_t MC_t).
// Groups with lambda = 0 or no rules contribute nothing, so the base score
// passes through bit-exactly.
inline double spa_blend(double s_kge, const std::vector<std::pair<double, std::vector<SpaTerm>>>& groups) {
    double s = s_kge;
    for (const auto& [lambda, terms] : groups) {
        if (lambda == 0.0 || terms.empty()) continue;
        double num = 0, den = 0;
        for (const SpaTerm& t : terms) {
            num += t.mean_confidence * (t.pattern_score - s_kge);
            den += t.mean_confidence;
        }
        if (!(den > 0)) throw NumericError("degenerate confidence sum in SPA blend");
        s += lambda * (num / den);
    }
    return s;
}

// Training-free rescorer: wraps frozen parameters, never mutates them.
class SpaScorer : public Scorer {
  public:
    SpaScorer(const ModelParameters& params, const SpaRuleSets& rulesets, const SpaConfig& cfg)
        : p_(params), sets_(rulesets), cfg_(cfg) {}

    double combined(EntityId h, RelationId r, EntityId t) const {
        double base = score(p_, h, r, t);
        auto it = sets_.find(r);
        if (it == sets_.end()) return base;
        std::vector<std::pair<double, std::vector<SpaTerm>>> groups;
        for (const auto& [pattern, set] : it->second) {
            double lambda = cfg_.lambda_for(pattern);
            if (lambda == 0.0 || set.rules.empty()) continue;
            std::vector<SpaTerm> terms;
            terms.reserve(set.rules.size());
            for (const SpaRule& rule : set.rules)
                terms.push_back({rule.mean_confidence, spa_score(p_, rule, h, r, t)});
            groups.emplace_back(lambda, std::move(terms));
        }
        return spa_blend(base, groups);
    }

    std::vector<double> all_tails(EntityId h, RelationId r) const override {
        std::vector<double> base = score_all_tails(p_, h, r);
        auto it = sets_.find(r);
        if (it == sets_.end()) return base;
        blend_vectors(base, it->second, [&](const SpaRule& rule) { return tail_pattern_scores(rule, h, r); });
        return base;
    }

    std::vector<double> all_heads(RelationId r, EntityId t) const override {
        std::vector<double> base = score_all_heads(p_, r, t);
        auto it = sets_.find(r);
        if (it == sets_.end()) return base;
        blend_vectors(base, it->second, [&](const SpaRule& rule) { return head_pattern_scores(rule, r, t); });
        return base;
    }

  private:
    // Tail query (h, r, ?): candidates occupy the substituted score's
    // matching slot.
    std::vector<double> tail_pattern_scores(const SpaRule& rule, EntityId h, RelationId r) const {
        switch (rule.pattern) {
            case PatternType::Symmetric:  // f(t', r, h)
                return score_all_heads(p_, r, h);
            case PatternType::Inverse:  // f(t', r', h)
                return score_all_heads(p_, rule.other, h);
            case PatternType::Multiple:  // f(h, r', t')
                return score_all_tails(p_, h, rule.other);
            default: {  // Path(h, r1 r2, t')
                RelVec composed = compose_relvec(
                    p_.family, p_.dim, materialize_relation(p_, rule.chain[0]),
                    materialize_relation(p_, rule.chain[1]));
                return score_all_tails_with(p_, h, composed);
            }
        }
    }

    // Head query (?, r, t): the same substitutions with roles swapped.
    std::vector<double> head_pattern_scores(const SpaRule& rule, RelationId r, EntityId t) const {
        switch (rule.pattern) {
            case PatternType::Symmetric:  // f(t, r, h')
                return score_all_tails(p_, t, r);
            case PatternType::Inverse:  // f(t, r', h')
                return score_all_tails(p_, t, rule.other);
            case PatternType::Multiple:  // f(h', r', t)
                return score_all_heads(p_, rule.other, t);
            default: {  // Path(h', r1 r2, t)
                RelVec composed = compose_relvec(
                    p_.family, p_.dim, materialize_relation(p_, rule.chain[0]),
                    materialize_relation(p_, rule.chain[1]));
                return score_all_heads_with(p_, composed, t);
            }
        }
    }

    template <typename PatternScoreFn>
    void blend_vectors(std::vector<double>& base, const std::map<PatternType, PatternRuleSet>& sets,
                       PatternScoreFn&& pattern_scores) const {
        struct Group {
            double lambda;
            double confidence_sum;
            std::vector<std::pair<double, std::vector<double>>> rule_scores;  // (MC, vector)
        };
        std::vector<Group> groups;
        for (const auto& [pattern, set] : sets) {
            double lambda = cfg_.lambda_for(pattern);
            if (lambda == 0.0 || set.rules.empty()) continue;
            Group g{lambda, set.confidence_sum, {}};
            if (!(g.confidence_sum > 0)) throw NumericError("degenerate confidence sum in SPA blend");
            for (const SpaRule& rule : set.rules)
                g.rule_scores.emplace_back(rule.mean_confidence, pattern_scores(rule));
            groups.push_back(std::move(g));
        }
        if (groups.empty()) return;
        for (size_t i = 0; i < base.size(); ++i) {
            double s = base[i];
            for (const Group& g : groups) {
                double num = 0;
                for (const auto& [mc, vec] : g.rule_scores) num += mc * (vec[i] - base[i]);
                s += g.lambda * (num / g.confidence_sum);
            }
            base[i] = s;
        }
    }

    const ModelParameters& p_;
    const SpaRuleSets& sets_;
    SpaConfig cfg_;
};

}  // namespace kgpat
