#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/kg.hpp"
#include "kgpat/rules.hpp"

namespace kgpat {

// Multiple merges subrelation and equivalent; antisymmetric is excluded
// (only positive patterns are observable from stored triples).
enum class PatternType : int8_t { Symmetric = 0, Inverse = 1, Multiple = 2, Compositional2 = 3, Compositional3 = 4 };

constexpr std::array<PatternType, 5> kAllPatterns = {
    PatternType::Symmetric, PatternType::Inverse, PatternType::Multiple,
    PatternType::Compositional2, PatternType::Compositional3};

inline const char* pattern_name(PatternType p) {
    switch (p) {
        case PatternType::Symmetric: return "symmetric";
        case PatternType::Inverse: return "inverse";
        case PatternType::Multiple: return "multiple";
        case PatternType::Compositional2: return "compositional2";
        default: return "compositional3";
    }
}

inline PatternType parse_pattern(std::string_view s) {
    for (PatternType p : kAllPatterns)
        if (s == pattern_name(p)) return p;
    throw DataError("unknown pattern name: " + std::string(s));
}

struct ClassifyConfig {
    double min_pca = 0.8;  // theta2 defaults, matching the evaluation setting
    double min_hc = 0.5;
};

struct PatternAssignment {
    // relation -> pattern -> supporting rules; std::map keeps exports ordered
    std::map<RelationId, std::map<PatternType, std::vector<ScoredRule>>> by_relation;

    bool relation_has(RelationId r, PatternType p) const {
        auto it = by_relation.find(r);
        return it != by_relation.end() && it->second.count(p) > 0;
    }

    std::vector<RelationId> relations_of(PatternType p) const {
        std::vector<RelationId> out;
        for (const auto& [r, pats] : by_relation)
            if (pats.count(p)) out.push_back(r);
        return out;
    }
};

// Determines the pattern a canonical chain rule supports for its head
// relation. Length-1 bodies split into symmetric / inverse / multiple on the
// real relation after normalizing the formal inverse away; longer chains are
// compositional regardless of inverses inside the chain.
inline PatternType rule_pattern(const ChainRule& rule, const RelationSpace& rs) {
    if (rule.body.size() == 2) return PatternType::Compositional2;
    if (rule.body.size() == 3) return PatternType::Compositional3;
    RelationId q = rule.body.front();
    if (rs.is_inverse(q))
        return rs.base(q) == rule.head ? PatternType::Symmetric : PatternType::Inverse;
    if (q == rule.head) throw DataError("tautological self rule cannot be classified");
    return PatternType::Multiple;
}

inline PatternAssignment classify_relations(const std::vector<ScoredRule>& rules,
                                            const RelationSpace& rs,
                                            const ClassifyConfig& cfg = {}) {
    PatternAssignment out;
    for (const ScoredRule& sr : rules) {
        if (sr.metrics.pca_confidence < cfg.min_pca || sr.metrics.head_coverage < cfg.min_hc)
            continue;
        if (sr.rule.body.size() == 1 && sr.rule.body.front() == sr.rule.head) continue;
        PatternType p = rule_pattern(sr.rule, rs);
        out.by_relation[sr.rule.head][p].push_back(sr);
    }
    return out;
}

// Type((h,r,t)) = Type(r): a triple lands in every pattern set its relation
// belongs to.
inline std::map<PatternType, std::vector<Triple>> classify_triples(
    const std::vector<Triple>& triples, const PatternAssignment& assignment) {
    std::map<PatternType, std::vector<Triple>> out;
    for (const Triple& t : triples) {
        auto it = assignment.by_relation.find(t.relation);
        if (it == assignment.by_relation.end()) continue;
        for (const auto& [p, rules] : it->second) out[p].push_back(t);
    }
    return out;
}

struct PatternMatrix {
    // entry[i][j] = |R_Pi n R_Pj| / |R_Pi|; NaN when R_Pi is empty
    std::array<std::array<double, 5>, 5> entry{};
    std::array<int64_t, 5> set_size{};

    bool row_defined(size_t i) const { return set_size[i] > 0; }
};

inline PatternMatrix pattern_matrix(const PatternAssignment& assignment) {
    PatternMatrix m;
    std::array<std::set<RelationId>, 5> sets;
    for (const auto& [r, pats] : assignment.by_relation)
        for (const auto& [p, rules] : pats) sets[static_cast<size_t>(p)].insert(r);
    for (size_t i = 0; i < 5; ++i) m.set_size[i] = static_cast<int64_t>(sets[i].size());
    for (size_t i = 0; i < 5; ++i) {
        for (size_t j = 0; j < 5; ++j) {
            if (sets[i].empty()) {
                m.entry[i][j] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            int64_t inter = 0;
            for (RelationId r : sets[i]) inter += sets[j].count(r) ? 1 : 0;
            m.entry[i][j] = static_cast<double>(inter) / static_cast<double>(m.set_size[i]);
        }
    }
    return m;
}

// Cumulative constraint buckets: bucket k holds the triples with
// frequency(h) + frequency(t) >= thresholds[k].
inline std::vector<std::vector<Triple>> frequency_buckets(const std::vector<Triple>& triples,
                                                          const KnowledgeGraph& kg,
                                                          const std::vector<int64_t>& thresholds) {
    if (thresholds.empty()) throw ConfigError("frequency bucket thresholds must be non-empty");
    for (size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] <= thresholds[i - 1])
            throw ConfigError("frequency bucket thresholds must be strictly ascending");
    std::vector<std::vector<Triple>> buckets(thresholds.size());
    for (const Triple& t : triples) {
        int64_t f = kg.entity_frequency(t.head) + kg.entity_frequency(t.tail);
        for (size_t k = 0; k < thresholds.size(); ++k)
            if (f >= thresholds[k]) buckets[k].push_back(t);
    }
    return buckets;
}

// ---- exports ----

inline std::string export_assignment_tsv(const PatternAssignment& a, const Vocab& relations) {
    std::string out = "relation\tpattern\tsupporting_rule_count\n";
    for (const auto& [r, pats] : a.by_relation)
        for (const auto& [p, rules] : pats) {
            out += relations.label(r);
            out += '\t';
            out += pattern_name(p);
            out += '\t';
            out += std::to_string(rules.size());
            out += '\n';
        }
    return out;
}

inline std::string export_pattern_matrix_csv(const PatternMatrix& m) {
    std::string out = "pattern";
    for (PatternType p : kAllPatterns) out += std::string(",") + pattern_name(p);
    out += '\n';
    for (size_t i = 0; i < 5; ++i) {
        out += pattern_name(kAllPatterns[i]);
        for (size_t j = 0; j < 5; ++j) {
            out += ',';
            out += std::isnan(m.entry[i][j]) ? "nan" : fmt_double(m.entry[i][j]);
        }
        out += '\n';
    }
    return out;
}

inline std::string export_bucket_csv(
    const std::map<std::string, std::vector<std::pair<int64_t, int64_t>>>& per_pattern_counts) {
    std::string out = "pattern,threshold,triple_count\n";
    for (const auto& [pattern, counts] : per_pattern_counts)
        for (const auto& [threshold, n] : counts) {
            out += pattern;
            out += ',';
            out += std::to_string(threshold);
            out += ',';
            out += std::to_string(n);
            out += '\n';
        }
    return out;
}

}  // namespace kgpat
