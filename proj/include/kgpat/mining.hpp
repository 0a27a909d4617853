#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/kg.hpp"
#include "kgpat/rules.hpp"

namespace kgpat {

enum class ConfidenceAggregation { MeanStdPca, PcaOnly };

struct MiningConfig {
    int max_body_len = 3;
    double min_pca = 0.8;
    double min_hc = 0.5;
    int64_t min_support = -1;  // -1: 10 on benchmark-scale graphs, 1 on toy graphs
    ConfidenceAggregation aggregation = ConfidenceAggregation::MeanStdPca;
    int threads = 0;

    void validate() const {
        if (max_body_len < 1 || max_body_len > 3)
            throw ConfigError("max_body_len must be in {1,2,3}, got " + std::to_string(max_body_len));
        if (min_pca < 0 || min_pca > 1 || min_hc < 0 || min_hc > 1)
            throw ConfigError("confidence thresholds must lie in [0,1]");
    }

    int64_t effective_min_support(size_t train_size) const {
        if (min_support >= 0) return min_support;
        return train_size >= 10000 ? 10 : 1;
    }

    // Named presets from the standard five (PCA, HC) sweep points.
    static MiningConfig preset(const std::string& name) {
        MiningConfig c;
        std::string n = name;
        if (!n.empty() && (n.front() == 't' || n.front() == 'T')) {
            // accept "theta2" spelling
            n = n.substr(n.find_first_of("0123456789"));
        }
        if (n == "1") { c.min_pca = 0.9; c.min_hc = 0.5; }
        else if (n == "2") { c.min_pca = 0.8; c.min_hc = 0.5; }
        else if (n == "3") { c.min_pca = 0.6; c.min_hc = 0.3; }
        else if (n == "4") { c.min_pca = 0.4; c.min_hc = 0.1; }
        else if (n == "5") { c.min_pca = 0.2; c.min_hc = 0.1; }
        else throw ConfigError("unknown threshold preset: " + name + " (expected theta1..theta5)");
        return c;
    }
};

inline double aggregate_confidence(double std_conf, double pca_conf, ConfidenceAggregation mode) {
    return mode == ConfidenceAggregation::PcaOnly ? pca_conf : 0.5 * (std_conf + pca_conf);
}

// Train-split indexes over the inverse-augmented relation space. An edge
// (h, q, t) exists for every train triple (h, r, t) as q=r and for the
// reversed pair as q=r+R.
class MiningIndex {
  public:
    explicit MiningIndex(const KnowledgeGraph& kg) : kg_(kg), rs_(kg.relation_space()) {
        int32_t E = kg.num_entities();
        adj_.assign(static_cast<size_t>(E), {});
        q_tails_.assign(static_cast<size_t>(rs_.augmented_count()), {});
        q_heads_.assign(static_cast<size_t>(rs_.augmented_count()), {});
        for (const Triple& t : kg.train) {
            add_edge(t.head, t.relation, t.tail);
            add_edge(t.tail, rs_.inverse(t.relation), t.head);
        }
        for (auto& a : adj_) std::sort(a.begin(), a.end());
        for (auto& [k, v] : pair_labels_) std::sort(v.begin(), v.end());
        for (auto& m : q_tails_)
            for (auto& [h, tails] : m) std::sort(tails.begin(), tails.end());
        for (auto& h : q_heads_) {
            std::sort(h.begin(), h.end());
            h.erase(std::unique(h.begin(), h.end()), h.end());
        }
    }

    const RelationSpace& space() const { return rs_; }
    const KnowledgeGraph& kg() const { return kg_; }

    const std::vector<std::pair<RelationId, EntityId>>& out_edges(EntityId e) const {
        return adj_[static_cast<size_t>(e)];
    }

    const std::vector<RelationId>& labels_between(EntityId u, EntityId v) const {
        auto it = pair_labels_.find(KnowledgeGraph::pair_key(u, v));
        static const std::vector<RelationId> none;
        return it == pair_labels_.end() ? none : it->second;
    }

    const std::vector<EntityId>& tails(RelationId q, EntityId h) const {
        const auto& m = q_tails_[static_cast<size_t>(q)];
        auto it = m.find(h);
        static const std::vector<EntityId> none;
        return it == m.end() ? none : it->second;
    }

    // Distinct subjects with at least one q-edge, ascending.
    const std::vector<EntityId>& heads(RelationId q) const {
        return q_heads_[static_cast<size_t>(q)];
    }

    bool in_domain(RelationId r, EntityId h) const {
        const auto& hs = heads(r);
        return std::binary_search(hs.begin(), hs.end(), h);
    }

  private:
    void add_edge(EntityId u, RelationId q, EntityId v) {
        adj_[static_cast<size_t>(u)].emplace_back(q, v);
        pair_labels_[KnowledgeGraph::pair_key(u, v)].push_back(q);
        q_tails_[static_cast<size_t>(q)][u].push_back(v);
        q_heads_[static_cast<size_t>(q)].push_back(u);
    }

    const KnowledgeGraph& kg_;
    RelationSpace rs_;
    std::vector<std::vector<std::pair<RelationId, EntityId>>> adj_;
    std::unordered_map<uint64_t, std::vector<RelationId>> pair_labels_;
    std::vector<std::unordered_map<EntityId, std::vector<EntityId>>> q_tails_;
    std::vector<std::vector<EntityId>> q_heads_;
};

namespace detail {

// Distinct entities reachable from h along the body chain.
inline std::vector<EntityId> chain_targets(const MiningIndex& idx, EntityId h,
                                           const std::vector<RelationId>& body) {
    std::vector<EntityId> frontier{h};
    for (RelationId q : body) {
        std::vector<EntityId> next;
        for (EntityId u : frontier) {
            const auto& ts = idx.tails(q, u);
            next.insert(next.end(), ts.begin(), ts.end());
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        frontier = std::move(next);
        if (frontier.empty()) break;
    }
    return frontier;
}

inline int64_t intersection_size(const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
    int64_t n = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else { ++n; ++ia; ++ib; }
    }
    return n;
}

}  // namespace detail

struct RuleCounts {
    int64_t support = 0;
    int64_t body_pairs = 0;      // standard-confidence denominator
    int64_t pca_body_pairs = 0;  // body pairs whose head variable has a known head fact
    int64_t head_pairs = 0;      // |pairs_of(head)|
};

// Exact grounded counts for one chain rule. Support counts distinct (h,t)
// pairs; the PCA denominator keeps only pairs whose h carries at least one
// head-relation fact (functional direction).
inline RuleCounts rule_counts(const ChainRule& rule, const MiningIndex& idx) {
    const RelationSpace& rs = idx.space();
    if (rs.is_inverse(rule.head)) throw DataError("rule head must be a real relation");
    if (rule.body.empty() || rule.body.size() > 3) throw DataError("rule body length must be 1..3");
    for (RelationId q : rule.body) rs.check(q);

    RuleCounts c;
    c.head_pairs = static_cast<int64_t>(idx.kg().pairs_of(rule.head).size());
    for (EntityId h : idx.heads(rule.body.front())) {
        auto targets = detail::chain_targets(idx, h, rule.body);
        if (targets.empty()) continue;
        c.body_pairs += static_cast<int64_t>(targets.size());
        bool h_in_domain = idx.in_domain(rule.head, h);
        if (h_in_domain) {
            c.pca_body_pairs += static_cast<int64_t>(targets.size());
            c.support += detail::intersection_size(targets, idx.tails(rule.head, h));
        }
    }
    return c;
}

inline RuleMetrics metrics_from_counts(const RuleCounts& c, ConfidenceAggregation mode) {
    RuleMetrics m;
    m.support = c.support;
    if (c.head_pairs <= 0) throw DataError("head relation has no train pairs; head coverage undefined");
    m.head_coverage = static_cast<double>(c.support) / static_cast<double>(c.head_pairs);
    m.std_confidence =
        c.body_pairs > 0 ? static_cast<double>(c.support) / static_cast<double>(c.body_pairs) : 0.0;
    m.pca_confidence =
        c.pca_body_pairs > 0 ? static_cast<double>(c.support) / static_cast<double>(c.pca_body_pairs)
                             : 0.0;
    m.mean_confidence = aggregate_confidence(m.std_confidence, m.pca_confidence, mode);
    return m;
}

inline int64_t rule_support(const ChainRule& r, const MiningIndex& idx) { return rule_counts(r, idx).support; }
inline double head_coverage(const ChainRule& r, const MiningIndex& idx) {
    return metrics_from_counts(rule_counts(r, idx), ConfidenceAggregation::MeanStdPca).head_coverage;
}
inline double std_confidence(const ChainRule& r, const MiningIndex& idx) {
    return metrics_from_counts(rule_counts(r, idx), ConfidenceAggregation::MeanStdPca).std_confidence;
}
inline double pca_confidence(const ChainRule& r, const MiningIndex& idx) {
    return metrics_from_counts(rule_counts(r, idx), ConfidenceAggregation::MeanStdPca).pca_confidence;
}

// One-off variants; building the index dominates, so batch callers should
// construct a MiningIndex once.
inline int64_t rule_support(const ChainRule& r, const KnowledgeGraph& kg) {
    return rule_support(r, MiningIndex(kg));
}
inline double head_coverage(const ChainRule& r, const KnowledgeGraph& kg) {
    return head_coverage(r, MiningIndex(kg));
}
inline double std_confidence(const ChainRule& r, const KnowledgeGraph& kg) {
    return std_confidence(r, MiningIndex(kg));
}
inline double pca_confidence(const ChainRule& r, const KnowledgeGraph& kg) {
    return pca_confidence(r, MiningIndex(kg));
}

namespace detail {

// Fixed 20-bit slots; the length field disambiguates empty slots from
// relation id 0.
inline uint64_t pack_body(const std::vector<RelationId>& body) {
    uint64_t key = static_cast<uint64_t>(body.size()) << 60;
    for (size_t i = 0; i < body.size(); ++i)
        key |= static_cast<uint64_t>(body[i]) << (40 - 20 * i);
    return key;
}

inline std::vector<RelationId> unpack_body(uint64_t key) {
    size_t len = key >> 60;
    std::vector<RelationId> body(len);
    for (size_t i = 0; i < len; ++i)
        body[i] = static_cast<RelationId>((key >> (40 - 20 * i)) & ((1u << 20) - 1));
    return body;
}

// Support counts for every chain body of length <= max_len whose grounding
// connects at least one head pair, found by walking paths between the head
// relation's (h,t) pairs. Distinct-pair semantics: each body counted at most
// once per pair.
inline std::unordered_map<uint64_t, int64_t> sweep_supports(const MiningIndex& idx, RelationId head,
                                                            int max_len) {
    const RelationSpace& rs = idx.space();
    std::unordered_map<uint64_t, int64_t> support;
    std::vector<uint64_t> found;
    std::vector<RelationId> body1(1), body2(2), body3(3);
    auto compact = [&found]() {
        std::sort(found.begin(), found.end());
        found.erase(std::unique(found.begin(), found.end()), found.end());
    };
    constexpr size_t kCompactLimit = 1u << 22;  // bound memory on hub pairs
    for (const auto& [h, t] : idx.kg().pairs_of(head)) {
        found.clear();
        for (RelationId q : idx.labels_between(h, t)) {
            if (q == head) continue;  // tautological self rule
            body1[0] = q;
            found.push_back(pack_body(body1));
        }
        if (max_len >= 2) {
            for (const auto& [q1, x] : idx.out_edges(h)) {
                for (RelationId q2 : idx.labels_between(x, t)) {
                    body2[0] = q1;
                    body2[1] = q2;
                    found.push_back(pack_body(body2));
                }
            }
        }
        if (max_len >= 3) {
            // meet in the middle: one hop forward from h, one hop backward
            // from t, labels joining the two frontiers
            for (const auto& [q1, x1] : idx.out_edges(h)) {
                for (const auto& [q3r, x2] : idx.out_edges(t)) {
                    RelationId q3 = rs.inverse(q3r);
                    for (RelationId q2 : idx.labels_between(x1, x2)) {
                        body3[0] = q1;
                        body3[1] = q2;
                        body3[2] = q3;
                        found.push_back(pack_body(body3));
                    }
                    if (found.size() > kCompactLimit) compact();
                }
            }
        }
        compact();
        for (uint64_t k : found) ++support[k];
    }
    return support;
}

}  // namespace detail

// Mines every closed-path rule with a real head relation satisfying the
// thresholds, each emitted exactly once in canonical chain form. Output is
// sorted by (head relation, descending PCA, body) for reproducibility.
inline std::vector<ScoredRule> mine_rules(const KnowledgeGraph& kg, const MiningConfig& config) {
    config.validate();
    if (kg.train.empty()) throw DataError("cannot mine rules: train split is empty");
    if (kg.num_relations() >= (1 << 19))
        throw DataError("relation vocabulary too large for the miner");
    MiningIndex idx(kg);
    int64_t min_support = config.effective_min_support(kg.train.size());

    int32_t R = kg.num_relations();
    std::vector<std::vector<ScoredRule>> per_head(static_cast<size_t>(R));
    parallel_for(R, config.threads, [&](int64_t lo, int64_t hi) {
        for (int64_t r = lo; r < hi; ++r) {
            RelationId head = static_cast<RelationId>(r);
            int64_t head_pairs = static_cast<int64_t>(kg.pairs_of(head).size());
            if (head_pairs == 0) continue;
            auto supports = detail::sweep_supports(idx, head, config.max_body_len);
            std::vector<ScoredRule>& out = per_head[static_cast<size_t>(r)];
            for (const auto& [key, support] : supports) {
                if (support < min_support) continue;
                double hc = static_cast<double>(support) / static_cast<double>(head_pairs);
                if (hc < config.min_hc) continue;
                ChainRule rule{head, detail::unpack_body(key)};
                RuleCounts counts = rule_counts(rule, idx);
                RuleMetrics m = metrics_from_counts(counts, config.aggregation);
                // exact counts are authoritative for every threshold
                if (m.pca_confidence < config.min_pca) continue;
                if (m.head_coverage < config.min_hc || m.support < min_support) continue;
                out.push_back(ScoredRule{std::move(rule), m});
            }
            std::sort(out.begin(), out.end(), [](const ScoredRule& a, const ScoredRule& b) {
                if (a.metrics.pca_confidence != b.metrics.pca_confidence)
                    return a.metrics.pca_confidence > b.metrics.pca_confidence;
                return a.rule < b.rule;
            });
        }
    });

    std::vector<ScoredRule> merged;
    for (auto& v : per_head)
        for (auto& r : v) merged.push_back(std::move(r));
    return merged;
}

}  // namespace kgpat
