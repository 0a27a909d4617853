#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/kg.hpp"
#include "kgpat/models.hpp"
#include "kgpat/patterns.hpp"
#include "json.hpp"

namespace kgpat {

// Read-only scorer over frozen parameters; implementations must be safe for
// concurrent calls.
class Scorer {
  public:
    virtual ~Scorer() = default;
    virtual std::vector<double> all_tails(EntityId h, RelationId r) const = 0;
    virtual std::vector<double> all_heads(RelationId r, EntityId t) const = 0;
};

class BaseScorer : public Scorer {
  public:
    explicit BaseScorer(const ModelParameters& p) : p_(p) {}
    std::vector<double> all_tails(EntityId h, RelationId r) const override {
        return score_all_tails(p_, h, r);
    }
    std::vector<double> all_heads(RelationId r, EntityId t) const override {
        return score_all_heads(p_, r, t);
    }

  private:
    const ModelParameters& p_;
};

// Filtered rank with averaged ties: 1 + #{strictly better} + #{ties}/2 over
// the candidates that survive the all-splits filter (the target is always
// retained).
inline double rank_from_scores(const std::vector<double>& scores, EntityId target,
                               const std::vector<int32_t>& known_completions) {
    double target_score = scores.at(static_cast<size_t>(target));
    int64_t greater = 0, ties = 0;
    for (EntityId e = 0; e < static_cast<EntityId>(scores.size()); ++e) {
        if (e == target) continue;
        if (std::binary_search(known_completions.begin(), known_completions.end(), e)) continue;
        double s = scores[static_cast<size_t>(e)];
        if (s > target_score) ++greater;
        else if (s == target_score) ++ties;
    }
    return 1.0 + static_cast<double>(greater) + static_cast<double>(ties) / 2.0;
}

struct Query {
    Triple triple;
    bool tail_direction;  // true: (h,r,?), false: (?,r,t)
};

inline double rank_query(const Scorer& scorer, const Query& q, const KnowledgeGraph& kg) {
    if (q.tail_direction) {
        auto scores = scorer.all_tails(q.triple.head, q.triple.relation);
        return rank_from_scores(scores, q.triple.tail, kg.known_tails(q.triple.head, q.triple.relation));
    }
    auto scores = scorer.all_heads(q.triple.relation, q.triple.tail);
    return rank_from_scores(scores, q.triple.head, kg.known_heads(q.triple.relation, q.triple.tail));
}

struct Metrics {
    double mrr = std::numeric_limits<double>::quiet_NaN();
    double hits1 = std::numeric_limits<double>::quiet_NaN();
    double hits3 = std::numeric_limits<double>::quiet_NaN();
    double hits10 = std::numeric_limits<double>::quiet_NaN();
    int64_t count = 0;

    bool defined() const { return count > 0; }
};

inline Metrics metrics_from_ranks(const std::vector<double>& ranks) {
    Metrics m;
    m.count = static_cast<int64_t>(ranks.size());
    if (ranks.empty()) return m;  // undefined metrics, flagged by count == 0
    double rr = 0, h1 = 0, h3 = 0, h10 = 0;
    for (double r : ranks) {
        rr += 1.0 / r;
        h1 += r <= 1.0 ? 1.0 : 0.0;
        h3 += r <= 3.0 ? 1.0 : 0.0;
        h10 += r <= 10.0 ? 1.0 : 0.0;
    }
    double n = static_cast<double>(ranks.size());
    m.mrr = rr / n;
    m.hits1 = h1 / n;
    m.hits3 = h3 / n;
    m.hits10 = h10 / n;
    return m;
}

struct EvalOptions {
    bool tail_queries = true;
    bool head_queries = true;
    const PatternAssignment* assignment = nullptr;  // enables per-pattern breakdowns
    std::vector<int64_t> bucket_thresholds;         // enables frequency buckets
    int threads = 0;
};

struct EvalCell {
    std::string pattern;  // "all" or pattern name
    std::string bucket;   // "all" or the threshold as text
    Metrics metrics;
};

struct EvalReport {
    Metrics overall;
    Metrics tail_direction;
    Metrics head_direction;
    std::map<std::string, Metrics> per_pattern;
    std::map<int64_t, Metrics> per_bucket;
    std::vector<EvalCell> cells;  // pattern x bucket cross table
    int64_t query_count = 0;
};

// Ranks every query once, then assembles overall / per-direction /
// per-pattern / per-bucket views from the shared rank array.
inline EvalReport evaluate(const Scorer& scorer, const std::vector<Triple>& triples,
                           const KnowledgeGraph& kg, const EvalOptions& opts = {}) {
    if (!opts.tail_queries && !opts.head_queries)
        throw ConfigError("at least one query direction must be enabled");
    std::vector<Query> queries;
    queries.reserve(triples.size() * 2);
    for (const Triple& t : triples) {
        if (opts.tail_queries) queries.push_back({t, true});
        if (opts.head_queries) queries.push_back({t, false});
    }
    std::vector<double> ranks(queries.size());
    parallel_for(static_cast<int64_t>(queries.size()), opts.threads, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i)
            ranks[static_cast<size_t>(i)] = rank_query(scorer, queries[static_cast<size_t>(i)], kg);
    });

    EvalReport report;
    report.query_count = static_cast<int64_t>(queries.size());
    auto collect = [&](auto&& keep) {
        std::vector<double> sel;
        for (size_t i = 0; i < queries.size(); ++i)
            if (keep(queries[i])) sel.push_back(ranks[i]);
        return metrics_from_ranks(sel);
    };
    report.overall = collect([](const Query&) { return true; });
    report.tail_direction = collect([](const Query& q) { return q.tail_direction; });
    report.head_direction = collect([](const Query& q) { return !q.tail_direction; });

    std::vector<std::pair<std::string, std::function<bool(const Query&)>>> pattern_preds;
    pattern_preds.emplace_back("all", [](const Query&) { return true; });
    if (opts.assignment) {
        for (PatternType p : kAllPatterns) {
            const PatternAssignment* a = opts.assignment;
            pattern_preds.emplace_back(pattern_name(p), [a, p](const Query& q) {
                return a->relation_has(q.triple.relation, p);
            });
        }
    }
    std::vector<std::pair<std::string, std::function<bool(const Query&)>>> bucket_preds;
    bucket_preds.emplace_back("all", [](const Query&) { return true; });
    for (int64_t th : opts.bucket_thresholds) {
        bucket_preds.emplace_back(std::to_string(th), [&kg, th](const Query& q) {
            return kg.entity_frequency(q.triple.head) + kg.entity_frequency(q.triple.tail) >= th;
        });
    }
    for (const auto& [pname, pkeep] : pattern_preds) {
        for (const auto& [bname, bkeep] : bucket_preds) {
            if (pname == "all" && bname == "all") continue;  // same as overall
            Metrics m = collect([&](const Query& q) { return pkeep(q) && bkeep(q); });
            report.cells.push_back({pname, bname, m});
            if (bname == "all" && pname != "all") report.per_pattern[pname] = m;
            if (pname == "all" && bname != "all") report.per_bucket[std::stoll(bname)] = m;
        }
    }
    return report;
}

inline EvalReport evaluate_per_pattern(const Scorer& scorer, const std::vector<Triple>& triples,
                                       const KnowledgeGraph& kg, const PatternAssignment& assignment,
                                       EvalOptions opts = {}) {
    opts.assignment = &assignment;
    return evaluate(scorer, triples, kg, opts);
}

// ---- report serialization ----

inline nlohmann::json metrics_json(const Metrics& m) {
    nlohmann::json j;
    j["count"] = m.count;
    if (m.defined()) {
        j["mrr"] = m.mrr;
        j["hits1"] = m.hits1;
        j["hits3"] = m.hits3;
        j["hits10"] = m.hits10;
    } else {
        j["undefined"] = true;
    }
    return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
    Metrics m;
    m.count = j.value("count", int64_t{0});
    if (m.count > 0) {
        m.mrr = j.at("mrr").get<double>();
        m.hits1 = j.at("hits1").get<double>();
        m.hits3 = j.at("hits3").get<double>();
        m.hits10 = j.at("hits10").get<double>();
    }
    return m;
}

inline nlohmann::json report_to_json(const EvalReport& r, const std::string& model_name,
                                     const std::string& spa_mode) {
    nlohmann::json j;
    j["model"] = model_name;
    j["spa_mode"] = spa_mode;
    j["query_count"] = r.query_count;
    j["overall"] = metrics_json(r.overall);
    j["tail_direction"] = metrics_json(r.tail_direction);
    j["head_direction"] = metrics_json(r.head_direction);
    j["per_pattern"] = nlohmann::json::object();
    for (const auto& [p, m] : r.per_pattern) j["per_pattern"][p] = metrics_json(m);
    j["per_bucket"] = nlohmann::json::object();
    for (const auto& [b, m] : r.per_bucket) j["per_bucket"][std::to_string(b)] = metrics_json(m);
    j["cells"] = nlohmann::json::array();
    for (const auto& c : r.cells) {
        nlohmann::json cj = metrics_json(c.metrics);
        cj["pattern"] = c.pattern;
        cj["bucket"] = c.bucket;
        j["cells"].push_back(cj);
    }
    return j;
}

// One row per (model, spa_mode, pattern, bucket, metric).
inline void append_report_csv_rows(std::string& out, const nlohmann::json& report) {
    std::string model = report.value("model", "unknown");
    std::string spa_mode = report.value("spa_mode", "base");
    auto emit = [&](const std::string& pattern, const std::string& bucket, const nlohmann::json& m) {
        if (m.value("undefined", false) || m.value("count", 0) == 0) return;
        for (const char* metric : {"mrr", "hits1", "hits3", "hits10"}) {
            out += model + ',' + spa_mode + ',' + pattern + ',' + bucket + ',' + metric + ',' +
                   fmt_double(m.at(metric).get<double>()) + '\n';
        }
        out += model + ',' + spa_mode + ',' + pattern + ',' + bucket + ",count," +
               std::to_string(m.at("count").get<int64_t>()) + '\n';
    };
    emit("all", "all", report.at("overall"));
    if (report.contains("cells"))
        for (const auto& c : report.at("cells"))
            emit(c.at("pattern").get<std::string>(), c.at("bucket").get<std::string>(), c);
}

inline std::string report_csv_header() { return "model,spa_mode,pattern,bucket,metric,value\n"; }

}  // namespace kgpat
