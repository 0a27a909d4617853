#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/kg.hpp"
#include "kgpat/types.hpp"

namespace kgpat {

// Rule variables. A chain body over atoms (H,X1),(X1,X2),...,(Xn-1,T) uses
// them in this fixed order.
enum class Var : int8_t { H = 0, T = 1, X1 = 2, X2 = 3 };

inline const char* var_name(Var v) {
    switch (v) {
        case Var::H: return "H";
        case Var::T: return "T";
        case Var::X1: return "X1";
        default: return "X2";
    }
}

inline Var parse_var(std::string_view s) {
    if (s == "H") return Var::H;
    if (s == "T") return Var::T;
    if (s == "X1") return Var::X1;
    if (s == "X2") return Var::X2;
    throw DataError("unknown rule variable: " + std::string(s));
}

// One body atom as written, before chain canonicalization. The relation id
// may be real or a formal inverse.
struct Atom {
    RelationId relation;
    Var subject;
    Var object;

    friend bool operator==(const Atom&, const Atom&) = default;
};

// Canonical closed-path rule: head is a real relation over (H,T); the body is
// a forward chain H -> X1 -> ... -> T of augmented relation ids.
struct ChainRule {
    RelationId head;
    std::vector<RelationId> body;  // length 1..3, augmented ids

    friend bool operator==(const ChainRule&, const ChainRule&) = default;
    friend auto operator<=>(const ChainRule&, const ChainRule&) = default;
};

struct RuleMetrics {
    int64_t support = 0;
    double head_coverage = 0.0;
    double std_confidence = 0.0;
    double pca_confidence = 0.0;
    double mean_confidence = 0.0;
};

struct ScoredRule {
    ChainRule rule;
    RuleMetrics metrics;
};

inline Var chain_var(size_t pos, size_t body_len) {
    // position 0 is H, position body_len is T, intermediates X1, X2
    if (pos == 0) return Var::H;
    if (pos == body_len) return Var::T;
    return pos == 1 ? Var::X1 : Var::X2;
}

// Rewrites an arbitrary connected simple-path body into the forward chain,
// replacing every backward-traversed atom r(X,Y) by r^-1(Y,X). Groundings are
// preserved because the formal inverse holds exactly for the reversed pairs.
inline ChainRule canonicalize_to_chain(RelationId head, const std::vector<Atom>& body,
                                       const RelationSpace& rs) {
    if (body.empty() || body.size() > 3)
        throw DataError("rule body must have 1 to 3 atoms, got " + std::to_string(body.size()));
    for (const Atom& a : body) {
        rs.check(a.relation);
        if (a.subject == a.object) throw DataError("cyclic rule body: atom with repeated variable");
    }
    std::vector<bool> used(body.size(), false);
    std::vector<RelationId> chain;
    Var cur = Var::H;
    for (size_t step = 0; step < body.size(); ++step) {
        int found = -1;
        bool forward = false;
        for (size_t i = 0; i < body.size(); ++i) {
            if (used[i]) continue;
            if (body[i].subject == cur) {
                if (found >= 0) throw DataError("cyclic rule body: variable visited twice");
                found = static_cast<int>(i);
                forward = true;
            } else if (body[i].object == cur) {
                if (found >= 0) throw DataError("cyclic rule body: variable visited twice");
                found = static_cast<int>(i);
                forward = false;
            }
        }
        if (found < 0) throw DataError("disconnected rule body: no atom continues the walk");
        used[static_cast<size_t>(found)] = true;
        const Atom& a = body[static_cast<size_t>(found)];
        chain.push_back(forward ? a.relation : rs.inverse(a.relation));
        cur = forward ? a.object : a.subject;
    }
    if (cur != Var::T) throw DataError("rule body does not terminate at T");
    return ChainRule{head, std::move(chain)};
}

// ---- rule file format ----
// One rule per line:
//   head_rel <= atom1, atom2[, atom3]<TAB>support<TAB>hc<TAB>std<TAB>pca<TAB>mc
// Atoms are rel(VAR,VAR); inverse relations carry the ^-1 suffix.

inline std::string format_relation(RelationId q, const Vocab& relations, const RelationSpace& rs) {
    std::string name = relations.label(rs.base(q));
    if (rs.is_inverse(q)) name += "^-1";
    return name;
}

inline std::string format_rule(const ScoredRule& sr, const Vocab& relations, const RelationSpace& rs) {
    std::string out = relations.label(sr.rule.head);
    out += " <= ";
    size_t n = sr.rule.body.size();
    for (size_t i = 0; i < n; ++i) {
        if (i) out += ", ";
        out += format_relation(sr.rule.body[i], relations, rs);
        out += '(';
        out += var_name(chain_var(i, n));
        out += ',';
        out += var_name(chain_var(i + 1, n));
        out += ')';
    }
    out += '\t' + std::to_string(sr.metrics.support);
    out += '\t' + fmt_double(sr.metrics.head_coverage);
    out += '\t' + fmt_double(sr.metrics.std_confidence);
    out += '\t' + fmt_double(sr.metrics.pca_confidence);
    out += '\t' + fmt_double(sr.metrics.mean_confidence);
    return out;
}

inline std::string format_rule_file(const std::vector<ScoredRule>& rules, const Vocab& relations,
                                    const RelationSpace& rs) {
    std::string out;
    for (const auto& r : rules) {
        out += format_rule(r, relations, rs);
        out += '\n';
    }
    return out;
}

inline RelationId parse_relation_token(std::string_view tok, const Vocab& relations,
                                       const RelationSpace& rs) {
    bool inv = false;
    if (tok.size() > 3 && tok.substr(tok.size() - 3) == "^-1") {
        inv = true;
        tok.remove_suffix(3);
    }
    auto id = relations.find(std::string(tok));
    if (!id) throw DataError("unknown relation in rule file: " + std::string(tok));
    return inv ? rs.inverse(*id) : *id;
}

inline ScoredRule parse_rule_line(std::string_view line, const Vocab& relations,
                                  const RelationSpace& rs) {
    auto tabs = split_view(line, '\t');
    if (tabs.size() != 6) throw DataError("rule line needs 6 tab-separated fields");
    std::string_view rule_text = tabs[0];
    size_t arrow = rule_text.find(" <= ");
    if (arrow == std::string_view::npos) throw DataError("rule line missing '<=' separator");
    std::string_view head_tok = trim_view(rule_text.substr(0, arrow));
    auto head = relations.find(std::string(head_tok));
    if (!head) throw DataError("unknown head relation in rule file: " + std::string(head_tok));
    std::string_view body_text = rule_text.substr(arrow + 4);

    std::vector<Atom> atoms;
    size_t pos = 0;
    while (pos < body_text.size()) {
        size_t open = body_text.find('(', pos);
        size_t close = body_text.find(')', open == std::string_view::npos ? pos : open);
        if (open == std::string_view::npos || close == std::string_view::npos)
            throw DataError("malformed rule atom: " + std::string(body_text.substr(pos)));
        std::string_view rel_tok = trim_view(body_text.substr(pos, open - pos));
        auto vars = split_view(body_text.substr(open + 1, close - open - 1), ',');
        if (vars.size() != 2) throw DataError("rule atom needs two variables");
        Atom a;
        a.relation = parse_relation_token(rel_tok, relations, rs);
        a.subject = parse_var(trim_view(vars[0]));
        a.object = parse_var(trim_view(vars[1]));
        atoms.push_back(a);
        pos = close + 1;
        while (pos < body_text.size() && (body_text[pos] == ',' || body_text[pos] == ' ')) ++pos;
    }

    ScoredRule sr;
    sr.rule = canonicalize_to_chain(*head, atoms, rs);
    sr.metrics.support = std::stoll(std::string(tabs[1]));
    sr.metrics.head_coverage = std::stod(std::string(tabs[2]));
    sr.metrics.std_confidence = std::stod(std::string(tabs[3]));
    sr.metrics.pca_confidence = std::stod(std::string(tabs[4]));
    sr.metrics.mean_confidence = std::stod(std::string(tabs[5]));
    return sr;
}

inline std::vector<ScoredRule> parse_rule_file(const std::string& content, const Vocab& relations,
                                               const RelationSpace& rs) {
    std::vector<ScoredRule> out;
    int64_t line_no = 0;
    for (auto line : split_view(content, '\n')) {
        ++line_no;
        line = trim_view(line);
        if (line.empty() || line.front() == '#') continue;
        try {
            out.push_back(parse_rule_line(line, relations, rs));
        } catch (const DataError& e) {
            throw DataError("rule file line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace kgpat
