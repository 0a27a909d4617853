#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/types.hpp"

namespace kgpat {

struct Vocab {
    std::vector<std::string> labels;
    std::unordered_map<std::string, int32_t> index;

    int32_t size() const { return static_cast<int32_t>(labels.size()); }

    int32_t add_or_get(const std::string& label) {
        auto it = index.find(label);
        if (it != index.end()) return it->second;
        int32_t id = size();
        labels.push_back(label);
        index.emplace(label, id);
        return id;
    }

    std::optional<int32_t> find(const std::string& label) const {
        auto it = index.find(label);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }

    const std::string& label(int32_t id) const { return labels.at(static_cast<size_t>(id)); }
};

enum class VocabMode { Extend, Fixed };
enum class SplitKind { Train, Valid, Test };

inline const char* split_name(SplitKind s) {
    switch (s) {
        case SplitKind::Train: return "train";
        case SplitKind::Valid: return "valid";
        default: return "test";
    }
}

// Parses a tab-separated `head<TAB>relation<TAB>tail` file. In Fixed mode an
// unseen label is a vocabulary error; in Extend mode it is appended in
// first-appearance order. Triples come back in file order, not deduplicated.
inline std::vector<Triple> load_tsv(const std::string& path, Vocab& entities, Vocab& relations,
                                    VocabMode mode = VocabMode::Extend) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open triple file: " + path);
    std::vector<Triple> out;
    std::string line;
    int64_t line_no = 0;
    auto resolve = [&](Vocab& vocab, std::string_view label, const char* what) -> int32_t {
        std::string key(label);
        if (mode == VocabMode::Extend) return vocab.add_or_get(key);
        auto id = vocab.find(key);
        if (!id)
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown " + what + " '" +
                            key + "' with fixed vocabulary");
        return *id;
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view v = line;
        if (!v.empty() && v.back() == '\r') v.remove_suffix(1);
        if (v.empty()) continue;
        auto fields = split_view(v, '\t');
        if (fields.size() != 3)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, got " +
                            std::to_string(fields.size()));
        Triple t;
        t.head = resolve(entities, fields[0], "entity");
        t.relation = resolve(relations, fields[1], "relation");
        t.tail = resolve(entities, fields[2], "entity");
        out.push_back(t);
    }
    return out;
}

struct DatasetOptions {
    bool strict_vocab = false;       // valid/test must not introduce labels
    bool quiet = false;              // suppress duplicate warnings
    bool frequency_all_splits = false;  // entity frequency over all splits instead of train
};

class KnowledgeGraph {
  public:
    Vocab entities;
    Vocab relations;
    std::vector<Triple> train, valid, test;

    static uint64_t pair_key(int32_t a, int32_t b) {
        return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b);
    }

    RelationSpace relation_space() const { return RelationSpace(relations.size()); }

    static KnowledgeGraph from_splits(Vocab ents, Vocab rels, std::vector<Triple> train_t,
                                      std::vector<Triple> valid_t, std::vector<Triple> test_t,
                                      const DatasetOptions& opts = {}) {
        KnowledgeGraph kg;
        kg.entities = std::move(ents);
        kg.relations = std::move(rels);
        kg.train = dedup_split(std::move(train_t), "train", opts.quiet);
        kg.valid = dedup_split(std::move(valid_t), "valid", opts.quiet);
        kg.test = dedup_split(std::move(test_t), "test", opts.quiet);
        kg.frequency_all_splits_ = opts.frequency_all_splits;
        kg.build_indexes();
        return kg;
    }

    // Loads train.txt / valid.txt / test.txt from a dataset directory.
    static KnowledgeGraph load_dataset(const std::string& dir, const DatasetOptions& opts = {}) {
        Vocab ents, rels;
        auto train_t = load_tsv(dir + "/train.txt", ents, rels, VocabMode::Extend);
        VocabMode mode = opts.strict_vocab ? VocabMode::Fixed : VocabMode::Extend;
        auto valid_t = load_tsv(dir + "/valid.txt", ents, rels, mode);
        auto test_t = load_tsv(dir + "/test.txt", ents, rels, mode);
        return from_splits(std::move(ents), std::move(rels), std::move(train_t), std::move(valid_t),
                           std::move(test_t), opts);
    }

    const std::vector<Triple>& split(SplitKind s) const {
        switch (s) {
            case SplitKind::Train: return train;
            case SplitKind::Valid: return valid;
            default: return test;
        }
    }

    // ---- grounding queries (train split unless stated otherwise) ----

    static const std::vector<int32_t>& empty_ids() {
        static const std::vector<int32_t> e;
        return e;
    }

    const std::vector<int32_t>& tails_of(EntityId h, RelationId r, SplitKind s = SplitKind::Train) const {
        check_entity(h);
        check_relation(r);
        const auto& idx = tails_index(s);
        auto it = idx.find(pair_key(h, r));
        return it == idx.end() ? empty_ids() : it->second;
    }

    const std::vector<int32_t>& heads_of(RelationId r, EntityId t, SplitKind s = SplitKind::Train) const {
        check_entity(t);
        check_relation(r);
        const auto& idx = heads_index(s);
        auto it = idx.find(pair_key(r, t));
        return it == idx.end() ? empty_ids() : it->second;
    }

    const std::vector<std::pair<EntityId, EntityId>>& pairs_of(RelationId r) const {
        check_relation(r);
        return rel_pairs_[static_cast<size_t>(r)];
    }

    bool contains(EntityId h, RelationId r, EntityId t, SplitKind s = SplitKind::Train) const {
        const auto& tails = tails_of(h, r, s);
        return std::binary_search(tails.begin(), tails.end(), t);
    }

    bool known_anywhere(EntityId h, RelationId r, EntityId t) const {
        auto it = all_tails_.find(pair_key(h, r));
        if (it == all_tails_.end()) return false;
        return std::binary_search(it->second.begin(), it->second.end(), t);
    }

    int64_t entity_frequency(EntityId e) const {
        check_entity(e);
        return entity_freq_[static_cast<size_t>(e)];
    }

    // All known completions over train+valid+test; the basis of the filtered
    // ranking protocol.
    const std::vector<int32_t>& known_tails(EntityId h, RelationId r) const {
        auto it = all_tails_.find(pair_key(h, r));
        return it == all_tails_.end() ? empty_ids() : it->second;
    }
    const std::vector<int32_t>& known_heads(RelationId r, EntityId t) const {
        auto it = all_heads_.find(pair_key(r, t));
        return it == all_heads_.end() ? empty_ids() : it->second;
    }

    // Every entity except known completions of the query, with the target
    // always retained. Ascending id order.
    std::vector<EntityId> filtered_candidates_tail(EntityId h, RelationId r, EntityId target) const {
        check_entity(target);
        return filtered(known_tails(h, r), target);
    }
    std::vector<EntityId> filtered_candidates_head(RelationId r, EntityId t, EntityId target) const {
        check_entity(target);
        return filtered(known_heads(r, t), target);
    }

    int32_t num_entities() const { return entities.size(); }
    int32_t num_relations() const { return relations.size(); }

    uint64_t vocab_hash() const {
        uint64_t h = 14695981039346656037ull;
        for (const auto& l : entities.labels) {
            h = fnv1a64(l, h);
            h = fnv1a64("\x1f", h);
        }
        h = fnv1a64("\x1e", h);
        for (const auto& l : relations.labels) {
            h = fnv1a64(l, h);
            h = fnv1a64("\x1f", h);
        }
        return h;
    }

    std::string export_vocab_tsv(const Vocab& v) const {
        std::string out;
        for (int32_t i = 0; i < v.size(); ++i) {
            out += v.labels[static_cast<size_t>(i)];
            out += '\t';
            out += std::to_string(i);
            out += '\n';
        }
        return out;
    }

    void check_entity(EntityId e) const {
        if (e < 0 || e >= num_entities())
            throw DataError("entity id out of bounds: " + std::to_string(e));
    }
    void check_relation(RelationId r) const {
        if (r < 0 || r >= num_relations())
            throw DataError("relation id out of bounds: " + std::to_string(r));
    }

  private:
    using PairIndex = std::unordered_map<uint64_t, std::vector<int32_t>>;

    PairIndex train_tails_, train_heads_;
    PairIndex valid_tails_, valid_heads_;
    PairIndex test_tails_, test_heads_;
    PairIndex all_tails_, all_heads_;
    std::vector<std::vector<std::pair<EntityId, EntityId>>> rel_pairs_;
    std::vector<int64_t> entity_freq_;
    bool frequency_all_splits_ = false;

    const PairIndex& tails_index(SplitKind s) const {
        switch (s) {
            case SplitKind::Train: return train_tails_;
            case SplitKind::Valid: return valid_tails_;
            default: return test_tails_;
        }
    }
    const PairIndex& heads_index(SplitKind s) const {
        switch (s) {
            case SplitKind::Train: return train_heads_;
            case SplitKind::Valid: return valid_heads_;
            default: return test_heads_;
        }
    }

    static std::vector<Triple> dedup_split(std::vector<Triple> in, const char* name, bool quiet) {
        std::vector<Triple> sorted = in;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        if (sorted.size() == in.size()) return in;
        int64_t dropped = static_cast<int64_t>(in.size() - sorted.size());
        if (!quiet)
            std::cerr << "[kgpat] warning: " << dropped << " duplicate triple(s) removed from "
                      << name << " split\n";
        // keep first occurrences in file order
        std::vector<Triple> out;
        out.reserve(sorted.size());
        std::unordered_map<uint64_t, std::vector<int32_t>> seen;
        for (const Triple& t : in) {
            auto& tails = seen[pair_key(t.head, t.relation)];
            if (std::find(tails.begin(), tails.end(), t.tail) != tails.end()) continue;
            tails.push_back(t.tail);
            out.push_back(t);
        }
        return out;
    }

    static void sort_index(PairIndex& idx) {
        for (auto& [k, v] : idx) std::sort(v.begin(), v.end());
    }

    void index_split(const std::vector<Triple>& triples, PairIndex& tails, PairIndex& heads) {
        for (const Triple& t : triples) {
            tails[pair_key(t.head, t.relation)].push_back(t.tail);
            heads[pair_key(t.relation, t.tail)].push_back(t.head);
        }
        sort_index(tails);
        sort_index(heads);
    }

    void build_indexes() {
        index_split(train, train_tails_, train_heads_);
        index_split(valid, valid_tails_, valid_heads_);
        index_split(test, test_tails_, test_heads_);
        for (const auto* s : {&train, &valid, &test})
            for (const Triple& t : *s) {
                all_tails_[pair_key(t.head, t.relation)].push_back(t.tail);
                all_heads_[pair_key(t.relation, t.tail)].push_back(t.head);
            }
        for (auto& [k, v] : all_tails_) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
        for (auto& [k, v] : all_heads_) {
            std::sort(v.begin(), v.end());
            v.erase(std::unique(v.begin(), v.end()), v.end());
        }
        rel_pairs_.assign(static_cast<size_t>(num_relations()), {});
        for (const Triple& t : train)
            rel_pairs_[static_cast<size_t>(t.relation)].emplace_back(t.head, t.tail);
        for (auto& p : rel_pairs_) std::sort(p.begin(), p.end());
        entity_freq_.assign(static_cast<size_t>(num_entities()), 0);
        auto count = [&](const std::vector<Triple>& s) {
            for (const Triple& t : s) {
                ++entity_freq_[static_cast<size_t>(t.head)];
                ++entity_freq_[static_cast<size_t>(t.tail)];
            }
        };
        count(train);
        if (frequency_all_splits_) {
            count(valid);
            count(test);
        }
    }

    std::vector<EntityId> filtered(const std::vector<int32_t>& known, EntityId target) const {
        std::vector<EntityId> out;
        out.reserve(static_cast<size_t>(num_entities()));
        for (EntityId e = 0; e < num_entities(); ++e) {
            if (e != target && std::binary_search(known.begin(), known.end(), e)) continue;
            out.push_back(e);
        }
        return out;
    }
};

}  // namespace kgpat
