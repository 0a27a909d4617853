#pragma once

#include <cstdint>
#include <string>

#include "kgpat/common.hpp"

namespace kgpat {

using EntityId = int32_t;
using RelationId = int32_t;

// Stored triples always carry a real relation id in [0, num_relations).
struct Triple {
    EntityId head;
    RelationId relation;
    EntityId tail;

    friend bool operator==(const Triple&, const Triple&) = default;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

// The relation id space is doubled: real relation k has the formal inverse
// k + R. Inverse ids appear only in rule bodies and path scoring, never in
// stored triples.
struct RelationSpace {
    RelationId num_real = 0;

    explicit RelationSpace(RelationId real_count = 0) : num_real(real_count) {}

    RelationId augmented_count() const { return num_real * 2; }

    bool is_inverse(RelationId q) const { return q >= num_real; }

    RelationId base(RelationId q) const { return is_inverse(q) ? q - num_real : q; }

    RelationId inverse(RelationId q) const {
        check(q);
        return is_inverse(q) ? q - num_real : q + num_real;
    }

    void check(RelationId q) const {
        if (q < 0 || q >= augmented_count())
            throw DataError("relation id out of augmented range: " + std::to_string(q));
    }
};

}  // namespace kgpat
