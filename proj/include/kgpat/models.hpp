#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/types.hpp"
#include "json.hpp"

namespace kgpat {

enum class ModelFamily : int8_t { TransE, RotatE, HAKE, DistMult, ComplEx, DualE, PairRE };

constexpr std::array<ModelFamily, 7> kAllFamilies = {
    ModelFamily::TransE,  ModelFamily::RotatE, ModelFamily::HAKE, ModelFamily::DistMult,
    ModelFamily::ComplEx, ModelFamily::DualE,  ModelFamily::PairRE};

inline const char* family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::TransE: return "TransE";
        case ModelFamily::RotatE: return "RotatE";
        case ModelFamily::HAKE: return "HAKE";
        case ModelFamily::DistMult: return "DistMult";
        case ModelFamily::ComplEx: return "ComplEx";
        case ModelFamily::DualE: return "DualE";
        default: return "PairRE";
    }
}

inline ModelFamily parse_family(std::string_view s) {
    std::string lower(s);
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (ModelFamily f : kAllFamilies) {
        std::string n = family_name(f);
        for (char& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (lower == n) return f;
    }
    throw ConfigError("unknown model family: " + std::string(s));
}

// Floats per entity row. RotatE/ComplEx entities are complex (re,im
// interleaved); HAKE entities are [modulus d | phase d]; DualE entities carry
// a dual quaternion (8 components) per dimension.
inline int entity_width(ModelFamily f, int dim) {
    switch (f) {
        case ModelFamily::TransE:
        case ModelFamily::DistMult:
        case ModelFamily::PairRE: return dim;
        case ModelFamily::RotatE:
        case ModelFamily::ComplEx:
        case ModelFamily::HAKE: return 2 * dim;
        default: return 8 * dim;  // DualE
    }
}

// Floats per relation row. RotatE relations are phases; HAKE relations are
// [modulus d | phase d]; PairRE relations are [r^H d | r^T d]; DualE
// relations are normalized dual quaternions.
inline int relation_width(ModelFamily f, int dim) {
    switch (f) {
        case ModelFamily::TransE:
        case ModelFamily::DistMult:
        case ModelFamily::RotatE: return dim;
        case ModelFamily::ComplEx:
        case ModelFamily::HAKE:
        case ModelFamily::PairRE: return 2 * dim;
        default: return 8 * dim;  // DualE
    }
}

inline constexpr double kTwoPi = 6.283185307179586476925286766559;
// Components below this magnitude make the reciprocal-style inverse
// constructions singular; they are clamped with their sign kept.
inline constexpr double kReciprocalClamp = 1e-12;

namespace quat {
// Quaternion (w, x, y, z) helpers for DualE.
inline void hamilton(const double* a, const double* b, double* out) {
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
}
inline void conjugate(const double* a, double* out) {
    out[0] = a[0];
    out[1] = -a[1];
    out[2] = -a[2];
    out[3] = -a[3];
}
inline double dot(const double* a, const double* b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
}
// Unit dual quaternion: |C| = 1 and C.D = 0. Normalizes (C,D) in place.
inline void normalize_dual(double* c, double* d) {
    double n = std::sqrt(dot(c, c));
    if (n < kReciprocalClamp) n = kReciprocalClamp;
    for (int i = 0; i < 4; ++i) c[i] /= n;
    double cd = dot(c, d);
    for (int i = 0; i < 4; ++i) d[i] = (d[i] - cd * c[i]) / n;
}
}  // namespace quat

class ModelParameters {
  public:
    ModelFamily family = ModelFamily::TransE;
    int32_t dim = 0;
    int32_t num_entities = 0;
    int32_t num_relations = 0;  // real relations only
    std::vector<float> entities;
    std::vector<float> relations;
    float hake_mix = 1.0f;  // learned phase-term weight, HAKE only
    uint64_t vocab_hash = 0;

    int ew() const { return entity_width(family, dim); }
    int rw() const { return relation_width(family, dim); }

    std::span<const float> entity_row(EntityId e) const {
        return {entities.data() + static_cast<size_t>(e) * static_cast<size_t>(ew()),
                static_cast<size_t>(ew())};
    }
    std::span<float> entity_row(EntityId e) {
        return {entities.data() + static_cast<size_t>(e) * static_cast<size_t>(ew()),
                static_cast<size_t>(ew())};
    }
    std::span<const float> relation_row(RelationId r) const {
        return {relations.data() + static_cast<size_t>(r) * static_cast<size_t>(rw()),
                static_cast<size_t>(rw())};
    }
    std::span<float> relation_row(RelationId r) {
        return {relations.data() + static_cast<size_t>(r) * static_cast<size_t>(rw()),
                static_cast<size_t>(rw())};
    }

    void check_entity(EntityId e) const {
        if (e < 0 || e >= num_entities) throw DataError("entity id out of bounds: " + std::to_string(e));
    }
    RelationSpace space() const { return RelationSpace(num_relations); }

    bool all_finite() const {
        for (float v : entities)
            if (!std::isfinite(v)) return false;
        for (float v : relations)
            if (!std::isfinite(v)) return false;
        return std::isfinite(hake_mix);
    }
};

// Uniform init in [-6/sqrt(d), 6/sqrt(d)] for real parts, phases uniform in
// [0, 2pi); DualE relations are projected to unit dual quaternions.
inline ModelParameters init_parameters(ModelFamily family, int dim, int32_t num_entities,
                                       int32_t num_relations, uint64_t seed, uint64_t vocab_hash = 0) {
    if (dim <= 0) throw ConfigError("embedding dimension must be positive");
    ModelParameters p;
    p.family = family;
    p.dim = dim;
    p.num_entities = num_entities;
    p.num_relations = num_relations;
    p.vocab_hash = vocab_hash;
    p.entities.resize(static_cast<size_t>(num_entities) * static_cast<size_t>(p.ew()));
    p.relations.resize(static_cast<size_t>(num_relations) * static_cast<size_t>(p.rw()));

    std::mt19937_64 rng(seed);
    double bound = 6.0 / std::sqrt(static_cast<double>(dim));
    auto unif = [&](double lo, double hi) {
        // fixed 53-bit mapping keeps streams portable
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    };

    auto fill_real = [&](std::span<float> row) {
        for (float& v : row) v = static_cast<float>(unif(-bound, bound));
    };
    auto fill_phase = [&](std::span<float> row) {
        for (float& v : row) v = static_cast<float>(unif(0.0, kTwoPi));
    };

    for (EntityId e = 0; e < num_entities; ++e) {
        auto row = p.entity_row(e);
        if (family == ModelFamily::HAKE) {
            fill_real(row.subspan(0, static_cast<size_t>(dim)));
            fill_phase(row.subspan(static_cast<size_t>(dim)));
        } else {
            fill_real(row);
        }
    }
    for (RelationId r = 0; r < num_relations; ++r) {
        auto row = p.relation_row(r);
        switch (family) {
            case ModelFamily::RotatE: fill_phase(row); break;
            case ModelFamily::HAKE:
                fill_real(row.subspan(0, static_cast<size_t>(dim)));
                fill_phase(row.subspan(static_cast<size_t>(dim)));
                break;
            case ModelFamily::DualE: {
                fill_real(row);
                for (int k = 0; k < dim; ++k) {
                    double c[4], d[4];
                    float* base = row.data() + 8 * k;
                    for (int i = 0; i < 4; ++i) c[i] = base[i];
                    for (int i = 0; i < 4; ++i) d[i] = base[4 + i];
                    quat::normalize_dual(c, d);
                    for (int i = 0; i < 4; ++i) base[i] = static_cast<float>(c[i]);
                    for (int i = 0; i < 4; ++i) base[4 + i] = static_cast<float>(d[i]);
                }
                break;
            }
            default: fill_real(row); break;
        }
    }
    return p;
}

// Materialized relation representation used by scoring: double precision,
// same layout as the stored relation row. Derived views (inverses, composed
// chains) exist only here, never as trainable parameters.
using RelVec = std::vector<double>;

inline RelVec raw_relvec(const ModelParameters& p, RelationId real_r) {
    auto row = p.relation_row(real_r);
    return RelVec(row.begin(), row.end());
}

inline double clamp_reciprocal(double v) {
    if (v == 0.0) throw NumericError("reciprocal inverse of a zero relation component");
    if (std::abs(v) < kReciprocalClamp) return v < 0 ? -kReciprocalClamp : kReciprocalClamp;
    return v;
}

// The per-family reverse-relation construction: negation for translations,
// complex conjugation for rotations, elementwise reciprocal for the diagonal
// families and PairRE, dual-quaternion conjugation for DualE. HAKE follows
// the published row literally: modulus part negated, phase part conjugated.
inline RelVec invert_relvec(ModelFamily family, int dim, const RelVec& r) {
    RelVec out(r.size());
    switch (family) {
        case ModelFamily::TransE:
            for (size_t i = 0; i < r.size(); ++i) out[i] = -r[i];
            break;
        case ModelFamily::RotatE:
            for (size_t i = 0; i < r.size(); ++i) out[i] = -r[i];  // conjugate of e^{i theta}
            break;
        case ModelFamily::HAKE:
            for (int i = 0; i < dim; ++i) out[static_cast<size_t>(i)] = -r[static_cast<size_t>(i)];
            for (int i = dim; i < 2 * dim; ++i) out[static_cast<size_t>(i)] = -r[static_cast<size_t>(i)];
            break;
        case ModelFamily::DistMult:
            for (size_t i = 0; i < r.size(); ++i) out[i] = 1.0 / clamp_reciprocal(r[i]);
            break;
        case ModelFamily::ComplEx:
            for (int i = 0; i < dim; ++i) {
                double re = r[static_cast<size_t>(2 * i)], im = r[static_cast<size_t>(2 * i + 1)];
                double n2 = re * re + im * im;
                if (n2 == 0.0) throw NumericError("reciprocal inverse of a zero complex component");
                if (n2 < kReciprocalClamp * kReciprocalClamp) n2 = kReciprocalClamp * kReciprocalClamp;
                out[static_cast<size_t>(2 * i)] = re / n2;
                out[static_cast<size_t>(2 * i + 1)] = -im / n2;
            }
            break;
        case ModelFamily::DualE:
            for (int k = 0; k < dim; ++k) {
                quat::conjugate(r.data() + 8 * k, out.data() + 8 * k);
                quat::conjugate(r.data() + 8 * k + 4, out.data() + 8 * k + 4);
            }
            break;
        case ModelFamily::PairRE:
            for (size_t i = 0; i < r.size(); ++i) out[i] = 1.0 / clamp_reciprocal(r[i]);
            break;
    }
    return out;
}

// Relation-level chain composition matching the path score column: sums for
// translations/phases, elementwise or Hamilton products elsewhere.
inline RelVec compose_relvec(ModelFamily family, int dim, const RelVec& a, const RelVec& b) {
    RelVec out(a.size());
    switch (family) {
        case ModelFamily::TransE:
        case ModelFamily::RotatE:
            for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
            break;
        case ModelFamily::HAKE:
            for (int i = 0; i < dim; ++i)
                out[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] * b[static_cast<size_t>(i)];
            for (int i = dim; i < 2 * dim; ++i)
                out[static_cast<size_t>(i)] = a[static_cast<size_t>(i)] + b[static_cast<size_t>(i)];
            break;
        case ModelFamily::DistMult:
            for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
            break;
        case ModelFamily::ComplEx:
            for (int i = 0; i < dim; ++i) {
                double are = a[static_cast<size_t>(2 * i)], aim = a[static_cast<size_t>(2 * i + 1)];
                double bre = b[static_cast<size_t>(2 * i)], bim = b[static_cast<size_t>(2 * i + 1)];
                out[static_cast<size_t>(2 * i)] = are * bre - aim * bim;
                out[static_cast<size_t>(2 * i + 1)] = are * bim + aim * bre;
            }
            break;
        case ModelFamily::DualE:
            for (int k = 0; k < dim; ++k) {
                const double* ac = a.data() + 8 * k;
                const double* ad = ac + 4;
                const double* bc = b.data() + 8 * k;
                const double* bd = bc + 4;
                double t1[4], t2[4];
                quat::hamilton(ac, bc, out.data() + 8 * k);
                quat::hamilton(ac, bd, t1);
                quat::hamilton(ad, bc, t2);
                for (int i = 0; i < 4; ++i) out[static_cast<size_t>(8 * k + 4 + i)] = t1[i] + t2[i];
            }
            break;
        case ModelFamily::PairRE:
            for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
            break;
    }
    return out;
}

inline RelVec identity_relvec(ModelFamily family, int dim) {
    RelVec out(static_cast<size_t>(relation_width(family, dim)), 0.0);
    switch (family) {
        case ModelFamily::DistMult:
        case ModelFamily::PairRE:
            std::fill(out.begin(), out.end(), 1.0);
            break;
        case ModelFamily::HAKE:
            std::fill(out.begin(), out.begin() + dim, 1.0);
            break;
        case ModelFamily::ComplEx:
            for (int i = 0; i < dim; ++i) out[static_cast<size_t>(2 * i)] = 1.0;
            break;
        case ModelFamily::DualE:
            for (int k = 0; k < dim; ++k) out[static_cast<size_t>(8 * k)] = 1.0;
            break;
        default: break;  // zeros for TransE/RotatE
    }
    return out;
}

// Resolves a possibly-inverse relation id into its materialized view.
inline RelVec materialize_relation(const ModelParameters& p, RelationId q) {
    RelationSpace rs = p.space();
    rs.check(q);
    RelVec raw = raw_relvec(p, rs.base(q));
    return rs.is_inverse(q) ? invert_relvec(p.family, p.dim, raw) : raw;
}

// Public reverse-relation view for a real relation.
inline RelVec inverse_relation(const ModelParameters& p, RelationId real_r) {
    if (real_r < 0 || real_r >= p.num_relations)
        throw DataError("inverse_relation expects a real relation id");
    return invert_relvec(p.family, p.dim, raw_relvec(p, real_r));
}

// ---- scoring kernels ----
// TailKernel fixes (h, r) and evaluates candidates in tail position;
// HeadKernel fixes (r, t). The scalar score() routes through TailKernel, so
// score_all_tails entries are bit-identical to scalar scores while
// score_all_heads agrees up to floating-point reassociation.

class TailKernel {
  public:
    TailKernel(const ModelParameters& p, EntityId h, const RelVec& r) : p_(p), r_(r) {
        p_.check_entity(h);
        auto hv = p_.entity_row(h);
        int d = p_.dim;
        switch (p_.family) {
            case ModelFamily::TransE:
                w_.resize(static_cast<size_t>(d));
                for (int i = 0; i < d; ++i) w_[static_cast<size_t>(i)] = hv[static_cast<size_t>(i)] + r[static_cast<size_t>(i)];
                break;
            case ModelFamily::DistMult:
                w_.resize(static_cast<size_t>(d));
                for (int i = 0; i < d; ++i) w_[static_cast<size_t>(i)] = hv[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
                break;
            case ModelFamily::RotatE:
                w_.resize(static_cast<size_t>(2 * d));
                for (int i = 0; i < d; ++i) {
                    double c = std::cos(r[static_cast<size_t>(i)]);
                    double s = std::sin(r[static_cast<size_t>(i)]);
                    double a = hv[static_cast<size_t>(2 * i)], b = hv[static_cast<size_t>(2 * i + 1)];
                    w_[static_cast<size_t>(2 * i)] = a * c - b * s;
                    w_[static_cast<size_t>(2 * i + 1)] = a * s + b * c;
                }
                break;
            case ModelFamily::ComplEx:
                w_.resize(static_cast<size_t>(2 * d));
                for (int i = 0; i < d; ++i) {
                    double a = hv[static_cast<size_t>(2 * i)], b = hv[static_cast<size_t>(2 * i + 1)];
                    double c = r[static_cast<size_t>(2 * i)], e = r[static_cast<size_t>(2 * i + 1)];
                    w_[static_cast<size_t>(2 * i)] = a * c - b * e;
                    w_[static_cast<size_t>(2 * i + 1)] = a * e + b * c;
                }
                break;
            case ModelFamily::HAKE:
                w_.resize(static_cast<size_t>(2 * d));
                for (int i = 0; i < d; ++i)
                    w_[static_cast<size_t>(i)] = hv[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
                for (int i = d; i < 2 * d; ++i)
                    w_[static_cast<size_t>(i)] = hv[static_cast<size_t>(i)] + r[static_cast<size_t>(i)];
                break;
            case ModelFamily::PairRE:
                w_.resize(static_cast<size_t>(d));
                for (int i = 0; i < d; ++i) w_[static_cast<size_t>(i)] = hv[static_cast<size_t>(i)] * r[static_cast<size_t>(i)];
                break;
            case ModelFamily::DualE:
                w_.resize(static_cast<size_t>(8 * d));
                for (int k = 0; k < d; ++k) {
                    double A[4], B[4], C[4], D[4], t1[4], t2[4];
                    for (int i = 0; i < 4; ++i) {
                        A[i] = hv[static_cast<size_t>(8 * k + i)];
                        B[i] = hv[static_cast<size_t>(8 * k + 4 + i)];
                        C[i] = r[static_cast<size_t>(8 * k + i)];
                        D[i] = r[static_cast<size_t>(8 * k + 4 + i)];
                    }
                    quat::hamilton(A, C, w_.data() + 8 * k);  // real part
                    quat::hamilton(A, D, t1);
                    quat::hamilton(B, C, t2);
                    for (int i = 0; i < 4; ++i) w_[static_cast<size_t>(8 * k + 4 + i)] = t1[i] + t2[i];
                }
                break;
        }
    }

    double eval(EntityId t) const {
        p_.check_entity(t);
        auto tv = p_.entity_row(t);
        int d = p_.dim;
        switch (p_.family) {
            case ModelFamily::TransE: {
                double s = 0;
                for (int i = 0; i < d; ++i) s += std::abs(w_[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)]);
                return -s;
            }
            case ModelFamily::DistMult: {
                double s = 0;
                for (int i = 0; i < d; ++i) s += w_[static_cast<size_t>(i)] * tv[static_cast<size_t>(i)];
                return s;
            }
            case ModelFamily::RotatE: {
                double s = 0;
                for (int i = 0; i < 2 * d; ++i) {
                    double u = w_[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)];
                    s += u * u;
                }
                return -std::sqrt(s);
            }
            case ModelFamily::ComplEx: {
                double s = 0;
                for (int i = 0; i < d; ++i)
                    s += w_[static_cast<size_t>(2 * i)] * tv[static_cast<size_t>(2 * i)] +
                         w_[static_cast<size_t>(2 * i + 1)] * tv[static_cast<size_t>(2 * i + 1)];
                return s;
            }
            case ModelFamily::HAKE: {
                double sm = 0, sp = 0;
                for (int i = 0; i < d; ++i) {
                    double u = w_[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)];
                    sm += u * u;
                }
                for (int i = d; i < 2 * d; ++i)
                    sp += std::abs(std::sin(0.5 * (w_[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)])));
                return -std::sqrt(sm) - static_cast<double>(p_.hake_mix) * sp;
            }
            case ModelFamily::PairRE: {
                double s = 0;
                for (int i = 0; i < d; ++i)
                    s += std::abs(w_[static_cast<size_t>(i)] -
                                  static_cast<double>(tv[static_cast<size_t>(i)]) * r_[static_cast<size_t>(d + i)]);
                return -s;
            }
            case ModelFamily::DualE: {
                double s = 0;
                for (int i = 0; i < 8 * d; ++i) s += w_[static_cast<size_t>(i)] * tv[static_cast<size_t>(i)];
                return s;
            }
        }
        return 0;
    }

  private:
    const ModelParameters& p_;
    RelVec r_;
    RelVec w_;
};

class HeadKernel {
  public:
    HeadKernel(const ModelParameters& p, const RelVec& r, EntityId t) : p_(p), r_(r) {
        p_.check_entity(t);
        auto tv = p_.entity_row(t);
        int d = p_.dim;
        switch (p_.family) {
            case ModelFamily::TransE:
                w_.resize(static_cast<size_t>(d));
                for (int i = 0; i < d; ++i)
                    w_[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)];
                break;
            case ModelFamily::DistMult:
                w_.resize(static_cast<size_t>(d));
                for (int i = 0; i < d; ++i)
                    w_[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] * tv[static_cast<size_t>(i)];
                break;
            case ModelFamily::RotatE:
                // |h o r - t| = |h - t o conj(r)|: rotate the tail instead
                w_.resize(static_cast<size_t>(2 * d));
                for (int i = 0; i < d; ++i) {
                    double c = std::cos(r[static_cast<size_t>(i)]);
                    double s = std::sin(r[static_cast<size_t>(i)]);
                    double e = tv[static_cast<size_t>(2 * i)], f = tv[static_cast<size_t>(2 * i + 1)];
                    w_[static_cast<size_t>(2 * i)] = e * c + f * s;
                    w_[static_cast<size_t>(2 * i + 1)] = -e * s + f * c;
                }
                break;
            case ModelFamily::ComplEx:
                // Re(h r conj(t)) = Re(h v) with v = r o conj(t)
                w_.resize(static_cast<size_t>(2 * d));
                for (int i = 0; i < d; ++i) {
                    double c = r[static_cast<size_t>(2 * i)], dd = r[static_cast<size_t>(2 * i + 1)];
                    double e = tv[static_cast<size_t>(2 * i)], f = tv[static_cast<size_t>(2 * i + 1)];
                    w_[static_cast<size_t>(2 * i)] = c * e + dd * f;
                    w_[static_cast<size_t>(2 * i + 1)] = dd * e - c * f;
                }
                break;
            case ModelFamily::HAKE:
                w_.resize(static_cast<size_t>(2 * d));
                for (int i = 0; i < d; ++i) w_[static_cast<size_t>(i)] = tv[static_cast<size_t>(i)];
                for (int i = d; i < 2 * d; ++i)
                    w_[static_cast<size_t>(i)] = r[static_cast<size_t>(i)] - tv[static_cast<size_t>(i)];
                break;
            case ModelFamily::PairRE:
                w_.resize(static_cast<size_t>(d));
                for (int i = 0; i < d; ++i)
                    w_[static_cast<size_t>(i)] =
                        static_cast<double>(tv[static_cast<size_t>(i)]) * r[static_cast<size_t>(d + i)];
                break;
            case ModelFamily::DualE:
                // <A x C, E> + <A x D + B x C, F> = <A, E x C~ + F x D~> + <B, F x C~>
                w_.resize(static_cast<size_t>(8 * d));
                for (int k = 0; k < d; ++k) {
                    double C[4], D[4], E[4], F[4], Cc[4], Dc[4], t1[4], t2[4];
                    for (int i = 0; i < 4; ++i) {
                        C[i] = r[static_cast<size_t>(8 * k + i)];
                        D[i] = r[static_cast<size_t>(8 * k + 4 + i)];
                        E[i] = tv[static_cast<size_t>(8 * k + i)];
                        F[i] = tv[static_cast<size_t>(8 * k + 4 + i)];
                    }
                    quat::conjugate(C, Cc);
                    quat::conjugate(D, Dc);
                    quat::hamilton(E, Cc, t1);
                    quat::hamilton(F, Dc, t2);
                    for (int i = 0; i < 4; ++i) w_[static_cast<size_t>(8 * k + i)] = t1[i] + t2[i];
                    quat::hamilton(F, Cc, t1);
                    for (int i = 0; i < 4; ++i) w_[static_cast<size_t>(8 * k + 4 + i)] = t1[i];
                }
                break;
        }
    }

    double eval(EntityId h) const {
        p_.check_entity(h);
        auto hv = p_.entity_row(h);
        int d = p_.dim;
        switch (p_.family) {
            case ModelFamily::TransE: {
                double s = 0;
                for (int i = 0; i < d; ++i)
                    s += std::abs(static_cast<double>(hv[static_cast<size_t>(i)]) + w_[static_cast<size_t>(i)]);
                return -s;
            }
            case ModelFamily::DistMult: {
                double s = 0;
                for (int i = 0; i < d; ++i) s += hv[static_cast<size_t>(i)] * w_[static_cast<size_t>(i)];
                return s;
            }
            case ModelFamily::RotatE: {
                double s = 0;
                for (int i = 0; i < 2 * d; ++i) {
                    double u = hv[static_cast<size_t>(i)] - w_[static_cast<size_t>(i)];
                    s += u * u;
                }
                return -std::sqrt(s);
            }
            case ModelFamily::ComplEx: {
                double s = 0;
                for (int i = 0; i < d; ++i)
                    s += hv[static_cast<size_t>(2 * i)] * w_[static_cast<size_t>(2 * i)] -
                         hv[static_cast<size_t>(2 * i + 1)] * w_[static_cast<size_t>(2 * i + 1)];
                return s;
            }
            case ModelFamily::HAKE: {
                double sm = 0, sp = 0;
                for (int i = 0; i < d; ++i) {
                    double u = static_cast<double>(hv[static_cast<size_t>(i)]) * r_[static_cast<size_t>(i)] -
                               w_[static_cast<size_t>(i)];
                    sm += u * u;
                }
                for (int i = d; i < 2 * d; ++i)
                    sp += std::abs(std::sin(0.5 * (static_cast<double>(hv[static_cast<size_t>(i)]) +
                                                   w_[static_cast<size_t>(i)])));
                return -std::sqrt(sm) - static_cast<double>(p_.hake_mix) * sp;
            }
            case ModelFamily::PairRE: {
                double s = 0;
                for (int i = 0; i < d; ++i)
                    s += std::abs(static_cast<double>(hv[static_cast<size_t>(i)]) * r_[static_cast<size_t>(i)] -
                                  w_[static_cast<size_t>(i)]);
                return -s;
            }
            case ModelFamily::DualE: {
                double s = 0;
                for (int i = 0; i < 8 * d; ++i) s += hv[static_cast<size_t>(i)] * w_[static_cast<size_t>(i)];
                return s;
            }
        }
        return 0;
    }

  private:
    const ModelParameters& p_;
    RelVec r_;
    RelVec w_;
};

inline double score_with(const ModelParameters& p, EntityId h, const RelVec& r, EntityId t) {
    return TailKernel(p, h, r).eval(t);
}

// Table score function; higher is more plausible. Accepts a formal-inverse id
// by materializing its reverse-relation view.
inline double score(const ModelParameters& p, EntityId h, RelationId r, EntityId t) {
    return score_with(p, h, materialize_relation(p, r), t);
}

// Composed chain score; for a single-hop chain this is exactly score().
inline double path_score(const ModelParameters& p, EntityId h, std::span<const RelationId> chain,
                         EntityId t) {
    if (chain.empty()) throw ConfigError("path_score requires at least one relation");
    RelVec r = materialize_relation(p, chain[0]);
    for (size_t i = 1; i < chain.size(); ++i)
        r = compose_relvec(p.family, p.dim, r, materialize_relation(p, chain[i]));
    return score_with(p, h, r, t);
}

inline std::vector<double> score_all_tails_with(const ModelParameters& p, EntityId h, const RelVec& r) {
    TailKernel k(p, h, r);
    std::vector<double> out(static_cast<size_t>(p.num_entities));
    for (EntityId t = 0; t < p.num_entities; ++t) out[static_cast<size_t>(t)] = k.eval(t);
    return out;
}
inline std::vector<double> score_all_heads_with(const ModelParameters& p, const RelVec& r, EntityId t) {
    HeadKernel k(p, r, t);
    std::vector<double> out(static_cast<size_t>(p.num_entities));
    for (EntityId h = 0; h < p.num_entities; ++h) out[static_cast<size_t>(h)] = k.eval(h);
    return out;
}
inline std::vector<double> score_all_tails(const ModelParameters& p, EntityId h, RelationId r) {
    return score_all_tails_with(p, h, materialize_relation(p, r));
}
inline std::vector<double> score_all_heads(const ModelParameters& p, RelationId r, EntityId t) {
    return score_all_heads_with(p, materialize_relation(p, r), t);
}

// ---- checkpoint format ----
// One JSON metadata line followed by the raw little-endian float32 arrays in
// header order (entities, relations[, hake_mix]).

namespace detail {
inline void write_f32_le(std::ostream& out, std::span<const float> data) {
    static_assert(sizeof(float) == 4);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * 4));
    } else {
        for (float f : data) {
            uint32_t u;
            std::memcpy(&u, &f, 4);
            char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8), static_cast<char>(u >> 16),
                         static_cast<char>(u >> 24)};
            out.write(b, 4);
        }
    }
}
inline void read_f32_le(std::istream& in, std::span<float> data) {
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 4));
    } else {
        for (float& f : data) {
            unsigned char b[4];
            in.read(reinterpret_cast<char*>(b), 4);
            uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
            std::memcpy(&f, &u, 4);
        }
    }
    if (!in) throw DataError("checkpoint truncated while reading float arrays");
}
}  // namespace detail

inline void save_checkpoint(const ModelParameters& p, const std::string& path,
                            const nlohmann::json& train_config = nlohmann::json::object()) {
    nlohmann::json header;
    header["magic"] = "kgpat-checkpoint";
    header["version"] = 1;
    header["family"] = family_name(p.family);
    header["dim"] = p.dim;
    header["entities"] = p.num_entities;
    header["relations"] = p.num_relations;
    header["vocab_hash"] = to_hex(p.vocab_hash);
    header["train_config"] = train_config;
    header["arrays"] = nlohmann::json::array(
        {nlohmann::json{{"name", "entities"}, {"count", p.entities.size()}},
         nlohmann::json{{"name", "relations"}, {"count", p.relations.size()}},
         nlohmann::json{{"name", "hake_mix"}, {"count", 1}}});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << header.dump() << '\n';
    detail::write_f32_le(out, p.entities);
    detail::write_f32_le(out, p.relations);
    detail::write_f32_le(out, std::span<const float>(&p.hake_mix, 1));
    if (!out) throw DataError("checkpoint write failed: " + path);
}

inline ModelParameters load_checkpoint(const std::string& path, const uint64_t* expected_vocab_hash = nullptr,
                                       const ModelFamily* expected_family = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw DataError("checkpoint missing header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const std::exception& e) {
        throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }
    if (header.value("magic", "") != "kgpat-checkpoint")
        throw DataError("not a kgpat checkpoint: " + path);
    if (header.value("version", 0) != 1) throw DataError("unsupported checkpoint version");

    ModelParameters p;
    p.family = parse_family(header.at("family").get<std::string>());
    p.dim = header.at("dim").get<int32_t>();
    p.num_entities = header.at("entities").get<int32_t>();
    p.num_relations = header.at("relations").get<int32_t>();
    p.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
    if (expected_family && p.family != *expected_family)
        throw DataError(std::string("checkpoint family mismatch: file has ") + family_name(p.family) +
                        ", expected " + family_name(*expected_family));
    if (expected_vocab_hash && p.vocab_hash != *expected_vocab_hash)
        throw DataError("checkpoint vocabulary hash does not match the loaded dataset");

    p.entities.resize(static_cast<size_t>(p.num_entities) * static_cast<size_t>(p.ew()));
    p.relations.resize(static_cast<size_t>(p.num_relations) * static_cast<size_t>(p.rw()));
    detail::read_f32_le(in, p.entities);
    detail::read_f32_le(in, p.relations);
    detail::read_f32_le(in, std::span<float>(&p.hake_mix, 1));
    return p;
}

}  // namespace kgpat
