#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgpat/common.hpp"
#include "kgpat/eval.hpp"
#include "kgpat/kg.hpp"
#include "kgpat/models.hpp"

namespace kgpat {

struct TrainConfig {
    int dim = 200;
    double learning_rate = 0.05;
    int batch_size = 512;
    int negatives = 32;       // corruptions per positive
    double margin = 9.0;      // gamma
    double adv_temp = 1.0;    // alpha, self-adversarial temperature
    int epochs = 200;
    int patience = 5;         // validation checks without improvement
    uint64_t seed = 42;
    std::string optimizer = "sgd";  // sgd | adam
    int valid_every = 10;           // epochs between validation MRR checks
    int valid_sample = 0;           // 0: full validation split
    bool filtered_negatives = false;
    bool bernoulli = false;
    int threads = 1;

    void validate() const {
        if (dim <= 0 || batch_size <= 0 || negatives <= 0 || epochs < 0 || patience <= 0 ||
            valid_every <= 0 || learning_rate <= 0 || margin <= 0 || adv_temp <= 0)
            throw ConfigError("train config fields must be positive");
        if (optimizer != "sgd" && optimizer != "adam")
            throw ConfigError("optimizer must be 'sgd' or 'adam', got " + optimizer);
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"dim", dim},
                              {"learning_rate", learning_rate},
                              {"batch_size", batch_size},
                              {"negatives", negatives},
                              {"margin", margin},
                              {"adv_temp", adv_temp},
                              {"epochs", epochs},
                              {"patience", patience},
                              {"seed", seed},
                              {"optimizer", optimizer},
                              {"valid_every", valid_every},
                              {"valid_sample", valid_sample},
                              {"filtered_negatives", filtered_negatives},
                              {"bernoulli", bernoulli}};
    }
};

struct NegativeBatch {
    std::vector<Triple> triples;        // k per positive, positive-major order
    std::vector<uint8_t> replaced_head;
    std::vector<uint8_t> known;         // corruption reproduces a train triple
    int per_positive = 0;
};

namespace detail {
// Portable bounded draw; modulo bias is negligible against 2^64.
inline int64_t draw(std::mt19937_64& rng, int64_t n) { return static_cast<int64_t>(rng() % static_cast<uint64_t>(n)); }
}  // namespace detail

// Uniform corruption of head or tail (fair coin per corruption). Corruptions
// that coincide with known train triples are kept but flagged; the filtered
// mode retries them a bounded number of times.
inline NegativeBatch negative_sample(std::span<const Triple> positives, const KnowledgeGraph& kg,
                                     int k, std::mt19937_64& rng, bool filtered = false,
                                     bool bernoulli = false) {
    if (k < 1) throw ConfigError("negatives per positive must be >= 1");
    NegativeBatch out;
    out.per_positive = k;
    out.triples.reserve(positives.size() * static_cast<size_t>(k));
    out.replaced_head.reserve(out.triples.capacity());
    out.known.reserve(out.triples.capacity());
    int64_t E = kg.num_entities();

    // Bernoulli mode corrupts the head with probability tph/(tph+hpt) of the
    // positive's relation.
    std::vector<double> head_prob;
    if (bernoulli) {
        head_prob.assign(static_cast<size_t>(kg.num_relations()), 0.5);
        for (RelationId r = 0; r < kg.num_relations(); ++r) {
            const auto& pairs = kg.pairs_of(r);
            if (pairs.empty()) continue;
            std::vector<EntityId> heads, tails;
            for (auto& [h, t] : pairs) {
                heads.push_back(h);
                tails.push_back(t);
            }
            std::sort(heads.begin(), heads.end());
            heads.erase(std::unique(heads.begin(), heads.end()), heads.end());
            std::sort(tails.begin(), tails.end());
            tails.erase(std::unique(tails.begin(), tails.end()), tails.end());
            double tph = static_cast<double>(pairs.size()) / static_cast<double>(heads.size());
            double hpt = static_cast<double>(pairs.size()) / static_cast<double>(tails.size());
            head_prob[static_cast<size_t>(r)] = tph / (tph + hpt);
        }
    }

    for (const Triple& pos : positives) {
        for (int j = 0; j < k; ++j) {
            double p_head = bernoulli ? head_prob[static_cast<size_t>(pos.relation)] : 0.5;
            int attempts = filtered ? 100 : 1;
            Triple neg = pos;
            bool rep_head = false;
            bool is_known = true;
            while (attempts-- > 0) {
                rep_head = (static_cast<double>(rng() >> 11) * 0x1.0p-53) < p_head;
                EntityId cand = static_cast<EntityId>(detail::draw(rng, E));
                neg = pos;
                if (rep_head) neg.head = cand;
                else neg.tail = cand;
                is_known = kg.contains(neg.head, neg.relation, neg.tail);
                if (!is_known) break;
            }
            out.triples.push_back(neg);
            out.replaced_head.push_back(rep_head ? 1 : 0);
            out.known.push_back(is_known ? 1 : 0);
        }
    }
    return out;
}

// Gradient rows touched by one batch. Each map value has the row's full
// parameter width.
struct SparseGrad {
    std::unordered_map<EntityId, std::vector<double>> entity;
    std::unordered_map<RelationId, std::vector<double>> relation;
    double hake_mix = 0.0;

    void add(SparseGrad&& other) {
        for (auto& [id, g] : other.entity) {
            auto [it, fresh] = entity.try_emplace(id, std::move(g));
            if (!fresh)
                for (size_t i = 0; i < it->second.size(); ++i) it->second[i] += g[i];
        }
        for (auto& [id, g] : other.relation) {
            auto [it, fresh] = relation.try_emplace(id, std::move(g));
            if (!fresh)
                for (size_t i = 0; i < it->second.size(); ++i) it->second[i] += g[i];
        }
        hake_mix += other.hake_mix;
    }
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double log_sigmoid(double x) {
    // stable -softplus(-x)
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

// Accumulates coeff * d(score)/d(params) for one triple into grad. The
// relation is always real during training.
inline void accumulate_score_grad(const ModelParameters& p, const Triple& t, double coeff,
                                  SparseGrad& grad) {
    int d = p.dim;
    auto hv = p.entity_row(t.head);
    auto rv = p.relation_row(t.relation);
    auto tv = p.entity_row(t.tail);
    auto& gh = grad.entity.try_emplace(t.head, std::vector<double>(hv.size(), 0.0)).first->second;
    auto& gr = grad.relation.try_emplace(t.relation, std::vector<double>(rv.size(), 0.0)).first->second;
    auto& gt = grad.entity.try_emplace(t.tail, std::vector<double>(tv.size(), 0.0)).first->second;

    switch (p.family) {
        case ModelFamily::TransE: {
            for (int i = 0; i < d; ++i) {
                double u = static_cast<double>(hv[i]) + rv[i] - tv[i];
                double s = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
                gh[static_cast<size_t>(i)] += -coeff * s;
                gr[static_cast<size_t>(i)] += -coeff * s;
                gt[static_cast<size_t>(i)] += coeff * s;
            }
            break;
        }
        case ModelFamily::DistMult: {
            for (int i = 0; i < d; ++i) {
                gh[static_cast<size_t>(i)] += coeff * rv[i] * tv[i];
                gr[static_cast<size_t>(i)] += coeff * static_cast<double>(hv[i]) * tv[i];
                gt[static_cast<size_t>(i)] += coeff * static_cast<double>(hv[i]) * rv[i];
            }
            break;
        }
        case ModelFamily::RotatE: {
            // s = -||h o e^{i theta} - t||_2 over the 2d real components
            double norm = 0;
            std::vector<double> ure(static_cast<size_t>(d)), uim(static_cast<size_t>(d));
            std::vector<double> wre(static_cast<size_t>(d)), wim(static_cast<size_t>(d));
            for (int i = 0; i < d; ++i) {
                double c = std::cos(rv[i]), s = std::sin(rv[i]);
                double a = hv[2 * i], b = hv[2 * i + 1];
                wre[static_cast<size_t>(i)] = a * c - b * s;
                wim[static_cast<size_t>(i)] = a * s + b * c;
                ure[static_cast<size_t>(i)] = wre[static_cast<size_t>(i)] - tv[2 * i];
                uim[static_cast<size_t>(i)] = wim[static_cast<size_t>(i)] - tv[2 * i + 1];
                norm += ure[static_cast<size_t>(i)] * ure[static_cast<size_t>(i)] +
                        uim[static_cast<size_t>(i)] * uim[static_cast<size_t>(i)];
            }
            norm = std::sqrt(norm);
            if (norm == 0) break;  // flat point
            double k = -coeff / norm;
            for (int i = 0; i < d; ++i) {
                double c = std::cos(rv[i]), s = std::sin(rv[i]);
                double ur = ure[static_cast<size_t>(i)], ui = uim[static_cast<size_t>(i)];
                gh[static_cast<size_t>(2 * i)] += k * (ur * c + ui * s);
                gh[static_cast<size_t>(2 * i + 1)] += k * (-ur * s + ui * c);
                gr[static_cast<size_t>(i)] +=
                    k * (-ur * wim[static_cast<size_t>(i)] + ui * wre[static_cast<size_t>(i)]);
                gt[static_cast<size_t>(2 * i)] += -k * ur;
                gt[static_cast<size_t>(2 * i + 1)] += -k * ui;
            }
            break;
        }
        case ModelFamily::ComplEx: {
            for (int i = 0; i < d; ++i) {
                double a = hv[2 * i], b = hv[2 * i + 1];
                double c = rv[2 * i], dd = rv[2 * i + 1];
                double e = tv[2 * i], f = tv[2 * i + 1];
                gh[static_cast<size_t>(2 * i)] += coeff * (c * e + dd * f);
                gh[static_cast<size_t>(2 * i + 1)] += coeff * (-dd * e + c * f);
                gr[static_cast<size_t>(2 * i)] += coeff * (a * e + b * f);
                gr[static_cast<size_t>(2 * i + 1)] += coeff * (-b * e + a * f);
                gt[static_cast<size_t>(2 * i)] += coeff * (a * c - b * dd);
                gt[static_cast<size_t>(2 * i + 1)] += coeff * (a * dd + b * c);
            }
            break;
        }
        case ModelFamily::HAKE: {
            double norm = 0;
            std::vector<double> u(static_cast<size_t>(d));
            for (int i = 0; i < d; ++i) {
                u[static_cast<size_t>(i)] = static_cast<double>(hv[i]) * rv[i] - tv[i];
                norm += u[static_cast<size_t>(i)] * u[static_cast<size_t>(i)];
            }
            norm = std::sqrt(norm);
            if (norm > 0) {
                double k = -coeff / norm;
                for (int i = 0; i < d; ++i) {
                    gh[static_cast<size_t>(i)] += k * u[static_cast<size_t>(i)] * rv[i];
                    gr[static_cast<size_t>(i)] += k * u[static_cast<size_t>(i)] * static_cast<double>(hv[i]);
                    gt[static_cast<size_t>(i)] += -k * u[static_cast<size_t>(i)];
                }
            }
            double lam = p.hake_mix;
            double phase_term = 0;
            for (int i = d; i < 2 * d; ++i) {
                double v = 0.5 * (static_cast<double>(hv[i]) + rv[i] - tv[i]);
                double sv = std::sin(v);
                phase_term += std::abs(sv);
                double sgn = sv > 0 ? 1.0 : (sv < 0 ? -1.0 : 0.0);
                double g = -coeff * lam * sgn * std::cos(v) * 0.5;
                gh[static_cast<size_t>(i)] += g;
                gr[static_cast<size_t>(i)] += g;
                gt[static_cast<size_t>(i)] += -g;
            }
            grad.hake_mix += -coeff * phase_term;
            break;
        }
        case ModelFamily::PairRE: {
            for (int i = 0; i < d; ++i) {
                double u = static_cast<double>(hv[i]) * rv[i] - static_cast<double>(tv[i]) * rv[d + i];
                double s = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
                gh[static_cast<size_t>(i)] += -coeff * s * rv[i];
                gr[static_cast<size_t>(i)] += -coeff * s * static_cast<double>(hv[i]);
                gt[static_cast<size_t>(i)] += coeff * s * rv[d + i];
                gr[static_cast<size_t>(d + i)] += coeff * s * static_cast<double>(tv[i]);
            }
            break;
        }
        case ModelFamily::DualE: {
            // s = sum_k <A x C, E> + <A x D + B x C, F>, multilinear in the
            // stored components (normalization is a post-update projection)
            for (int k = 0; k < d; ++k) {
                double A[4], B[4], C[4], D[4], E[4], F[4];
                for (int i = 0; i < 4; ++i) {
                    A[i] = hv[8 * k + i];
                    B[i] = hv[8 * k + 4 + i];
                    C[i] = rv[8 * k + i];
                    D[i] = rv[8 * k + 4 + i];
                    E[i] = tv[8 * k + i];
                    F[i] = tv[8 * k + 4 + i];
                }
                double Ac[4], Bc[4], Cc[4], Dc[4], t1[4], t2[4];
                quat::conjugate(A, Ac);
                quat::conjugate(B, Bc);
                quat::conjugate(C, Cc);
                quat::conjugate(D, Dc);
                // dA = E x C~ + F x D~ ; dB = F x C~
                quat::hamilton(E, Cc, t1);
                quat::hamilton(F, Dc, t2);
                for (int i = 0; i < 4; ++i) gh[static_cast<size_t>(8 * k + i)] += coeff * (t1[i] + t2[i]);
                quat::hamilton(F, Cc, t1);
                for (int i = 0; i < 4; ++i) gh[static_cast<size_t>(8 * k + 4 + i)] += coeff * t1[i];
                // dC = A~ x E + B~ x F ; dD = A~ x F
                quat::hamilton(Ac, E, t1);
                quat::hamilton(Bc, F, t2);
                for (int i = 0; i < 4; ++i) gr[static_cast<size_t>(8 * k + i)] += coeff * (t1[i] + t2[i]);
                quat::hamilton(Ac, F, t1);
                for (int i = 0; i < 4; ++i) gr[static_cast<size_t>(8 * k + 4 + i)] += coeff * t1[i];
                // dE = A x C ; dF = A x D + B x C
                quat::hamilton(A, C, t1);
                for (int i = 0; i < 4; ++i) gt[static_cast<size_t>(8 * k + i)] += coeff * t1[i];
                quat::hamilton(A, D, t1);
                quat::hamilton(B, C, t2);
                for (int i = 0; i < 4; ++i) gt[static_cast<size_t>(8 * k + 4 + i)] += coeff * (t1[i] + t2[i]);
            }
            break;
        }
    }
}

inline double triple_score(const ModelParameters& p, const Triple& t) {
    return score_with(p, t.head, raw_relvec(p, t.relation), t.tail);
}

}  // namespace detail

// Self-adversarial negative sampling loss, averaged over the batch:
//   L = -log sig(gamma + s_pos) - sum_i p_i log sig(-gamma - s_neg_i)
// with p_i = softmax(alpha * s_neg_i) treated as constants. When frozen_p is
// given it replaces the softmax weights (used by the finite-difference
// oracle, which must differentiate the same objective the analytic gradient
// describes).
inline double compute_loss(const ModelParameters& params, std::span<const Triple> positives,
                           const NegativeBatch& negatives, const TrainConfig& cfg,
                           SparseGrad* grad = nullptr,
                           const std::vector<double>* frozen_p = nullptr,
                           size_t normalizer = 0) {
    if (positives.empty()) return 0.0;
    if (negatives.triples.size() != positives.size() * static_cast<size_t>(negatives.per_positive))
        throw ConfigError("negative batch does not match positives");
    int k = negatives.per_positive;
    double total = 0;
    double inv_n = 1.0 / static_cast<double>(normalizer ? normalizer : positives.size());
    std::vector<double> sneg(static_cast<size_t>(k)), w(static_cast<size_t>(k));
    for (size_t i = 0; i < positives.size(); ++i) {
        double spos = detail::triple_score(params, positives[i]);
        for (int j = 0; j < k; ++j)
            sneg[static_cast<size_t>(j)] =
                detail::triple_score(params, negatives.triples[i * static_cast<size_t>(k) + static_cast<size_t>(j)]);
        if (frozen_p) {
            for (int j = 0; j < k; ++j)
                w[static_cast<size_t>(j)] = (*frozen_p)[i * static_cast<size_t>(k) + static_cast<size_t>(j)];
        } else {
            double mx = *std::max_element(sneg.begin(), sneg.end());
            double z = 0;
            for (int j = 0; j < k; ++j) {
                w[static_cast<size_t>(j)] = std::exp(cfg.adv_temp * (sneg[static_cast<size_t>(j)] - mx));
                z += w[static_cast<size_t>(j)];
            }
            for (int j = 0; j < k; ++j) w[static_cast<size_t>(j)] /= z;
        }
        double li = -detail::log_sigmoid(cfg.margin + spos);
        for (int j = 0; j < k; ++j)
            li -= w[static_cast<size_t>(j)] * detail::log_sigmoid(-cfg.margin - sneg[static_cast<size_t>(j)]);
        total += li;
        if (grad) {
            double dpos = (detail::sigmoid(cfg.margin + spos) - 1.0) * inv_n;
            detail::accumulate_score_grad(params, positives[i], dpos, *grad);
            for (int j = 0; j < k; ++j) {
                double dneg = w[static_cast<size_t>(j)] *
                              detail::sigmoid(cfg.margin + sneg[static_cast<size_t>(j)]) * inv_n;
                detail::accumulate_score_grad(
                    params, negatives.triples[i * static_cast<size_t>(k) + static_cast<size_t>(j)], dneg,
                    *grad);
            }
        }
    }
    return total * inv_n;
}

// Detached softmax weights for the whole batch, for the FD oracle.
inline std::vector<double> adversarial_weights(const ModelParameters& params,
                                               std::span<const Triple> positives,
                                               const NegativeBatch& negatives, const TrainConfig& cfg) {
    int k = negatives.per_positive;
    std::vector<double> out(negatives.triples.size());
    for (size_t i = 0; i < positives.size(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j)
            mx = std::max(mx, detail::triple_score(params, negatives.triples[i * static_cast<size_t>(k) + static_cast<size_t>(j)]));
        double z = 0;
        for (int j = 0; j < k; ++j) {
            double e = std::exp(cfg.adv_temp *
                                (detail::triple_score(params, negatives.triples[i * static_cast<size_t>(k) + static_cast<size_t>(j)]) - mx));
            out[i * static_cast<size_t>(k) + static_cast<size_t>(j)] = e;
            z += e;
        }
        for (int j = 0; j < k; ++j) out[i * static_cast<size_t>(k) + static_cast<size_t>(j)] /= z;
    }
    return out;
}

inline std::pair<double, SparseGrad> loss_and_grad(const ModelParameters& params,
                                                   std::span<const Triple> positives,
                                                   const NegativeBatch& negatives,
                                                   const TrainConfig& cfg) {
    SparseGrad grad;
    double loss = compute_loss(params, positives, negatives, cfg, &grad);
    if (!std::isfinite(loss)) {
        std::string dump = "non-finite training loss; batch:";
        for (const Triple& t : positives)
            dump += " (" + std::to_string(t.head) + "," + std::to_string(t.relation) + "," +
                    std::to_string(t.tail) + ")";
        throw NumericError(dump);
    }
    return {loss, std::move(grad)};
}

// Keeps stored parameters inside their manifolds after an update: phases
// wrapped to [0, 2pi), DualE relations re-projected to unit dual quaternions.
inline void apply_constraints(ModelParameters& p, const SparseGrad& touched) {
    auto wrap = [](float v) {
        double x = std::fmod(static_cast<double>(v), kTwoPi);
        if (x < 0) x += kTwoPi;
        return static_cast<float>(x);
    };
    switch (p.family) {
        case ModelFamily::RotatE:
            for (const auto& [r, g] : touched.relation) {
                auto row = p.relation_row(r);
                for (float& v : row) v = wrap(v);
            }
            break;
        case ModelFamily::HAKE: {
            for (const auto& [r, g] : touched.relation) {
                auto row = p.relation_row(r);
                for (int i = p.dim; i < 2 * p.dim; ++i) row[static_cast<size_t>(i)] = wrap(row[static_cast<size_t>(i)]);
            }
            for (const auto& [e, g] : touched.entity) {
                auto row = p.entity_row(e);
                for (int i = p.dim; i < 2 * p.dim; ++i) row[static_cast<size_t>(i)] = wrap(row[static_cast<size_t>(i)]);
            }
            break;
        }
        case ModelFamily::DualE:
            for (const auto& [r, g] : touched.relation) {
                auto row = p.relation_row(r);
                for (int k = 0; k < p.dim; ++k) {
                    double c[4], d[4];
                    for (int i = 0; i < 4; ++i) c[i] = row[static_cast<size_t>(8 * k + i)];
                    for (int i = 0; i < 4; ++i) d[i] = row[static_cast<size_t>(8 * k + 4 + i)];
                    quat::normalize_dual(c, d);
                    for (int i = 0; i < 4; ++i) row[static_cast<size_t>(8 * k + i)] = static_cast<float>(c[i]);
                    for (int i = 0; i < 4; ++i) row[static_cast<size_t>(8 * k + 4 + i)] = static_cast<float>(d[i]);
                }
            }
            break;
        default: break;
    }
}

class Optimizer {
  public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg), adam_(cfg.optimizer == "adam") {}

    void step(ModelParameters& p, const SparseGrad& grad) {
        ++t_;
        for (const auto& [e, g] : grad.entity) apply_row(p.entity_row(e), g, ent_m_, e);
        for (const auto& [r, g] : grad.relation) apply_row(p.relation_row(r), g, rel_m_, r);
        if (p.family == ModelFamily::HAKE && grad.hake_mix != 0.0) {
            if (adam_) {
                mix_m_ = 0.9 * mix_m_ + 0.1 * grad.hake_mix;
                mix_v_ = 0.999 * mix_v_ + 0.001 * grad.hake_mix * grad.hake_mix;
                double mh = mix_m_ / (1 - std::pow(0.9, t_));
                double vh = mix_v_ / (1 - std::pow(0.999, t_));
                p.hake_mix -= static_cast<float>(cfg_.learning_rate * mh / (std::sqrt(vh) + 1e-8));
            } else {
                p.hake_mix -= static_cast<float>(cfg_.learning_rate * grad.hake_mix);
            }
        }
        apply_constraints(p, grad);
    }

  private:
    struct Moments {
        std::vector<double> m, v;
    };

    void apply_row(std::span<float> row, const std::vector<double>& g,
                   std::unordered_map<int32_t, Moments>& store, int32_t id) {
        if (!adam_) {
            for (size_t i = 0; i < row.size(); ++i)
                row[i] = static_cast<float>(row[i] - cfg_.learning_rate * g[i]);
            return;
        }
        Moments& mo = store[id];
        if (mo.m.empty()) {
            mo.m.assign(row.size(), 0.0);
            mo.v.assign(row.size(), 0.0);
        }
        double b1c = 1 - std::pow(0.9, t_);
        double b2c = 1 - std::pow(0.999, t_);
        for (size_t i = 0; i < row.size(); ++i) {
            mo.m[i] = 0.9 * mo.m[i] + 0.1 * g[i];
            mo.v[i] = 0.999 * mo.v[i] + 0.001 * g[i] * g[i];
            double update = cfg_.learning_rate * (mo.m[i] / b1c) / (std::sqrt(mo.v[i] / b2c) + 1e-8);
            row[i] = static_cast<float>(row[i] - update);
        }
    }

    TrainConfig cfg_;
    bool adam_;
    int64_t t_ = 0;
    std::unordered_map<int32_t, Moments> ent_m_, rel_m_;
    double mix_m_ = 0, mix_v_ = 0;
};

struct TrainLogEntry {
    int epoch = 0;
    double loss = 0;
    double valid_mrr = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    ModelParameters params;  // best validation checkpoint (final params if never validated)
    std::vector<TrainLogEntry> log;
    bool diverged = false;
    int best_epoch = 0;
    double best_valid_mrr = std::numeric_limits<double>::quiet_NaN();
};

inline std::string train_log_csv(const std::vector<TrainLogEntry>& log) {
    std::string out = "epoch,loss,valid_mrr\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + ',' + fmt_double(e.loss) + ',';
        if (!std::isnan(e.valid_mrr)) out += fmt_double(e.valid_mrr);
        out += '\n';
    }
    return out;
}

// SGD-style training with early stopping on validation MRR. Deterministic for
// a fixed (dataset, config) pair: the seed drives shuffling, corruption, and
// initialization; gradient partial sums merge in chunk order.
inline TrainResult train(const KnowledgeGraph& kg, ModelFamily family, const TrainConfig& cfg) {
    cfg.validate();
    TrainResult result;
    result.params = init_parameters(family, cfg.dim, kg.num_entities(), kg.num_relations(), cfg.seed,
                                    kg.vocab_hash());
    ModelParameters& params = result.params;
    ModelParameters best = params;
    double best_mrr = -1;
    int best_epoch = 0;
    int checks_without_improvement = 0;

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<size_t> order(kg.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Optimizer opt(cfg);

    // deterministic validation subsample
    std::vector<Triple> valid_set = kg.valid;
    if (cfg.valid_sample > 0 && valid_set.size() > static_cast<size_t>(cfg.valid_sample)) {
        std::mt19937_64 vrng(cfg.seed ^ 0x2545f4914f6cdd1dull);
        for (size_t i = valid_set.size() - 1; i > 0; --i)
            std::swap(valid_set[i], valid_set[static_cast<size_t>(detail::draw(vrng, static_cast<int64_t>(i + 1)))]);
        valid_set.resize(static_cast<size_t>(cfg.valid_sample));
    }

    auto validation_mrr = [&]() -> double {
        if (valid_set.empty()) return std::numeric_limits<double>::quiet_NaN();
        BaseScorer scorer(params);
        EvalOptions eopts;
        eopts.threads = cfg.threads;
        return evaluate(scorer, valid_set, kg, eopts).overall.mrr;
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<size_t>(detail::draw(rng, static_cast<int64_t>(i)))]);
        double epoch_loss = 0;
        int64_t batches = 0;
        bool exploded = false;
        for (size_t start = 0; start < order.size() && !exploded; start += static_cast<size_t>(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<Triple> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(kg.train[order[i]]);
            NegativeBatch negs =
                negative_sample(batch, kg, cfg.negatives, rng, cfg.filtered_negatives, cfg.bernoulli);

            double loss = 0;
            SparseGrad grad;
            if (cfg.threads > 1 && batch.size() > 8) {
                int chunks = std::min<int>(cfg.threads, static_cast<int>(batch.size()));
                std::vector<SparseGrad> partial(static_cast<size_t>(chunks));
                std::vector<double> partial_loss(static_cast<size_t>(chunks), 0.0);
                size_t per = (batch.size() + static_cast<size_t>(chunks) - 1) / static_cast<size_t>(chunks);
                parallel_for(chunks, chunks, [&](int64_t lo, int64_t hi) {
                    for (int64_t c = lo; c < hi; ++c) {
                        size_t b = static_cast<size_t>(c) * per;
                        size_t e = std::min(batch.size(), b + per);
                        if (b >= e) continue;
                        std::span<const Triple> pos(batch.data() + b, e - b);
                        NegativeBatch sub;
                        sub.per_positive = negs.per_positive;
                        sub.triples.assign(
                            negs.triples.begin() + static_cast<int64_t>(b) * negs.per_positive,
                            negs.triples.begin() + static_cast<int64_t>(e) * negs.per_positive);
                        // normalize by the full batch so merged chunks equal
                        // the single-threaded result
                        partial_loss[static_cast<size_t>(c)] = compute_loss(
                            params, pos, sub, cfg, &partial[static_cast<size_t>(c)], nullptr, batch.size());
                    }
                });
                for (int c = 0; c < chunks; ++c) {
                    loss += partial_loss[static_cast<size_t>(c)];
                    grad.add(std::move(partial[static_cast<size_t>(c)]));
                }
            } else {
                auto [l, g] = loss_and_grad(params, batch, negs, cfg);
                loss = l;
                grad = std::move(g);
            }
            if (!std::isfinite(loss)) {
                exploded = true;
                break;
            }
            opt.step(params, grad);
            epoch_loss += loss;
            ++batches;
        }
        if (exploded || !params.all_finite()) {
            result.diverged = true;
            std::cerr << "[kgpat] training diverged at epoch " << epoch
                      << "; returning last good checkpoint\n";
            break;
        }
        TrainLogEntry entry;
        entry.epoch = epoch;
        entry.loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
        bool validate_now = (epoch % cfg.valid_every == 0) || epoch == cfg.epochs;
        if (validate_now && !valid_set.empty()) {
            entry.valid_mrr = validation_mrr();
            if (entry.valid_mrr > best_mrr) {
                best_mrr = entry.valid_mrr;
                best = params;
                best_epoch = epoch;
                checks_without_improvement = 0;
            } else if (++checks_without_improvement >= cfg.patience) {
                result.log.push_back(entry);
                break;
            }
        }
        result.log.push_back(entry);
    }

    if (result.diverged) {
        // last good checkpoint: best-validation snapshot, or the init snapshot
        result.params = best;
        result.best_epoch = best_epoch;
        if (best_mrr >= 0) result.best_valid_mrr = best_mrr;
    } else if (best_mrr >= 0) {
        result.params = best;
        result.best_epoch = best_epoch;
        result.best_valid_mrr = best_mrr;
    }
    return result;
}

}  // namespace kgpat
