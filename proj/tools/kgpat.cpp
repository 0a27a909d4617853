// kgpat: knowledge-graph completion toolkit

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgpat/eval.hpp"
#include "kgpat/kg.hpp"
#include "kgpat/mining.hpp"
#include "kgpat/models.hpp"
#include "kgpat/patterns.hpp"
#include "kgpat/rules.hpp"
#include "kgpat/spa.hpp"
#include "kgpat/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_file(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw kgpat::DataError("missing artifact '" + path + "' — run `kgpat " + producer +
                               "` first");
}

void require_dataset(const std::string& dir) {
    for (const char* f : {"train.txt", "valid.txt", "test.txt"})
        if (!fs::exists(dir + "/" + f))
            throw kgpat::DataError("dataset directory '" + dir + "' is missing " + f);
}

std::vector<int64_t> parse_thresholds(const std::string& csv) {
    std::vector<int64_t> out;
    for (auto tok : kgpat::split_view(csv, ',')) {
        tok = kgpat::trim_view(tok);
        if (tok.empty()) continue;
        out.push_back(std::stoll(std::string(tok)));
    }
    return out;
}

kgpat::SplitKind parse_split(const std::string& s) {
    if (s == "train") return kgpat::SplitKind::Train;
    if (s == "valid") return kgpat::SplitKind::Valid;
    if (s == "test") return kgpat::SplitKind::Test;
    throw kgpat::ConfigError("unknown split: " + s);
}

struct MineFlags {
    std::string data, out, preset;
    kgpat::MiningConfig config;
};

struct EvalCommon {
    std::string data, model, rules, out_json, out_csv, model_name = "model", split = "test";
    std::string buckets = "0,5,10,15,20,25,30";
    double min_pca = 0.8, min_hc = 0.5;
    bool tail_only = false;
    int threads = 0;
};

kgpat::KnowledgeGraph load_kg(const std::string& dir, bool strict = false) {
    require_dataset(dir);
    kgpat::DatasetOptions opts;
    opts.strict_vocab = strict;
    return kgpat::KnowledgeGraph::load_dataset(dir, opts);
}

kgpat::ModelParameters load_model(const std::string& path, const kgpat::KnowledgeGraph& kg) {
    require_file(path, "train");
    uint64_t expected = kg.vocab_hash();
    return kgpat::load_checkpoint(path, &expected);
}

kgpat::EvalReport run_eval(const kgpat::Scorer& scorer, const kgpat::KnowledgeGraph& kg,
                           const EvalCommon& flags, const kgpat::PatternAssignment* assignment) {
    kgpat::EvalOptions opts;
    opts.head_queries = !flags.tail_only;
    opts.assignment = assignment;
    opts.bucket_thresholds = parse_thresholds(flags.buckets);
    opts.threads = flags.threads;
    return kgpat::evaluate(scorer, kg.split(parse_split(flags.split)), kg, opts);
}

void write_report(const kgpat::EvalReport& report, const EvalCommon& flags,
                  const std::string& spa_mode) {
    json j = kgpat::report_to_json(report, flags.model_name, spa_mode);
    kgpat::write_text_file(flags.out_json, j.dump(2) + "\n");
    if (!flags.out_csv.empty()) {
        std::string csv = kgpat::report_csv_header();
        kgpat::append_report_csv_rows(csv, j);
        kgpat::write_text_file(flags.out_csv, csv);
    }
    const kgpat::Metrics& m = report.overall;
    std::cout << spa_mode << " MRR " << kgpat::fmt_double(m.mrr) << "  hits@1 "
              << kgpat::fmt_double(m.hits1) << "  hits@3 " << kgpat::fmt_double(m.hits3)
              << "  hits@10 " << kgpat::fmt_double(m.hits10) << "  (" << m.count << " queries)\n";
}

int run(int argc, char** argv) {
    CLI::App app{"knowledge-graph completion toolkit: rule mining, relational-pattern analysis, "
                 "shallow KGE training, and score-based patterns adaptation"};
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML-style config file with a section per subcommand");
    app.allow_config_extras(CLI::config_extras_mode::ignore_all);

    // ---- prepare ----
    auto* prep = app.add_subcommand("prepare", "validate and index a dataset directory");
    std::string prep_data, prep_out;
    bool prep_strict = false;
    prep->add_option("--data", prep_data, "dataset directory (train/valid/test.txt)")
        ->required()
        ->envname("KGPAT_DATA");
    prep->add_option("--out", prep_out, "output directory for vocabularies and stats")->required();
    prep->add_flag("--strict-vocab", prep_strict, "reject valid/test labels unseen in train");
    prep->callback([&] {
        auto kg = load_kg(prep_data, prep_strict);
        fs::create_directories(prep_out);
        kgpat::write_text_file(prep_out + "/entities.tsv", kg.export_vocab_tsv(kg.entities));
        kgpat::write_text_file(prep_out + "/relations.tsv", kg.export_vocab_tsv(kg.relations));
        json stats;
        stats["entities"] = kg.num_entities();
        stats["relations"] = kg.num_relations();
        stats["train"] = kg.train.size();
        stats["valid"] = kg.valid.size();
        stats["test"] = kg.test.size();
        stats["vocab_hash"] = kgpat::to_hex(kg.vocab_hash());
        kgpat::write_text_file(prep_out + "/stats.json", stats.dump(2) + "\n");
        std::cout << "entities " << kg.num_entities() << "  relations " << kg.num_relations()
                  << "  train " << kg.train.size() << "  valid " << kg.valid.size() << "  test "
                  << kg.test.size() << "\n";
    });

    // ---- mine ----
    auto* mine = app.add_subcommand("mine", "mine closed-path rules from the train split");
    MineFlags mf;
    mine->add_option("--data", mf.data, "dataset directory")->required()->envname("KGPAT_DATA");
    mine->add_option("--out", mf.out, "rule file to write")->required();
    mine->add_option("--preset", mf.preset, "threshold preset theta1..theta5");
    mine->add_option("--min-pca", mf.config.min_pca, "minimum PCA confidence");
    mine->add_option("--min-hc", mf.config.min_hc, "minimum head coverage");
    mine->add_option("--min-support", mf.config.min_support,
                     "minimum support (-1: 10 on benchmark-scale graphs, 1 on toy graphs)");
    mine->add_option("--max-body-len", mf.config.max_body_len, "maximum body length (1..3)");
    mine->add_option("--threads", mf.config.threads, "worker threads (0: all cores)")
        ->envname("KGPAT_THREADS");
    mine->callback([&] {
        kgpat::MiningConfig cfg = mf.config;
        if (!mf.preset.empty()) {
            auto preset = kgpat::MiningConfig::preset(mf.preset);
            // explicit flags win over the preset
            if (mine->count("--min-pca") == 0) cfg.min_pca = preset.min_pca;
            if (mine->count("--min-hc") == 0) cfg.min_hc = preset.min_hc;
        }
        auto kg = load_kg(mf.data);
        auto rules = kgpat::mine_rules(kg, cfg);
        kgpat::write_text_file(mf.out, kgpat::format_rule_file(rules, kg.relations, kg.relation_space()));
        std::cout << "mined " << rules.size() << " rules (pca>=" << kgpat::fmt_double(cfg.min_pca)
                  << ", hc>=" << kgpat::fmt_double(cfg.min_hc)
                  << ", support>=" << cfg.effective_min_support(kg.train.size()) << ")\n";
    });

    // ---- classify ----
    auto* cls = app.add_subcommand("classify", "assign relational patterns from mined rules");
    std::string cls_data, cls_rules, cls_out, cls_split = "test";
    std::string cls_buckets = "0,5,10,15,20,25,30";
    kgpat::ClassifyConfig cls_cfg;
    cls->add_option("--data", cls_data, "dataset directory")->required()->envname("KGPAT_DATA");
    cls->add_option("--rules", cls_rules, "rule file from `kgpat mine`")->required();
    cls->add_option("--out-dir", cls_out, "output directory")->required();
    cls->add_option("--min-pca", cls_cfg.min_pca, "classification PCA threshold");
    cls->add_option("--min-hc", cls_cfg.min_hc, "classification head-coverage threshold");
    cls->add_option("--buckets", cls_buckets, "ascending entity-frequency thresholds");
    cls->add_option("--split", cls_split, "split to classify (train|valid|test)");
    cls->callback([&] {
        auto kg = load_kg(cls_data);
        require_file(cls_rules, "mine");
        auto rules = kgpat::parse_rule_file(kgpat::read_text_file(cls_rules), kg.relations,
                                            kg.relation_space());
        auto assignment = kgpat::classify_relations(rules, kg.relation_space(), cls_cfg);
        fs::create_directories(cls_out);
        kgpat::write_text_file(cls_out + "/assignment.tsv",
                               kgpat::export_assignment_tsv(assignment, kg.relations));
        auto matrix = kgpat::pattern_matrix(assignment);
        for (size_t i = 0; i < 5; ++i)
            if (!matrix.row_defined(i))
                std::cerr << "[kgpat] note: pattern " << kgpat::pattern_name(kgpat::kAllPatterns[i])
                          << " has no relations; matrix row is undefined\n";
        kgpat::write_text_file(cls_out + "/pattern_matrix.csv", kgpat::export_pattern_matrix_csv(matrix));

        auto split_triples = kg.split(parse_split(cls_split));
        auto by_pattern = kgpat::classify_triples(split_triples, assignment);
        auto thresholds = parse_thresholds(cls_buckets);
        std::map<std::string, std::vector<std::pair<int64_t, int64_t>>> bucket_counts;
        auto add_counts = [&](const std::string& name, const std::vector<kgpat::Triple>& triples) {
            auto buckets = kgpat::frequency_buckets(triples, kg, thresholds);
            for (size_t k = 0; k < thresholds.size(); ++k)
                bucket_counts[name].emplace_back(thresholds[k],
                                                 static_cast<int64_t>(buckets[k].size()));
        };
        add_counts("all", split_triples);
        for (const auto& [p, triples] : by_pattern) add_counts(kgpat::pattern_name(p), triples);
        kgpat::write_text_file(cls_out + "/bucket_stats.csv", kgpat::export_bucket_csv(bucket_counts));

        std::cout << "relations:";
        for (kgpat::PatternType p : kgpat::kAllPatterns)
            std::cout << ' ' << kgpat::pattern_name(p) << '=' << assignment.relations_of(p).size();
        std::cout << "\n";
    });

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train a KGE model family");
    std::string tr_data, tr_family = "TransE", tr_out, tr_log;
    kgpat::TrainConfig tc;
    tr->add_option("--data", tr_data, "dataset directory")->required()->envname("KGPAT_DATA");
    tr->add_option("--family", tr_family,
                   "TransE|RotatE|HAKE|DistMult|ComplEx|DualE|PairRE");
    tr->add_option("--out", tr_out, "checkpoint to write")->required();
    tr->add_option("--log", tr_log, "training log CSV");
    tr->add_option("--dim", tc.dim, "embedding dimension");
    tr->add_option("--lr", tc.learning_rate, "learning rate");
    tr->add_option("--batch-size", tc.batch_size, "positives per batch");
    tr->add_option("--negatives", tc.negatives, "corruptions per positive");
    tr->add_option("--margin", tc.margin, "loss margin gamma");
    tr->add_option("--adv-temp", tc.adv_temp, "self-adversarial temperature alpha");
    tr->add_option("--epochs", tc.epochs, "training epochs");
    tr->add_option("--patience", tc.patience, "validation checks without improvement");
    tr->add_option("--optimizer", tc.optimizer, "sgd|adam");
    tr->add_option("--valid-every", tc.valid_every, "epochs between validation checks");
    tr->add_option("--valid-sample", tc.valid_sample, "validation query sample (0: full)");
    tr->add_option("--seed", tc.seed, "RNG seed")->envname("KGPAT_SEED");
    tr->add_option("--threads", tc.threads, "worker threads")->envname("KGPAT_THREADS");
    tr->add_flag("--filtered-negatives", tc.filtered_negatives, "resample corruptions that hit train triples");
    tr->add_flag("--bernoulli", tc.bernoulli, "Bernoulli head/tail corruption split");
    tr->callback([&] {
        auto kg = load_kg(tr_data);
        auto family = kgpat::parse_family(tr_family);
        auto result = kgpat::train(kg, family, tc);
        kgpat::save_checkpoint(result.params, tr_out, tc.to_json());
        if (!tr_log.empty()) kgpat::write_text_file(tr_log, kgpat::train_log_csv(result.log));
        std::cout << "trained " << kgpat::family_name(family) << " d=" << tc.dim;
        if (!std::isnan(result.best_valid_mrr))
            std::cout << "  best valid MRR " << kgpat::fmt_double(result.best_valid_mrr) << " @ epoch "
                      << result.best_epoch;
        std::cout << (result.diverged ? "  [diverged: last good checkpoint saved]" : "") << "\n";
        if (result.diverged) throw kgpat::NumericError("training diverged");
    });

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "filtered link-prediction evaluation of a checkpoint");
    EvalCommon ef;
    ev->add_option("--data", ef.data, "dataset directory")->required()->envname("KGPAT_DATA");
    ev->add_option("--model", ef.model, "checkpoint from `kgpat train`")->required();
    ev->add_option("--rules", ef.rules, "rule file; enables per-pattern breakdown");
    ev->add_option("--out", ef.out_json, "report JSON")->required();
    ev->add_option("--csv", ef.out_csv, "flat report CSV");
    ev->add_option("--model-name", ef.model_name, "model label used in reports");
    ev->add_option("--split", ef.split, "split to evaluate");
    ev->add_option("--buckets", ef.buckets, "entity-frequency thresholds");
    ev->add_option("--min-pca", ef.min_pca, "classification PCA threshold");
    ev->add_option("--min-hc", ef.min_hc, "classification head-coverage threshold");
    ev->add_flag("--tail-only", ef.tail_only, "evaluate only (h,r,?) queries");
    ev->add_option("--threads", ef.threads, "worker threads")->envname("KGPAT_THREADS");
    ev->callback([&] {
        auto kg = load_kg(ef.data);
        auto params = load_model(ef.model, kg);
        kgpat::PatternAssignment assignment;
        bool have_patterns = false;
        if (!ef.rules.empty()) {
            require_file(ef.rules, "mine");
            auto rules = kgpat::parse_rule_file(kgpat::read_text_file(ef.rules), kg.relations,
                                                kg.relation_space());
            assignment = kgpat::classify_relations(rules, kg.relation_space(),
                                                   {ef.min_pca, ef.min_hc});
            have_patterns = true;
        }
        kgpat::BaseScorer scorer(params);
        auto report = run_eval(scorer, kg, ef, have_patterns ? &assignment : nullptr);
        write_report(report, ef, "base");
    });

    // ---- spa-eval ----
    auto* sp = app.add_subcommand("spa-eval",
                                  "evaluation with score-based patterns adaptation rescoring");
    EvalCommon sf;
    std::string sp_delta, sp_conf_mode = "mean";
    kgpat::SpaConfig spa_cfg;
    bool lambda_given = false;
    sp->add_option("--data", sf.data, "dataset directory")->required()->envname("KGPAT_DATA");
    sp->add_option("--model", sf.model, "checkpoint from `kgpat train`")->required();
    sp->add_option("--rules", sf.rules, "rule file from `kgpat mine`")->required();
    sp->add_option("--out", sf.out_json, "SPA report JSON")->required();
    sp->add_option("--csv", sf.out_csv, "flat report CSV");
    sp->add_option("--delta", sp_delta, "side-by-side base/SPA delta CSV");
    sp->add_option("--model-name", sf.model_name, "model label used in reports");
    sp->add_option("--split", sf.split, "split to evaluate");
    sp->add_option("--buckets", sf.buckets, "entity-frequency thresholds");
    sp->add_option("--min-pca", sf.min_pca, "classification PCA threshold");
    sp->add_option("--min-hc", sf.min_hc, "classification head-coverage threshold");
    auto* lsym = sp->add_option("--lambda-sym", spa_cfg.lambda_sym, "symmetric blend weight");
    auto* linv = sp->add_option("--lambda-inv", spa_cfg.lambda_inv, "inverse blend weight");
    auto* lmul = sp->add_option("--lambda-mul", spa_cfg.lambda_mul, "multiple blend weight");
    auto* lcomp = sp->add_option("--lambda-comp2", spa_cfg.lambda_comp2, "compositional2 blend weight");
    sp->add_option("--conf-mode", sp_conf_mode, "rule confidence aggregation: mean|pca");
    sp->add_flag("--tail-only", sf.tail_only, "evaluate only (h,r,?) queries");
    sp->add_option("--threads", sf.threads, "worker threads")->envname("KGPAT_THREADS");
    sp->callback([&] {
        auto kg = load_kg(sf.data);
        auto params = load_model(sf.model, kg);
        require_file(sf.rules, "mine");
        auto rules = kgpat::parse_rule_file(kgpat::read_text_file(sf.rules), kg.relations,
                                            kg.relation_space());
        lambda_given = lsym->count() || linv->count() || lmul->count() || lcomp->count();
        kgpat::SpaConfig cfg = spa_cfg;
        if (!lambda_given) {
            cfg = kgpat::SpaConfig::defaults_for(params.family);
        } else {
            if (!lsym->count()) cfg.lambda_sym = 0;
            if (!linv->count()) cfg.lambda_inv = 0;
            if (!lmul->count()) cfg.lambda_mul = 0;
            if (!lcomp->count()) cfg.lambda_comp2 = 0;
        }
        if (sp_conf_mode == "pca") cfg.aggregation = kgpat::ConfidenceAggregation::PcaOnly;
        else if (sp_conf_mode != "mean") throw kgpat::ConfigError("--conf-mode must be mean or pca");

        kgpat::ClassifyConfig ccfg{sf.min_pca, sf.min_hc};
        auto assignment = kgpat::classify_relations(rules, kg.relation_space(), ccfg);
        auto rulesets = kgpat::build_spa_rulesets(rules, kg.relation_space(), ccfg, cfg.aggregation);

        kgpat::BaseScorer base_scorer(params);
        auto base_report = run_eval(base_scorer, kg, sf, &assignment);
        kgpat::SpaScorer spa_scorer(params, rulesets, cfg);
        auto spa_report = run_eval(spa_scorer, kg, sf, &assignment);
        write_report(spa_report, sf, "spa");

        if (!sp_delta.empty()) {
            std::string csv = "pattern,metric,base,spa,delta\n";
            auto add = [&](const std::string& pattern, const kgpat::Metrics& b, const kgpat::Metrics& s) {
                if (!b.defined() || !s.defined()) return;
                auto row = [&](const char* name, double bv, double sv) {
                    csv += pattern + ',' + name + ',' + kgpat::fmt_double(bv) + ',' +
                           kgpat::fmt_double(sv) + ',' + kgpat::fmt_double(sv - bv) + '\n';
                };
                row("mrr", b.mrr, s.mrr);
                row("hits1", b.hits1, s.hits1);
                row("hits3", b.hits3, s.hits3);
                row("hits10", b.hits10, s.hits10);
            };
            add("all", base_report.overall, spa_report.overall);
            for (const auto& [p, m] : base_report.per_pattern) {
                auto it = spa_report.per_pattern.find(p);
                if (it != spa_report.per_pattern.end()) add(p, m, it->second);
            }
            kgpat::write_text_file(sp_delta, csv);
        }
    });

    // ---- report ----
    auto* rp = app.add_subcommand("report", "merge eval reports into one comparison CSV");
    std::vector<std::string> rp_inputs;
    std::string rp_out;
    rp->add_option("--out", rp_out, "comparison CSV")->required();
    rp->add_option("inputs", rp_inputs, "report JSON files")->required()->expected(-1);
    rp->callback([&] {
        std::string csv = kgpat::report_csv_header();
        for (const auto& path : rp_inputs) {
            require_file(path, "eval");
            json j;
            try {
                j = json::parse(kgpat::read_text_file(path));
            } catch (const std::exception& e) {
                throw kgpat::DataError("cannot parse report " + path + ": " + e.what());
            }
            kgpat::append_report_csv_rows(csv, j);
        }
        kgpat::write_text_file(rp_out, csv);
        std::cout << "merged " << rp_inputs.size() << " report(s) into " << rp_out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const kgpat::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const kgpat::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const kgpat::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
