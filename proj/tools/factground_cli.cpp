// factground: file-based pipeline driver.
//
// Subcommands: gen-gold, gen-synth, train, predict, assess, evaluate,
// concordance, ablate, validate-schema. Every artifact directory receives a
// meta.json echoing the resolved config, seed, inputs, and lexicon so the run
// can be regenerated byte-for-byte.
//
// Exit codes: 0 success, 2 usage error, 3 schema error, 4 numerical failure.

#include <CLI11.hpp>

#include <factground/error.hpp>
#include <factground/ffl.hpp>
#include <factground/geometry.hpp>
#include <factground/lexicon.hpp>
#include <factground/model.hpp>
#include <factground/perturb.hpp>
#include <factground/record.hpp>
#include <factground/scoring.hpp>
#include <factground/split.hpp>
#include <factground/toyworld.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace factground;

namespace {

// ---------------------------------------------------------------- utilities

std::string out_root_default() {
    if (const char* env = std::getenv("FACTGROUND_OUT_ROOT"); env && *env) return env;
    return ".";
}

fs::path resolve_out(const std::string& out) {
    fs::path p(out);
    if (p.is_absolute()) return p;
    return fs::path(out_root_default()) / p;
}

void write_json_file(const fs::path& path, const nlohmann::json& j, int indent = 1) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot write " + path.string());
    f << j.dump(indent) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot open " + path);
    try {
        nlohmann::json j;
        f >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": invalid JSON: " + e.what());
    }
}

// Every artifact embeds the exact inputs that produced it.
void write_meta(const fs::path& dir, const std::string& command, std::uint64_t seed,
                const nlohmann::json& config, const nlohmann::json& inputs,
                const Lexicon& lex) {
    nlohmann::json meta{{"format_version", 1}, {"tool", "factground"},      {"command", command},
                        {"seed", seed},        {"config", config},          {"inputs", inputs},
                        {"lexicon", lex.to_json()}};
    write_json_file(dir / "meta.json", meta);
}

std::map<std::string, ToyImage> load_images(const std::vector<Sample>& samples,
                                            const std::string& corpus_path) {
    std::map<std::string, ToyImage> images;
    for (const auto& s : samples) {
        if (images.count(s.image_id)) continue;
        const std::string p = resolve_image_ref(corpus_path, s.image_ref);
        images.emplace(s.image_id, toy_image_from_png(p, s.image_id));
    }
    return images;
}

nlohmann::json box_array(const BBox& b) { return nlohmann::json::array({b.x, b.y, b.w, b.h}); }

// ------------------------------------------------------------ shared options

struct FcOverrides {
    std::optional<int> epochs, batch_size, patch_size, image_hidden, text_hidden, reg_hidden,
        d_joint, d_tok, warmup_steps;
    std::optional<double> tau, lr_max, dropout, weight_decay, lambda_supcon, lambda_l1,
        lambda_giou, lambda_mse, lambda_bce;
    std::optional<std::string> mode;
    bool ffl3 = false;
    bool paper_literal_giou = false;
    bool incl_positive_denominator = false;
    bool cross_sample_negatives = false;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch-size", batch_size, "minibatch size");
        cmd->add_option("--patch-size", patch_size, "image patch size");
        cmd->add_option("--image-hidden", image_hidden, "image encoder hidden width");
        cmd->add_option("--text-hidden", text_hidden, "text encoder hidden width");
        cmd->add_option("--reg-hidden", reg_hidden, "regressor hidden width");
        cmd->add_option("--d-joint", d_joint, "joint embedding dimension");
        cmd->add_option("--d-tok", d_tok, "token embedding dimension");
        cmd->add_option("--warmup-steps", warmup_steps, "linear LR warmup steps");
        cmd->add_option("--tau", tau, "contrastive temperature");
        cmd->add_option("--lr-max", lr_max, "peak learning rate");
        cmd->add_option("--dropout", dropout, "regressor dropout rate");
        cmd->add_option("--weight-decay", weight_decay, "AdamW weight decay");
        cmd->add_option("--lambda-supcon", lambda_supcon, "contrastive loss weight");
        cmd->add_option("--lambda-l1", lambda_l1, "box L1 loss weight");
        cmd->add_option("--lambda-giou", lambda_giou, "box GIoU loss weight");
        cmd->add_option("--lambda-mse", lambda_mse, "box MSE loss weight");
        cmd->add_option("--lambda-bce", lambda_bce, "veracity BCE loss weight");
        cmd->add_option("--mode", mode, "ablation mode: FCRegComb|FCRegBCE|FCRegSep|FCRegDual");
        cmd->add_flag("--ffl3", ffl3, "encode 3-field FFL text (drop anatomy slot)");
        cmd->add_flag("--paper-literal-giou", paper_literal_giou,
                      "use the intersection-based GIoU hull penalty");
        cmd->add_flag("--incl-positive-denominator", incl_positive_denominator,
                      "include the positive pair in the contrastive denominator");
        cmd->add_flag("--cross-sample-negatives", cross_sample_negatives,
                      "pool fake findings across the batch as negatives");
    }

    FCConfig apply(FCConfig cfg) const {
        if (epochs) cfg.epochs = *epochs;
        if (batch_size) cfg.batch_size = *batch_size;
        if (patch_size) cfg.patch_size = *patch_size;
        if (image_hidden) cfg.image_hidden = *image_hidden;
        if (text_hidden) cfg.text_hidden = *text_hidden;
        if (reg_hidden) cfg.reg_hidden = *reg_hidden;
        if (d_joint) cfg.d_joint = *d_joint;
        if (d_tok) cfg.d_tok = *d_tok;
        if (warmup_steps) cfg.warmup_steps = *warmup_steps;
        if (tau) cfg.tau = *tau;
        if (lr_max) cfg.lr_max = *lr_max;
        if (dropout) cfg.dropout = *dropout;
        if (weight_decay) cfg.weight_decay = *weight_decay;
        if (lambda_supcon) cfg.lambda_supcon = *lambda_supcon;
        if (lambda_l1) cfg.lambda_l1 = *lambda_l1;
        if (lambda_giou) cfg.lambda_giou = *lambda_giou;
        if (lambda_mse) cfg.lambda_mse = *lambda_mse;
        if (lambda_bce) cfg.lambda_bce = *lambda_bce;
        if (mode) cfg.mode = ablation_mode_from_string(*mode);
        if (ffl3) cfg.text_mode = TextMode::ffl3;
        if (paper_literal_giou) cfg.giou_convention = GiouConvention::paper_literal;
        if (incl_positive_denominator) cfg.incl_positive_denominator = true;
        if (cross_sample_negatives) cfg.cross_sample_negatives = true;
        return cfg;
    }
};

// ----------------------------------------------------------------- gen-gold

struct GenGoldArgs {
    int n = 500;
    std::uint64_t seed = 0;
    std::string out;
    std::string lexicon = "data/lexicon.json";
    std::string config;
    std::optional<double> noise_level;
    std::optional<int> image_size;
};

int cmd_gen_gold(const GenGoldArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    ToyConfig cfg;
    if (!a.config.empty()) cfg = toy_config_from_json(read_json_file(a.config));
    if (a.noise_level) cfg.noise_level = *a.noise_level;
    if (a.image_size) cfg.image_size = *a.image_size;

    GoldCorpus corpus = generate_gold(a.n, lex, cfg, a.seed);

    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir / "images");
    for (const auto& img : corpus.images) {
        write_toy_png((dir / "images" / (img.image_id + ".png")).string(), img);
    }
    write_corpus((dir / "gold.jsonl").string(), corpus.samples);
    write_meta(dir, "gen-gold", a.seed, toy_config_to_json(cfg),
               nlohmann::json{{"n", a.n}, {"lexicon", a.lexicon}}, lex);
    std::printf("gen-gold: wrote %zu samples and %zu images to %s\n", corpus.samples.size(),
                corpus.images.size(), dir.string().c_str());
    return 0;
}

// ---------------------------------------------------------------- gen-synth

struct GenSynthArgs {
    std::string in;
    std::uint64_t seed = 0;
    std::string out;
    std::string lexicon = "data/lexicon.json";
    std::string config;
    bool table2 = false;
    bool reverse_negatives = false;
    std::optional<int> n_reversal, n_relocate, n_substitute;
    std::optional<double> overlap_threshold;
};

int cmd_gen_synth(const GenSynthArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    PerturbConfig cfg;
    if (!a.config.empty()) cfg = perturb_config_from_json(read_json_file(a.config));
    if (a.table2) cfg.n_relocate = 2;  // 1 reversal + 2 relocations + 1 substitution
    if (a.n_reversal) cfg.n_reversal = *a.n_reversal;
    if (a.n_relocate) cfg.n_relocate = *a.n_relocate;
    if (a.n_substitute) cfg.n_substitute = *a.n_substitute;
    if (a.overlap_threshold) cfg.overlap_threshold = *a.overlap_threshold;
    if (a.reverse_negatives) cfg.reverse_negatives = true;

    std::vector<Sample> gold = read_corpus(a.in, /*gold_only=*/true);
    SynthCorpus synth = perturb_corpus(gold, lex, cfg, a.seed);

    // The synthetic corpus lives in a different directory than the gold corpus,
    // so relative image references are re-pointed at the original image files.
    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    const fs::path out_abs = fs::absolute(dir).lexically_normal();
    for (auto& s : synth.samples) {
        const fs::path img_abs =
            fs::absolute(resolve_image_ref(a.in, s.image_ref)).lexically_normal();
        s.image_ref = img_abs.lexically_proximate(out_abs).generic_string();
    }

    write_corpus((dir / "synth.jsonl").string(), synth.samples);
    write_json_file(dir / "report.json", perturb_report_to_json(synth.report));
    write_meta(dir, "gen-synth", a.seed, perturb_config_to_json(cfg),
               nlohmann::json{{"gold", a.in}, {"lexicon", a.lexicon}}, lex);
    std::printf(
        "gen-synth: %zu samples; reversals %d/%d, relocations %d/%d, substitutions %d/%d\n",
        synth.samples.size(), synth.report.reversal_produced, synth.report.reversal_requested,
        synth.report.relocate_produced, synth.report.relocate_requested,
        synth.report.substitute_produced, synth.report.substitute_requested);
    return 0;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
    std::string in;
    std::uint64_t seed = 0;
    std::string out;
    std::string lexicon = "data/lexicon.json";
    std::string config;
    int folds = 3;
    int fold = 0;
    FcOverrides ov;
};

struct LoadedSplit {
    std::vector<Sample> train, val, test;
    Split split;
};

LoadedSplit split_corpus(const std::vector<Sample>& samples, int folds, int fold,
                         std::uint64_t seed) {
    LoadedSplit out;
    out.split = make_split(samples.size(), folds, fold, seed);
    for (auto i : out.split.train) out.train.push_back(samples[i]);
    for (auto i : out.split.val) out.val.push_back(samples[i]);
    for (auto i : out.split.test) out.test.push_back(samples[i]);
    return out;
}

nlohmann::json split_to_json(const Split& sp) {
    return nlohmann::json{{"train", sp.train}, {"val", sp.val}, {"test", sp.test}};
}

int cmd_train(const TrainArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    FCConfig cfg;
    if (!a.config.empty()) cfg = fc_config_from_json(read_json_file(a.config));
    cfg = a.ov.apply(cfg);

    const std::vector<Sample> samples = read_corpus(a.in);
    const auto images = load_images(samples, a.in);
    LoadedSplit sp = split_corpus(samples, a.folds, a.fold, a.seed);

    Checkpoint ck = train(sp.train, sp.val, images, lex, cfg, a.seed);

    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    save_checkpoint(ck, (dir / "checkpoint.json").string());
    write_training_log(ck, (dir / "train_log.jsonl").string());
    write_json_file(dir / "split.json",
                    nlohmann::json{{"folds", a.folds},
                                   {"fold", a.fold},
                                   {"seed", a.seed},
                                   {"indices", split_to_json(sp.split)}});
    write_meta(dir, "train", a.seed, fc_config_to_json(cfg),
               nlohmann::json{{"corpus", a.in},
                              {"lexicon", a.lexicon},
                              {"folds", a.folds},
                              {"fold", a.fold}},
               lex);

    auto [acc, miou] = eval_accuracy_miou(ck.model, sp.test, images, lex);
    std::printf("train: %s; test accuracy %.4f, test mIoU %.4f\n",
                (dir / "checkpoint.json").string().c_str(), acc, miou);
    return 0;
}

// ------------------------------------------------------------------ predict

struct PredictArgs {
    std::string checkpoint;
    std::string in;
    std::string out;
    std::string lexicon = "data/lexicon.json";
};

int cmd_predict(const PredictArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const std::vector<Sample> samples = read_corpus(a.in);
    const auto images = load_images(samples, a.in);

    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    std::ofstream f(dir / "predictions.jsonl", std::ios::binary);
    if (!f) throw UsageError("cannot write predictions.jsonl");
    for (const auto& s : samples) {
        const auto z_img = encode_image(ck.model, images.at(s.image_id));
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& g : s.findings) {
            const Prediction p = predict_one(ck.model, z_img, g.ffl, lex);
            nlohmann::json row{{"ffl", serialize_ffl(g.ffl)},
                               {"box", box_array(p.box)},
                               {"e_p", p.e_p},
                               {"ok", p.ok}};
            if (!p.ok) row["error"] = p.error;
            rows.push_back(std::move(row));
        }
        f << nlohmann::json{{"image_id", s.image_id}, {"predictions", rows}}.dump() << "\n";
    }
    write_meta(dir, "predict", ck.seed, fc_config_to_json(ck.model.cfg),
               nlohmann::json{{"checkpoint", a.checkpoint},
                              {"corpus", a.in},
                              {"lexicon", a.lexicon}},
               lex);
    std::printf("predict: wrote predictions for %zu samples to %s\n", samples.size(),
                dir.string().c_str());
    return 0;
}

// ------------------------------------------------------------------- assess

struct AssessArgs {
    std::string checkpoint;
    std::string report;
    std::string images_dir;
    std::string out;
    std::string lexicon = "data/lexicon.json";
    bool paper_literal_rq = false;
    bool overlays = false;
};

// Report rows are {"image_id": ..., "findings": ["type|polarity|finding|anatomy", ...]}.
struct ReportRow {
    std::string image_id;
    std::vector<FFL> findings;
};

std::vector<ReportRow> read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open report file: " + path);
    std::vector<ReportRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path + ":" + std::to_string(lineno) + ": invalid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("image_id") || !j.contains("findings")) {
            throw SchemaError(path + ":" + std::to_string(lineno) +
                              ": report rows need image_id and findings");
        }
        ReportRow row;
        row.image_id = j.at("image_id").get<std::string>();
        for (const auto& fj : j.at("findings")) {
            row.findings.push_back(parse_ffl(fj.get<std::string>()));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

int cmd_assess(const AssessArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const RegionLayout layout = RegionLayout::square(lex);
    const RqConvention conv =
        a.paper_literal_rq ? RqConvention::paper_literal : RqConvention::standard;
    const std::vector<ReportRow> report = read_report(a.report);

    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    if (a.overlays) fs::create_directories(dir / "overlays");
    std::ofstream f(dir / "assessments.jsonl", std::ios::binary);
    if (!f) throw UsageError("cannot write assessments.jsonl");

    for (const auto& row : report) {
        const fs::path img_path = fs::path(a.images_dir) / (row.image_id + ".png");
        const ToyImage img = toy_image_from_png(img_path.string(), row.image_id);
        std::vector<IndicatedFinding> indicated;
        for (const auto& ffl : row.findings) {
            indicated.push_back(make_indicated(lex.canonicalize(ffl), layout));
        }
        const ReportAssessment ra = assess_report(ck.model, img, indicated, lex, conv);

        nlohmann::json rows = nlohmann::json::array();
        std::vector<OverlayBox> overlay;
        for (const auto& r : ra.rows) {
            nlohmann::json rj{{"ffl", serialize_ffl(r.ffl)},
                              {"indicated_box", box_array(r.indicated_box)},
                              {"predicted_box", box_array(r.predicted_box)},
                              {"e_p", r.e_p},
                              {"iou", r.iou},
                              {"ok", r.ok}};
            if (!r.ok) rj["error"] = r.error;
            rows.push_back(std::move(rj));
            if (a.overlays) {
                overlay.push_back({r.indicated_box, OverlayColor::indicated,
                                   r.ffl.core_finding});
                overlay.push_back({r.predicted_box, OverlayColor::predicted,
                                   r.ffl.core_finding});
            }
        }
        f << nlohmann::json{{"image_id", row.image_id},
                            {"fc_score", ra.fc_score},
                            {"rq", ra.rq},
                            {"rows", rows}}
                 .dump()
          << "\n";
        if (a.overlays) {
            render_overlay((dir / "overlays" / (row.image_id + ".png")).string(), img, overlay);
        }
    }
    write_meta(dir, "assess", ck.seed,
               nlohmann::json{{"model", fc_config_to_json(ck.model.cfg)},
                              {"rq_convention", to_string(conv)}},
               nlohmann::json{{"checkpoint", a.checkpoint},
                              {"report", a.report},
                              {"images", a.images_dir},
                              {"lexicon", a.lexicon}},
               lex);
    std::printf("assess: scored %zu reports to %s\n", report.size(), dir.string().c_str());
    return 0;
}

// ----------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string checkpoint;
    std::string in;
    std::string out;
    std::string lexicon = "data/lexicon.json";
};

int cmd_evaluate(const EvaluateArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const std::vector<Sample> samples = read_corpus(a.in);
    const auto images = load_images(samples, a.in);
    auto [acc, miou] = eval_accuracy_miou(ck.model, samples, images, lex);

    std::size_t n_findings = 0;
    for (const auto& s : samples) n_findings += s.findings.size();

    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    write_json_file(dir / "metrics.json", nlohmann::json{{"accuracy", acc},
                                                         {"miou", miou},
                                                         {"n_samples", samples.size()},
                                                         {"n_findings", n_findings}});
    write_meta(dir, "evaluate", ck.seed, fc_config_to_json(ck.model.cfg),
               nlohmann::json{{"checkpoint", a.checkpoint},
                              {"corpus", a.in},
                              {"lexicon", a.lexicon}},
               lex);
    std::printf("evaluate: accuracy %.4f, mIoU %.4f over %zu samples\n", acc, miou,
                samples.size());
    return 0;
}

// -------------------------------------------------------------- concordance

struct ConcordanceArgs {
    std::string checkpoint;
    std::string gold;
    std::string profiles;
    std::uint64_t seed = 0;
    std::string out;
    std::string lexicon = "data/lexicon.json";
    bool paper_literal_rq = false;
};

std::vector<GeneratorProfile> read_profiles(const std::string& path) {
    const nlohmann::json j = read_json_file(path);
    if (!j.is_array() || j.empty()) throw SchemaError(path + ": expected a non-empty array");
    std::vector<GeneratorProfile> out;
    for (const auto& pj : j) {
        GeneratorProfile p;
        p.name = pj.at("name").get<std::string>();
        p.p_reverse = pj.value("p_reverse", 0.0);
        p.p_relocate = pj.value("p_relocate", 0.0);
        p.p_substitute = pj.value("p_substitute", 0.0);
        validate_profile(p);
        out.push_back(std::move(p));
    }
    return out;
}

nlohmann::json profiles_to_json(const std::vector<GeneratorProfile>& profiles) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : profiles) {
        out.push_back(nlohmann::json{{"name", p.name},
                                     {"p_reverse", p.p_reverse},
                                     {"p_relocate", p.p_relocate},
                                     {"p_substitute", p.p_substitute}});
    }
    return out;
}

int cmd_concordance(const ConcordanceArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    const std::vector<Sample> gold = read_corpus(a.gold, /*gold_only=*/true);
    const auto images = load_images(gold, a.gold);
    const RqConvention conv =
        a.paper_literal_rq ? RqConvention::paper_literal : RqConvention::standard;
    const std::vector<GeneratorProfile> profiles =
        a.profiles.empty() ? default_generator_profiles() : read_profiles(a.profiles);

    const ConcordanceReport rep = concordance_study(ck.model, gold, images, lex, profiles,
                                                    a.seed, conv);

    nlohmann::json gens = nlohmann::json::array();
    for (const auto& g : rep.generators) {
        gens.push_back(nlohmann::json{{"name", g.name},
                                      {"error_rate", g.error_rate},
                                      {"mean_rq_ap", g.mean_rq_ap},
                                      {"mean_rq_ag", g.mean_rq_ag}});
    }
    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    write_json_file(dir / "concordance.json",
                    nlohmann::json{{"generators", gens},
                                   {"ccc", rep.ccc_value},
                                   {"rq_ag_monotone", rep.rq_ag_monotone},
                                   {"rq_convention", to_string(conv)}});
    write_meta(dir, "concordance", a.seed,
               nlohmann::json{{"model", fc_config_to_json(ck.model.cfg)},
                              {"profiles", profiles_to_json(profiles)},
                              {"rq_convention", to_string(conv)}},
               nlohmann::json{{"checkpoint", a.checkpoint},
                              {"gold", a.gold},
                              {"lexicon", a.lexicon}},
               lex);
    std::printf("concordance: ccc %.4f, rq_ag monotone %s, %zu generators\n", rep.ccc_value,
                rep.rq_ag_monotone ? "yes" : "no", rep.generators.size());
    for (const auto& g : rep.generators) {
        std::printf("  %-10s error %.2f  rq_ap %.4f  rq_ag %.4f\n", g.name.c_str(),
                    g.error_rate, g.mean_rq_ap, g.mean_rq_ag);
    }
    return 0;
}

// ------------------------------------------------------------------- ablate

struct AblateArgs {
    std::string in;
    std::uint64_t seed = 0;
    std::string out;
    std::string lexicon = "data/lexicon.json";
    std::string config;
    int folds = 3;
    int fold = 0;
    FcOverrides ov;
};

int cmd_ablate(const AblateArgs& a) {
    const Lexicon lex = Lexicon::load(a.lexicon);
    FCConfig base;
    if (!a.config.empty()) base = fc_config_from_json(read_json_file(a.config));
    base = a.ov.apply(base);

    const std::vector<Sample> samples = read_corpus(a.in);
    const auto images = load_images(samples, a.in);
    LoadedSplit sp = split_corpus(samples, a.folds, a.fold, a.seed);

    const AblationMode modes[] = {AblationMode::comb, AblationMode::bce, AblationMode::sep,
                                  AblationMode::dual};
    nlohmann::json results = nlohmann::json::array();
    std::vector<std::pair<double, std::string>> ranking;
    for (const AblationMode mode : modes) {
        FCConfig cfg = base;
        cfg.mode = mode;
        const Checkpoint ck = train(sp.train, sp.val, images, lex, cfg, a.seed);
        auto [acc, miou] = eval_accuracy_miou(ck.model, sp.test, images, lex);
        results.push_back(nlohmann::json{{"mode", to_string(mode)},
                                         {"accuracy", acc},
                                         {"miou", miou}});
        ranking.emplace_back(miou, to_string(mode));
        std::printf("ablate: %-10s accuracy %.4f  mIoU %.4f\n", to_string(mode).c_str(), acc,
                    miou);
    }
    std::stable_sort(ranking.begin(), ranking.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    nlohmann::json ranked = nlohmann::json::array();
    for (const auto& [miou, name] : ranking) ranked.push_back(name);

    const fs::path dir = resolve_out(a.out);
    fs::create_directories(dir);
    write_json_file(dir / "ablate.json", nlohmann::json{{"modes", results},
                                                        {"ranked_by_miou", ranked},
                                                        {"folds", a.folds},
                                                        {"fold", a.fold}});
    write_meta(dir, "ablate", a.seed, fc_config_to_json(base),
               nlohmann::json{{"corpus", a.in},
                              {"lexicon", a.lexicon},
                              {"folds", a.folds},
                              {"fold", a.fold}},
               lex);
    return 0;
}

// ---------------------------------------------------------- validate-schema

struct ValidateArgs {
    std::string kind;
    std::string in;
    std::string lexicon;
};

int cmd_validate_schema(const ValidateArgs& a) {
    if (a.kind == "gold" || a.kind == "synth") {
        const std::vector<Sample> samples = read_corpus(a.in, a.kind == "gold");
        if (!a.lexicon.empty()) {
            const Lexicon lex = Lexicon::load(a.lexicon);
            for (const auto& s : samples) {
                for (const auto& g : s.findings) lex.canonicalize(g.ffl);
            }
        }
        std::printf("validate-schema: %s corpus OK (%zu samples)\n", a.kind.c_str(),
                    samples.size());
    } else if (a.kind == "report") {
        const std::vector<ReportRow> rows = read_report(a.in);
        if (!a.lexicon.empty()) {
            const Lexicon lex = Lexicon::load(a.lexicon);
            for (const auto& r : rows) {
                for (const auto& f : r.findings) lex.canonicalize(f);
            }
        }
        std::printf("validate-schema: report OK (%zu rows)\n", rows.size());
    } else if (a.kind == "checkpoint") {
        const Checkpoint ck = load_checkpoint(a.in);
        std::printf("validate-schema: checkpoint OK (%zu tensors)\n", ck.model.tensors().size());
    } else if (a.kind == "lexicon") {
        const Lexicon lex = Lexicon::load(a.in);
        std::printf("validate-schema: lexicon OK (%zu findings, %zu regions)\n",
                    lex.findings().size(), lex.regions().size());
    } else {
        throw UsageError("unknown schema kind: " + a.kind +
                         " (expected gold|synth|report|checkpoint|lexicon)");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phrase-grounded fact-checking pipeline"};
    app.require_subcommand(1);

    GenGoldArgs gg;
    auto* c_gg = app.add_subcommand("gen-gold", "generate a gold toy corpus with images");
    c_gg->add_option("--n", gg.n, "number of samples")->check(CLI::PositiveNumber);
    c_gg->add_option("--seed", gg.seed, "random seed");
    c_gg->add_option("--out", gg.out, "output directory")->required();
    c_gg->add_option("--lexicon", gg.lexicon, "lexicon JSON path");
    c_gg->add_option("--config", gg.config, "toy-world config JSON");
    c_gg->add_option("--noise-level", gg.noise_level, "additive noise level override");
    c_gg->add_option("--image-size", gg.image_size, "image size override");

    GenSynthArgs gs;
    auto* c_gs = app.add_subcommand("gen-synth", "perturb a gold corpus into real/fake pairs");
    c_gs->add_option("--in", gs.in, "gold corpus JSONL")->required();
    c_gs->add_option("--seed", gs.seed, "random seed");
    c_gs->add_option("--out", gs.out, "output directory")->required();
    c_gs->add_option("--lexicon", gs.lexicon, "lexicon JSON path");
    c_gs->add_option("--config", gs.config, "perturbation config JSON");
    c_gs->add_flag("--table2", gs.table2, "preset: 1 reversal, 2 relocations, 1 substitution");
    c_gs->add_flag("--reverse-negatives", gs.reverse_negatives,
                   "also reverse negative-polarity findings");
    c_gs->add_option("--reversals", gs.n_reversal, "reversals per sample");
    c_gs->add_option("--relocations", gs.n_relocate, "relocations per sample");
    c_gs->add_option("--substitutions", gs.n_substitute, "substitutions per sample");
    c_gs->add_option("--overlap-threshold", gs.overlap_threshold,
                     "max IoU against the source box for relocation targets");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "train the fact-checking model");
    c_tr->add_option("--in", tr.in, "synthetic corpus JSONL")->required();
    c_tr->add_option("--seed", tr.seed, "random seed");
    c_tr->add_option("--out", tr.out, "output directory")->required();
    c_tr->add_option("--lexicon", tr.lexicon, "lexicon JSON path");
    c_tr->add_option("--config", tr.config, "model config JSON");
    c_tr->add_option("--folds", tr.folds, "number of folds");
    c_tr->add_option("--fold", tr.fold, "fold index");
    tr.ov.add_flags(c_tr);

    PredictArgs pr;
    auto* c_pr = app.add_subcommand("predict", "predict boxes and veracity for a corpus");
    c_pr->add_option("--checkpoint", pr.checkpoint, "model checkpoint")->required();
    c_pr->add_option("--in", pr.in, "corpus JSONL")->required();
    c_pr->add_option("--out", pr.out, "output directory")->required();
    c_pr->add_option("--lexicon", pr.lexicon, "lexicon JSON path");

    AssessArgs as;
    auto* c_as = app.add_subcommand("assess", "fact-check automated reports");
    c_as->add_option("--checkpoint", as.checkpoint, "model checkpoint")->required();
    c_as->add_option("--report", as.report, "report JSONL ({image_id, findings})")->required();
    c_as->add_option("--images", as.images_dir, "directory with <image_id>.png files")
        ->required();
    c_as->add_option("--out", as.out, "output directory")->required();
    c_as->add_option("--lexicon", as.lexicon, "lexicon JSON path");
    c_as->add_flag("--paper-literal-rq", as.paper_literal_rq,
                   "use the any-real + half-IoU score convention");
    c_as->add_flag("--overlays", as.overlays, "write overlay PNGs");

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "accuracy and mIoU on a labeled corpus");
    c_ev->add_option("--checkpoint", ev.checkpoint, "model checkpoint")->required();
    c_ev->add_option("--in", ev.in, "corpus JSONL")->required();
    c_ev->add_option("--out", ev.out, "output directory")->required();
    c_ev->add_option("--lexicon", ev.lexicon, "lexicon JSON path");

    ConcordanceArgs co;
    auto* c_co = app.add_subcommand("concordance",
                                    "compare model-based and ground-truth report quality");
    c_co->add_option("--checkpoint", co.checkpoint, "model checkpoint")->required();
    c_co->add_option("--gold", co.gold, "gold corpus JSONL")->required();
    c_co->add_option("--profiles", co.profiles, "generator profiles JSON (default: built-in 7)");
    c_co->add_option("--seed", co.seed, "random seed");
    c_co->add_option("--out", co.out, "output directory")->required();
    c_co->add_option("--lexicon", co.lexicon, "lexicon JSON path");
    c_co->add_flag("--paper-literal-rq", co.paper_literal_rq,
                   "use the any-real + half-IoU score convention");

    AblateArgs ab;
    auto* c_ab = app.add_subcommand("ablate", "train and compare the four ablation modes");
    c_ab->add_option("--in", ab.in, "synthetic corpus JSONL")->required();
    c_ab->add_option("--seed", ab.seed, "random seed");
    c_ab->add_option("--out", ab.out, "output directory")->required();
    c_ab->add_option("--lexicon", ab.lexicon, "lexicon JSON path");
    c_ab->add_option("--config", ab.config, "model config JSON");
    c_ab->add_option("--folds", ab.folds, "number of folds");
    c_ab->add_option("--fold", ab.fold, "fold index");
    ab.ov.add_flags(c_ab);

    ValidateArgs va;
    auto* c_va = app.add_subcommand("validate-schema", "validate a data file");
    c_va->add_option("--kind", va.kind, "gold|synth|report|checkpoint|lexicon")->required();
    c_va->add_option("--in", va.in, "file to validate")->required();
    c_va->add_option("--lexicon", va.lexicon, "lexicon for FFL validation (corpus/report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        // CLI11 returns 0 for --help; anything else is a usage error.
        return code == 0 ? 0 : 2;
    }

    try {
        if (*c_gg) return cmd_gen_gold(gg);
        if (*c_gs) return cmd_gen_synth(gs);
        if (*c_tr) return cmd_train(tr);
        if (*c_pr) return cmd_predict(pr);
        if (*c_as) return cmd_assess(as);
        if (*c_ev) return cmd_evaluate(ev);
        if (*c_co) return cmd_concordance(co);
        if (*c_ab) return cmd_ablate(ab);
        if (*c_va) return cmd_validate_schema(va);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const SchemaError& e) {
        std::fprintf(stderr, "schema error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
