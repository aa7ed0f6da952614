#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "factground/error.hpp"
#include "factground/ffl.hpp"
#include "factground/geometry.hpp"
#include "factground/json_util.hpp"
#include "factground/lexicon.hpp"
#include "factground/nn.hpp"
#include "factground/record.hpp"
#include "factground/rng.hpp"
#include "factground/toyworld.hpp"

namespace factground {

enum class AblationMode { comb, bce, sep, dual };
enum class GiouConvention { standard, paper_literal };
enum class TextMode { ffl3, ffl4 };

inline std::string to_string(AblationMode m) {
    switch (m) {
        case AblationMode::comb: return "FCRegComb";
        case AblationMode::bce: return "FCRegBCE";
        case AblationMode::sep: return "FCRegSep";
        case AblationMode::dual: return "FCRegDual";
    }
    return "?";
}

inline AblationMode ablation_mode_from_string(const std::string& s) {
    if (s == "FCRegComb") return AblationMode::comb;
    if (s == "FCRegBCE") return AblationMode::bce;
    if (s == "FCRegSep") return AblationMode::sep;
    if (s == "FCRegDual") return AblationMode::dual;
    throw SchemaError("unknown ablation mode: " + s);
}

inline std::string to_string(GiouConvention c) {
    return c == GiouConvention::standard ? "standard" : "paper-literal";
}

inline GiouConvention giou_convention_from_string(const std::string& s) {
    if (s == "standard") return GiouConvention::standard;
    if (s == "paper-literal") return GiouConvention::paper_literal;
    throw SchemaError("unknown giou convention: " + s);
}

inline std::string to_string(TextMode m) { return m == TextMode::ffl3 ? "ffl3" : "ffl4"; }

inline TextMode text_mode_from_string(const std::string& s) {
    if (s == "ffl3") return TextMode::ffl3;
    if (s == "ffl4") return TextMode::ffl4;
    throw SchemaError("unknown text mode: " + s);
}

struct FCConfig {
    double tau = 0.07;
    int d_tok = 24;
    int d_joint = 64;
    int image_size = 128;
    int patch_size = 8;
    int image_hidden = 256;
    int text_hidden = 96;
    int reg_hidden = 256;
    double dropout = 0.1;
    double lambda_l1 = 1.0;
    double lambda_giou = 1.0;
    double lambda_mse = 1.0;
    double lambda_bce = 1.0;
    double lambda_supcon = 1.0;
    double lr_max = 2e-3;
    double weight_decay = 0.01;
    int warmup_steps = 50;
    int epochs = 100;
    int batch_size = 32;
    AblationMode mode = AblationMode::comb;
    GiouConvention giou_convention = GiouConvention::standard;
    TextMode text_mode = TextMode::ffl4;
    bool incl_positive_denominator = false;
    bool cross_sample_negatives = false;
};

inline void validate_fc_config(const FCConfig& c) {
    if (!(c.tau > 0.0)) throw SchemaError("tau must be > 0");
    if (c.lambda_l1 < 0 || c.lambda_giou < 0 || c.lambda_mse < 0 || c.lambda_bce < 0 ||
        c.lambda_supcon < 0) {
        throw SchemaError("loss weights must be >= 0");
    }
    if (c.batch_size < 2) throw SchemaError("batch size must be >= 2");
    if (c.d_tok < 1 || c.d_joint < 1 || c.image_hidden < 1 || c.text_hidden < 1 || c.reg_hidden < 1) {
        throw SchemaError("layer widths must be >= 1");
    }
    if (c.patch_size < 1 || c.image_size < 1 || c.image_size % c.patch_size != 0) {
        throw SchemaError("image_size must be a positive multiple of patch_size");
    }
    if (c.dropout < 0.0 || c.dropout >= 1.0) throw SchemaError("dropout outside [0, 1)");
    if (c.epochs < 1) throw SchemaError("epochs must be >= 1");
    if (c.warmup_steps < 0) throw SchemaError("warmup_steps must be >= 0");
    if (!(c.lr_max > 0.0)) throw SchemaError("lr_max must be > 0");
    if (c.weight_decay < 0.0) throw SchemaError("weight_decay must be >= 0");
}

inline nlohmann::json fc_config_to_json(const FCConfig& c) {
    return nlohmann::json{{"tau", c.tau},
                          {"d_tok", c.d_tok},
                          {"d_joint", c.d_joint},
                          {"image_size", c.image_size},
                          {"patch_size", c.patch_size},
                          {"image_hidden", c.image_hidden},
                          {"text_hidden", c.text_hidden},
                          {"reg_hidden", c.reg_hidden},
                          {"dropout", c.dropout},
                          {"lambda_l1", c.lambda_l1},
                          {"lambda_giou", c.lambda_giou},
                          {"lambda_mse", c.lambda_mse},
                          {"lambda_bce", c.lambda_bce},
                          {"lambda_supcon", c.lambda_supcon},
                          {"lr_max", c.lr_max},
                          {"weight_decay", c.weight_decay},
                          {"warmup_steps", c.warmup_steps},
                          {"epochs", c.epochs},
                          {"batch_size", c.batch_size},
                          {"mode", to_string(c.mode)},
                          {"giou_convention", to_string(c.giou_convention)},
                          {"text_mode", to_string(c.text_mode)},
                          {"incl_positive_denominator", c.incl_positive_denominator},
                          {"cross_sample_negatives", c.cross_sample_negatives}};
}

inline FCConfig fc_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"tau", "d_tok", "d_joint", "image_size", "patch_size", "image_hidden",
                         "text_hidden", "reg_hidden", "dropout", "lambda_l1", "lambda_giou",
                         "lambda_mse", "lambda_bce", "lambda_supcon", "lr_max", "weight_decay",
                         "warmup_steps", "epochs", "batch_size", "mode", "giou_convention",
                         "text_mode", "incl_positive_denominator", "cross_sample_negatives"},
                        "model");
    FCConfig c;
    auto num = [&](const char* k, auto& field) {
        if (j.contains(k)) field = j.at(k).get<std::decay_t<decltype(field)>>();
    };
    num("tau", c.tau);
    num("d_tok", c.d_tok);
    num("d_joint", c.d_joint);
    num("image_size", c.image_size);
    num("patch_size", c.patch_size);
    num("image_hidden", c.image_hidden);
    num("text_hidden", c.text_hidden);
    num("reg_hidden", c.reg_hidden);
    num("dropout", c.dropout);
    num("lambda_l1", c.lambda_l1);
    num("lambda_giou", c.lambda_giou);
    num("lambda_mse", c.lambda_mse);
    num("lambda_bce", c.lambda_bce);
    num("lambda_supcon", c.lambda_supcon);
    num("lr_max", c.lr_max);
    num("weight_decay", c.weight_decay);
    num("warmup_steps", c.warmup_steps);
    num("epochs", c.epochs);
    num("batch_size", c.batch_size);
    if (j.contains("mode")) c.mode = ablation_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("giou_convention"))
        c.giou_convention = giou_convention_from_string(j.at("giou_convention").get<std::string>());
    if (j.contains("text_mode")) c.text_mode = text_mode_from_string(j.at("text_mode").get<std::string>());
    if (j.contains("incl_positive_denominator"))
        c.incl_positive_denominator = j.at("incl_positive_denominator").get<bool>();
    if (j.contains("cross_sample_negatives"))
        c.cross_sample_negatives = j.at("cross_sample_negatives").get<bool>();
    validate_fc_config(c);
    return c;
}

struct Prediction {
    BBox box;        // all four coordinates strictly inside (0,1)
    double e_p = 0;  // veracity probability
    bool ok = true;
    std::string error;
};

// --- standalone loss functions ----------------------------------------------

// Contrastive loss over similarity values: per real similarity, -log of
// exp(s_real/tau) over the sum of exp(s_fake/tau) across the fakes only
// (optionally including the positive term), averaged over reals. The
// fakes-only form can be negative.
inline double supcon_from_sims(const std::vector<double>& s_real, const std::vector<double>& s_fake,
                               double tau, bool incl_positive = false) {
    if (s_real.empty() || s_fake.empty()) {
        throw UsageError("contrastive loss needs at least one real and one fake");
    }
    if (!(tau > 0.0)) throw UsageError("tau must be positive");
    double total = 0.0;
    for (double sr : s_real) {
        double mx = incl_positive ? sr / tau : -1e300;
        for (double sf : s_fake) mx = std::max(mx, sf / tau);
        double denom = incl_positive ? std::exp(sr / tau - mx) : 0.0;
        for (double sf : s_fake) denom += std::exp(sf / tau - mx);
        total += -(sr / tau) + mx + std::log(denom);
    }
    return total / static_cast<double>(s_real.size());
}

// Same value plus d(loss)/d(similarity) for reals and fakes.
inline double supcon_sim_grads(const std::vector<double>& s_real, const std::vector<double>& s_fake,
                               double tau, bool incl_positive, std::vector<double>& d_real,
                               std::vector<double>& d_fake) {
    const double loss = supcon_from_sims(s_real, s_fake, tau, incl_positive);
    const double nr = static_cast<double>(s_real.size());
    d_real.assign(s_real.size(), 0.0);
    d_fake.assign(s_fake.size(), 0.0);
    for (std::size_t r = 0; r < s_real.size(); ++r) {
        double mx = incl_positive ? s_real[r] / tau : -1e300;
        for (double sf : s_fake) mx = std::max(mx, sf / tau);
        const double pos = incl_positive ? std::exp(s_real[r] / tau - mx) : 0.0;
        double denom = pos;
        for (double sf : s_fake) denom += std::exp(sf / tau - mx);
        d_real[r] += (-1.0 / tau + (incl_positive ? pos / denom / tau : 0.0)) / nr;
        for (std::size_t f = 0; f < s_fake.size(); ++f) {
            d_fake[f] += std::exp(s_fake[f] / tau - mx) / denom / tau / nr;
        }
    }
    return loss;
}

inline double supcon_loss(const std::vector<double>& z_img,
                          const std::vector<std::vector<double>>& reals,
                          const std::vector<std::vector<double>>& fakes, double tau,
                          bool incl_positive = false) {
    auto dot = [&](const std::vector<double>& a) {
        if (a.size() != z_img.size()) throw UsageError("embedding dimensions differ");
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * z_img[i];
        return s;
    };
    std::vector<double> sr, sf;
    for (const auto& r : reals) sr.push_back(dot(r));
    for (const auto& f : fakes) sf.push_back(dot(f));
    return supcon_from_sims(sr, sf, tau, incl_positive);
}

struct RegWeights {
    double l1 = 1.0, giou = 1.0, mse = 1.0, bce = 1.0;
};

inline constexpr double kProbClamp = 1e-7;

inline double bce_clamped(double p, int label) {
    const double pc = std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
    return -(label ? std::log(pc) : std::log(1.0 - pc));
}

// Box-only part of the grounding loss plus its gradient w.r.t. the predicted
// coordinates (probability space).
inline double box_loss_grad(const BBox& p, const BBox& t, const RegWeights& w,
                            GiouConvention conv, std::array<double, 4>* dp) {
    const double dx[4] = {p.x - t.x, p.y - t.y, p.w - t.w, p.h - t.h};
    double l1 = 0.0, mse = 0.0;
    for (double d : dx) {
        l1 += std::abs(d);
        mse += d * d;
    }
    const GiouGrad gg = giou_grad(p, t, conv == GiouConvention::paper_literal);
    const double loss = w.l1 * l1 + w.giou * (1.0 - gg.value) + w.mse * mse;
    if (dp) {
        for (int i = 0; i < 4; ++i) {
            const double sgn = dx[i] > 0 ? 1.0 : (dx[i] < 0 ? -1.0 : 0.0);
            (*dp)[i] = w.l1 * sgn + 2.0 * w.mse * dx[i] - w.giou * gg.d[i];
        }
    }
    return loss;
}

// Grounding loss for one finding: L1 + (1 - giou) + squared error on the box,
// plus binary cross entropy on the veracity probability.
inline double regression_loss(const Prediction& pred, const BBox& target_box, int target_e,
                              const RegWeights& w,
                              GiouConvention conv = GiouConvention::standard) {
    if (target_e != 0 && target_e != 1) throw UsageError("veracity target must be 0 or 1");
    return box_loss_grad(pred.box, target_box, w, conv, nullptr) +
           w.bce * bce_clamped(pred.e_p, target_e);
}

// --- model -------------------------------------------------------------------

struct TokenIds {
    int pol = 0, find = 0, anat = 0;
};

inline std::vector<double> extract_patch_features(const ToyImage& img, int patch) {
    const int n = img.size / patch;
    std::vector<double> feat(static_cast<std::size_t>(n) * n, 0.0);
    for (int by = 0; by < n; ++by) {
        for (int bx = 0; bx < n; ++bx) {
            double acc = 0.0;
            for (int y = 0; y < patch; ++y) {
                for (int x = 0; x < patch; ++x) {
                    acc += img.at(bx * patch + x, by * patch + y);
                }
            }
            feat[static_cast<std::size_t>(by) * n + bx] = acc / (patch * patch);
        }
    }
    return feat;
}

class FCModel {
  public:
    FCConfig cfg;
    std::vector<std::string> findings;  // token vocabulary (canonical forms)
    std::vector<std::string> regions;

    Tensor emb_pol, emb_find, emb_anat;
    Tensor txt_w1, txt_b1, txt_w2, txt_b2;
    Tensor img_w1, img_b1, img_w2, img_b2;
    Tensor reg_w1, reg_b1, reg_w2, reg_b2;      // single head (5 outputs); box head (4) in dual mode
    Tensor regv_w1, regv_b1, regv_w2, regv_b2;  // dual-mode veracity head (1 output)

    int n_patches() const {
        const int n = cfg.image_size / cfg.patch_size;
        return n * n;
    }

    int text_slots() const { return cfg.text_mode == TextMode::ffl4 ? 3 : 2; }

    void init(const std::vector<std::string>& finding_vocab,
              const std::vector<std::string>& region_vocab, const FCConfig& config,
              std::uint64_t seed) {
        validate_fc_config(config);
        cfg = config;
        findings = finding_vocab;
        regions = region_vocab;
        if (findings.empty() || regions.empty()) throw SchemaError("empty model vocabulary");

        const bool enc_train = cfg.mode != AblationMode::sep;
        const int d = cfg.d_tok;
        emb_pol.resize("emb_pol", 2, d, false, enc_train);
        emb_find.resize("emb_find", static_cast<int>(findings.size()), d, false, enc_train);
        emb_anat.resize("emb_anat", static_cast<int>(regions.size()) + 1, d, false, enc_train);

        const int t_in = text_slots() * d;
        txt_w1.resize("txt_w1", cfg.text_hidden, t_in, true, enc_train);
        txt_b1.resize("txt_b1", cfg.text_hidden, 1, false, enc_train);
        txt_w2.resize("txt_w2", cfg.d_joint, cfg.text_hidden, true, enc_train);
        txt_b2.resize("txt_b2", cfg.d_joint, 1, false, enc_train);

        img_w1.resize("img_w1", cfg.image_hidden, n_patches(), true, enc_train);
        img_b1.resize("img_b1", cfg.image_hidden, 1, false, enc_train);
        img_w2.resize("img_w2", cfg.d_joint, cfg.image_hidden, true, enc_train);
        img_b2.resize("img_b2", cfg.d_joint, 1, false, enc_train);

        const int head_out = cfg.mode == AblationMode::dual ? 4 : 5;
        reg_w1.resize("reg_w1", cfg.reg_hidden, 2 * cfg.d_joint, true);
        reg_b1.resize("reg_b1", cfg.reg_hidden, 1, false);
        reg_w2.resize("reg_w2", head_out, cfg.reg_hidden, true);
        reg_b2.resize("reg_b2", head_out, 1, false);
        if (cfg.mode == AblationMode::dual) {
            regv_w1.resize("regv_w1", cfg.reg_hidden, 2 * cfg.d_joint, true);
            regv_b1.resize("regv_b1", cfg.reg_hidden, 1, false);
            regv_w2.resize("regv_w2", 1, cfg.reg_hidden, true);
            regv_b2.resize("regv_b2", 1, 1, false);
        }

        Rng rng(derive_seed(seed, 0xA11CE));
        init_embedding(emb_pol, rng);
        init_embedding(emb_find, rng);
        init_embedding(emb_anat, rng);
        for (Tensor* w : {&txt_w1, &txt_w2, &img_w1, &img_w2, &reg_w1, &reg_w2}) {
            init_xavier(*w, rng);
        }
        if (cfg.mode == AblationMode::dual) {
            init_xavier(regv_w1, rng);
            init_xavier(regv_w2, rng);
        }
    }

    void init(const Lexicon& lex, const FCConfig& config, std::uint64_t seed) {
        init(lex.findings(), lex.regions(), config, seed);
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out = {&emb_pol, &emb_find, &emb_anat, &txt_w1, &txt_b1,
                                    &txt_w2,  &txt_b2,   &img_w1,   &img_b1, &img_w2,
                                    &img_b2,  &reg_w1,   &reg_b1,   &reg_w2, &reg_b2};
        if (cfg.mode == AblationMode::dual) {
            out.insert(out.end(), {&regv_w1, &regv_b1, &regv_w2, &regv_b2});
        }
        return out;
    }

    std::vector<const Tensor*> tensors() const {
        auto list = const_cast<FCModel*>(this)->tensors();
        return std::vector<const Tensor*>(list.begin(), list.end());
    }

    TokenIds token_ids(const FFL& canonical) const {
        TokenIds ids;
        ids.pol = canonical.positive ? 1 : 0;
        auto fit = std::find(findings.begin(), findings.end(), canonical.core_finding);
        if (fit == findings.end()) {
            throw SchemaError("finding not in model vocabulary: " + canonical.core_finding);
        }
        ids.find = static_cast<int>(fit - findings.begin());
        if (!canonical.has_anatomy()) {
            ids.anat = static_cast<int>(regions.size());
        } else {
            auto rit = std::find(regions.begin(), regions.end(), canonical.anatomy);
            if (rit == regions.end()) {
                throw SchemaError("anatomy not in model vocabulary: " + canonical.anatomy);
            }
            ids.anat = static_cast<int>(rit - regions.begin());
        }
        return ids;
    }
};

namespace model_detail {

struct MLPCache {
    std::vector<double> in, pre1, a1, u, z;
    double norm = 1.0;
};

struct HeadCache {
    std::vector<double> mask1, din, pre1, a1, mask2, da1, logits, p;
};

inline void encoder_forward(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                            const std::vector<double>& in, MLPCache& c) {
    c.in = in;
    affine(w1, b1, c.in, c.pre1);
    relu(c.pre1, c.a1);
    affine(w2, b2, c.a1, c.u);
    c.norm = l2_normalize(c.u, c.z);
}

inline void encoder_backward(Tensor& w1, Tensor& b1, Tensor& w2, Tensor& b2, const MLPCache& c,
                             const std::vector<double>& dz, std::vector<double>& din) {
    std::vector<double> du, da1, dpre1;
    l2_normalize_backward(c.z, c.norm, dz, du);
    affine_backward(w2, b2, c.a1, du, da1);
    relu_backward(c.pre1, da1);
    affine_backward(w1, b1, c.in, da1, din);
}

inline void head_forward(const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2,
                         const std::vector<double>& in, double drop_rate, Rng* drop, HeadCache& c) {
    make_dropout_mask(c.mask1, in.size(), drop_rate, drop);
    c.din.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) c.din[i] = in[i] * c.mask1[i];
    affine(w1, b1, c.din, c.pre1);
    relu(c.pre1, c.a1);
    make_dropout_mask(c.mask2, c.a1.size(), drop_rate, drop);
    c.da1.resize(c.a1.size());
    for (std::size_t i = 0; i < c.a1.size(); ++i) c.da1[i] = c.a1[i] * c.mask2[i];
    affine(w2, b2, c.da1, c.logits);
    c.p.resize(c.logits.size());
    for (std::size_t i = 0; i < c.logits.size(); ++i) c.p[i] = sigmoid(c.logits[i]);
}

// dx is accumulated (+=) into the joint-input gradient.
inline void head_backward(Tensor& w1, Tensor& b1, Tensor& w2, Tensor& b2, const HeadCache& c,
                          const std::vector<double>& dlogits, std::vector<double>& dx_accum) {
    std::vector<double> dda1, ddin;
    affine_backward(w2, b2, c.da1, dlogits, dda1);
    for (std::size_t i = 0; i < dda1.size(); ++i) dda1[i] *= c.mask2[i];
    relu_backward(c.pre1, dda1);
    affine_backward(w1, b1, c.din, dda1, ddin);
    for (std::size_t i = 0; i < ddin.size(); ++i) dx_accum[i] += ddin[i] * c.mask1[i];
}

}  // namespace model_detail

// One finding prepared for the training loop: token ids plus its regression
// targets (fabricated findings regress to the all-zero box with E = 0).
struct TrainFinding {
    TokenIds ids;
    BBox target_box;
    int target_e = 1;
};

struct TrainSample {
    std::string image_id;
    std::vector<double> feat;
    std::vector<TrainFinding> findings;
    std::vector<int> real_idx, fake_idx;
};

inline TrainSample build_train_sample(const Sample& s, const ToyImage& img, const Lexicon& lex,
                                      const FCModel& model) {
    if (img.size != model.cfg.image_size) {
        throw SchemaError(s.image_id + ": image size does not match model input size");
    }
    TrainSample ts;
    ts.image_id = s.image_id;
    ts.feat = extract_patch_features(img, model.cfg.patch_size);
    for (const auto& f : s.findings) {
        TrainFinding tf;
        tf.ids = model.token_ids(lex.canonicalize(f.ffl));
        tf.target_e = f.veracity;
        tf.target_box = f.veracity == 1 ? f.box : kZeroBox;
        if (f.veracity == 1) {
            ts.real_idx.push_back(static_cast<int>(ts.findings.size()));
        } else {
            ts.fake_idx.push_back(static_cast<int>(ts.findings.size()));
        }
        ts.findings.push_back(std::move(tf));
    }
    return ts;
}

struct BatchStats {
    double supcon = 0.0;  // contrastive (or similarity-BCE) term, averaged
    double reg = 0.0;     // regression term, averaged
    double total = 0.0;
    int supcon_skipped = 0;
};

namespace model_detail {

struct FindingPass {
    MLPCache txt;
    HeadCache head;    // 5 outputs (or 4 in dual mode)
    HeadCache head_v;  // dual-mode veracity head
    double sim = 0.0;
    std::vector<double> dlogits, dlogits_v;
    std::vector<double> dz_txt;
};

struct SamplePass {
    const TrainSample* ts = nullptr;
    MLPCache img;
    std::vector<FindingPass> f;
    std::vector<double> dz_img;
};

inline std::vector<double> text_input(const FCModel& m, const TokenIds& ids) {
    const int d = m.cfg.d_tok;
    std::vector<double> in(static_cast<std::size_t>(m.text_slots()) * d);
    const double* pol = m.emb_pol.v.data() + static_cast<std::size_t>(ids.pol) * d;
    const double* fnd = m.emb_find.v.data() + static_cast<std::size_t>(ids.find) * d;
    std::copy(pol, pol + d, in.begin());
    std::copy(fnd, fnd + d, in.begin() + d);
    if (m.text_slots() == 3) {
        const double* ant = m.emb_anat.v.data() + static_cast<std::size_t>(ids.anat) * d;
        std::copy(ant, ant + d, in.begin() + 2 * d);
    }
    return in;
}

inline void text_input_backward(FCModel& m, const TokenIds& ids, const std::vector<double>& din) {
    const int d = m.cfg.d_tok;
    for (int k = 0; k < d; ++k) {
        m.emb_pol.g[static_cast<std::size_t>(ids.pol) * d + k] += din[static_cast<std::size_t>(k)];
        m.emb_find.g[static_cast<std::size_t>(ids.find) * d + k] +=
            din[static_cast<std::size_t>(d + k)];
    }
    if (m.text_slots() == 3) {
        for (int k = 0; k < d; ++k) {
            m.emb_anat.g[static_cast<std::size_t>(ids.anat) * d + k] +=
                din[static_cast<std::size_t>(2 * d + k)];
        }
    }
}

}  // namespace model_detail

// Forward (and optionally backward) pass over one batch. Gradients accumulate
// into the model tensors when with_grad is set; drop_rng enables dropout.
inline BatchStats batch_pass(FCModel& m, const std::vector<const TrainSample*>& batch,
                             bool with_grad, Rng* drop_rng) {
    using namespace model_detail;
    if (batch.empty()) throw UsageError("empty batch");
    const FCConfig& cfg = m.cfg;
    const double drop = drop_rng ? cfg.dropout : 0.0;
    const bool dual = cfg.mode == AblationMode::dual;
    const std::size_t n = batch.size();

    std::vector<SamplePass> passes(n);
    const RegWeights w{cfg.lambda_l1, cfg.lambda_giou, cfg.lambda_mse, cfg.lambda_bce};

    double reg_sum = 0.0;
    // Phase 1: encoders, similarity, regression heads.
    for (std::size_t i = 0; i < n; ++i) {
        SamplePass& sp = passes[i];
        sp.ts = batch[i];
        encoder_forward(m.img_w1, m.img_b1, m.img_w2, m.img_b2, sp.ts->feat, sp.img);
        sp.dz_img.assign(static_cast<std::size_t>(cfg.d_joint), 0.0);
        sp.f.resize(sp.ts->findings.size());

        const std::size_t nf = sp.ts->findings.size();
        double reg_i = 0.0;
        for (std::size_t j = 0; j < nf; ++j) {
            const TrainFinding& tf = sp.ts->findings[j];
            FindingPass& fp = sp.f[j];
            encoder_forward(m.txt_w1, m.txt_b1, m.txt_w2, m.txt_b2, text_input(m, tf.ids), fp.txt);
            fp.sim = 0.0;
            for (int k = 0; k < cfg.d_joint; ++k) {
                fp.sim += sp.img.z[static_cast<std::size_t>(k)] * fp.txt.z[static_cast<std::size_t>(k)];
            }
            fp.dz_txt.assign(static_cast<std::size_t>(cfg.d_joint), 0.0);

            std::vector<double> joint(static_cast<std::size_t>(2 * cfg.d_joint));
            std::copy(sp.img.z.begin(), sp.img.z.end(), joint.begin());
            std::copy(fp.txt.z.begin(), fp.txt.z.end(), joint.begin() + cfg.d_joint);
            head_forward(m.reg_w1, m.reg_b1, m.reg_w2, m.reg_b2, joint, drop, drop_rng, fp.head);
            double e_prob;
            BBox pbox{fp.head.p[0], fp.head.p[1], fp.head.p[2], fp.head.p[3]};
            if (dual) {
                head_forward(m.regv_w1, m.regv_b1, m.regv_w2, m.regv_b2, joint, drop, drop_rng,
                             fp.head_v);
                e_prob = fp.head_v.p[0];
            } else {
                e_prob = fp.head.p[4];
            }

            std::array<double, 4> dpbox{};
            double loss_j = box_loss_grad(pbox, tf.target_box, w, cfg.giou_convention, &dpbox);
            loss_j += w.bce * bce_clamped(e_prob, tf.target_e);
            reg_i += loss_j;

            if (with_grad) {
                const double scale = 1.0 / (static_cast<double>(nf) * static_cast<double>(n));
                fp.dlogits.assign(fp.head.p.size(), 0.0);
                for (int k = 0; k < 4; ++k) {
                    const double pk = fp.head.p[static_cast<std::size_t>(k)];
                    fp.dlogits[static_cast<std::size_t>(k)] = scale * dpbox[static_cast<std::size_t>(k)] * pk * (1.0 - pk);
                }
                const bool clamped = e_prob <= kProbClamp || e_prob >= 1.0 - kProbClamp;
                const double dle = clamped ? 0.0 : w.bce * (e_prob - tf.target_e) * scale;
                if (dual) {
                    fp.dlogits_v.assign(1, dle);
                } else {
                    fp.dlogits[4] = dle;
                }
            }
        }
        if (nf > 0) reg_sum += reg_i / static_cast<double>(nf);
    }

    // Phase 2: contrastive term (or similarity BCE) on the normalized
    // embeddings, producing d(loss)/d(similarity) coefficients.
    double supcon_sum = 0.0;
    int supcon_valid = 0, supcon_skipped = 0;
    const bool head_active = cfg.lambda_supcon > 0.0 && cfg.mode != AblationMode::sep;

    if (head_active && cfg.mode == AblationMode::bce) {
        std::size_t n_with_findings = 0;
        for (const auto& sp : passes) n_with_findings += sp.f.empty() ? 0 : 1;
        for (std::size_t i = 0; i < n; ++i) {
            SamplePass& sp = passes[i];
            const std::size_t nf = sp.f.size();
            if (nf == 0) continue;
            double li = 0.0;
            for (std::size_t j = 0; j < nf; ++j) {
                const int e = sp.ts->findings[j].target_e;
                const double p = sigmoid(sp.f[j].sim / cfg.tau);
                li += bce_clamped(p, e);
                if (with_grad && p > kProbClamp && p < 1.0 - kProbClamp) {
                    const double c = cfg.lambda_supcon * (p - e) / cfg.tau /
                                     (static_cast<double>(nf) * static_cast<double>(n_with_findings));
                    for (int k = 0; k < cfg.d_joint; ++k) {
                        sp.dz_img[static_cast<std::size_t>(k)] += c * sp.f[j].txt.z[static_cast<std::size_t>(k)];
                        sp.f[j].dz_txt[static_cast<std::size_t>(k)] += c * sp.img.z[static_cast<std::size_t>(k)];
                    }
                }
            }
            supcon_sum += li / static_cast<double>(nf);
            ++supcon_valid;
        }
        if (supcon_valid > 0) supcon_sum /= static_cast<double>(supcon_valid);
    } else if (head_active) {
        // Batch-wide fake list when cross-sample negatives are enabled.
        std::vector<std::pair<std::size_t, int>> batch_fakes;
        if (cfg.cross_sample_negatives) {
            for (std::size_t i = 0; i < n; ++i) {
                for (int j : passes[i].ts->fake_idx) batch_fakes.emplace_back(i, j);
            }
        }
        std::vector<std::pair<std::size_t, int>> fakes;
        for (std::size_t i = 0; i < n; ++i) {
            SamplePass& sp = passes[i];
            if (cfg.cross_sample_negatives) {
                fakes = batch_fakes;
            } else {
                fakes.clear();
                for (int j : sp.ts->fake_idx) fakes.emplace_back(i, j);
            }
            if (sp.ts->real_idx.empty() || fakes.empty()) {
                ++supcon_skipped;
                continue;
            }
            std::vector<double> sr, sf;
            for (int j : sp.ts->real_idx) sr.push_back(sp.f[static_cast<std::size_t>(j)].sim);
            for (const auto& [fi, fj] : fakes) {
                const FindingPass& fp = passes[fi].f[static_cast<std::size_t>(fj)];
                double s = 0.0;
                for (int k = 0; k < cfg.d_joint; ++k) {
                    s += sp.img.z[static_cast<std::size_t>(k)] * fp.txt.z[static_cast<std::size_t>(k)];
                }
                sf.push_back(s);
            }
            std::vector<double> dsr, dsf;
            supcon_sum += supcon_sim_grads(sr, sf, cfg.tau, cfg.incl_positive_denominator, dsr, dsf);
            ++supcon_valid;
            if (with_grad) {
                // scale applied once the valid count is known (uniform 1/valid)
                for (std::size_t r = 0; r < sr.size(); ++r) {
                    const int j = sp.ts->real_idx[r];
                    FindingPass& fp = sp.f[static_cast<std::size_t>(j)];
                    for (int k = 0; k < cfg.d_joint; ++k) {
                        sp.dz_img[static_cast<std::size_t>(k)] += dsr[r] * fp.txt.z[static_cast<std::size_t>(k)];
                        fp.dz_txt[static_cast<std::size_t>(k)] += dsr[r] * sp.img.z[static_cast<std::size_t>(k)];
                    }
                }
                for (std::size_t q = 0; q < fakes.size(); ++q) {
                    const auto [fi, fj] = fakes[q];
                    FindingPass& fp = passes[fi].f[static_cast<std::size_t>(fj)];
                    for (int k = 0; k < cfg.d_joint; ++k) {
                        sp.dz_img[static_cast<std::size_t>(k)] += dsf[q] * fp.txt.z[static_cast<std::size_t>(k)];
                        fp.dz_txt[static_cast<std::size_t>(k)] += dsf[q] * sp.img.z[static_cast<std::size_t>(k)];
                    }
                }
            }
        }
        if (supcon_valid > 0) supcon_sum /= static_cast<double>(supcon_valid);
    }

    BatchStats stats;
    stats.reg = reg_sum / static_cast<double>(n);
    stats.supcon = supcon_sum;
    stats.supcon_skipped = supcon_skipped;
    stats.total = cfg.lambda_supcon * stats.supcon + stats.reg;
    if (!std::isfinite(stats.total)) throw NumericalError("loss is not finite");
    if (!with_grad) return stats;

    // The contrastive gradients above were accumulated per valid sample but
    // the loss averages over valid samples — rescale now.
    if (head_active && cfg.mode != AblationMode::bce && supcon_valid > 0) {
        const double fix = cfg.lambda_supcon / static_cast<double>(supcon_valid);
        for (auto& sp : passes) {
            for (int k = 0; k < cfg.d_joint; ++k) sp.dz_img[static_cast<std::size_t>(k)] *= fix;
            for (auto& fp : sp.f) {
                for (int k = 0; k < cfg.d_joint; ++k) fp.dz_txt[static_cast<std::size_t>(k)] *= fix;
            }
        }
    }

    // Phase 3: backward through heads and encoders.
    const bool enc_train = cfg.mode != AblationMode::sep;
    for (auto& sp : passes) {
        std::vector<double> djoint(static_cast<std::size_t>(2 * cfg.d_joint));
        for (std::size_t j = 0; j < sp.f.size(); ++j) {
            FindingPass& fp = sp.f[j];
            std::fill(djoint.begin(), djoint.end(), 0.0);
            head_backward(m.reg_w1, m.reg_b1, m.reg_w2, m.reg_b2, fp.head, fp.dlogits, djoint);
            if (dual) {
                head_backward(m.regv_w1, m.regv_b1, m.regv_w2, m.regv_b2, fp.head_v, fp.dlogits_v,
                              djoint);
            }
            for (int k = 0; k < cfg.d_joint; ++k) {
                sp.dz_img[static_cast<std::size_t>(k)] += djoint[static_cast<std::size_t>(k)];
                fp.dz_txt[static_cast<std::size_t>(k)] += djoint[static_cast<std::size_t>(cfg.d_joint + k)];
            }
            if (enc_train) {
                std::vector<double> din;
                encoder_backward(m.txt_w1, m.txt_b1, m.txt_w2, m.txt_b2, fp.txt, fp.dz_txt, din);
                text_input_backward(m, sp.ts->findings[j].ids, din);
            }
        }
        if (enc_train) {
            std::vector<double> dfeat;
            encoder_backward(m.img_w1, m.img_b1, m.img_w2, m.img_b2, sp.img, sp.dz_img, dfeat);
        }
    }
    return stats;
}

// --- inference ---------------------------------------------------------------

inline std::vector<double> encode_image(const FCModel& m, const ToyImage& img) {
    if (img.size != m.cfg.image_size) throw SchemaError("image size does not match model input size");
    model_detail::MLPCache c;
    model_detail::encoder_forward(m.img_w1, m.img_b1, m.img_w2, m.img_b2,
                                  extract_patch_features(img, m.cfg.patch_size), c);
    return c.z;
}

inline std::vector<double> encode_ffl(const FCModel& m, const FFL& ffl, const Lexicon& lex) {
    const TokenIds ids = m.token_ids(lex.canonicalize(ffl));
    model_detail::MLPCache c;
    model_detail::encoder_forward(m.txt_w1, m.txt_b1, m.txt_w2, m.txt_b2,
                                  model_detail::text_input(m, ids), c);
    return c.z;
}

inline Prediction predict_one(const FCModel& m, const std::vector<double>& z_img, const FFL& ffl,
                              const Lexicon& lex) {
    Prediction out;
    try {
        const TokenIds ids = m.token_ids(lex.canonicalize(ffl));
        model_detail::MLPCache txt;
        model_detail::encoder_forward(m.txt_w1, m.txt_b1, m.txt_w2, m.txt_b2,
                                      model_detail::text_input(m, ids), txt);
        std::vector<double> joint(static_cast<std::size_t>(2 * m.cfg.d_joint));
        std::copy(z_img.begin(), z_img.end(), joint.begin());
        std::copy(txt.z.begin(), txt.z.end(), joint.begin() + m.cfg.d_joint);
        model_detail::HeadCache head;
        model_detail::head_forward(m.reg_w1, m.reg_b1, m.reg_w2, m.reg_b2, joint, 0.0, nullptr, head);
        out.box = BBox{head.p[0], head.p[1], head.p[2], head.p[3]};
        if (m.cfg.mode == AblationMode::dual) {
            model_detail::HeadCache hv;
            model_detail::head_forward(m.regv_w1, m.regv_b1, m.regv_w2, m.regv_b2, joint, 0.0,
                                       nullptr, hv);
            out.e_p = hv.p[0];
        } else {
            out.e_p = head.p[4];
        }
    } catch (const SchemaError& e) {
        out.ok = false;
        out.error = e.what();
        out.box = kZeroBox;
        out.e_p = 0.0;
    }
    return out;
}

inline std::vector<Prediction> predict(const FCModel& m, const ToyImage& img,
                                       const std::vector<FFL>& ffls, const Lexicon& lex) {
    const std::vector<double> z_img = encode_image(m, img);
    std::vector<Prediction> out;
    out.reserve(ffls.size());
    for (const auto& f : ffls) out.push_back(predict_one(m, z_img, f, lex));
    return out;
}

// --- checkpointing -------------------------------------------------------------

struct Checkpoint {
    FCModel model;
    std::uint64_t seed = 0;
    nlohmann::json epoch_metrics = nlohmann::json::array();
    int supcon_skipped = 0;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
    nlohmann::json params = nlohmann::json::object();
    for (const Tensor* t : ck.model.tensors()) {
        params[t->name] = {{"rows", t->rows}, {"cols", t->cols}, {"values", t->v}};
    }
    return nlohmann::json{{"format_version", 1},
                          {"kind", "fc-checkpoint"},
                          {"config", fc_config_to_json(ck.model.cfg)},
                          {"seed", ck.seed},
                          {"vocab", {{"findings", ck.model.findings}, {"regions", ck.model.regions}}},
                          {"params", params},
                          {"epoch_metrics", ck.epoch_metrics},
                          {"supcon_skipped_samples", ck.supcon_skipped}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("kind", "") != "fc-checkpoint") {
        throw SchemaError("not a model checkpoint");
    }
    if (j.value("format_version", 0) != 1) throw SchemaError("unsupported checkpoint version");
    Checkpoint ck;
    const FCConfig cfg = fc_config_from_json(j.at("config"));
    const auto findings = j.at("vocab").at("findings").get<std::vector<std::string>>();
    const auto regions = j.at("vocab").at("regions").get<std::vector<std::string>>();
    ck.model.init(findings, regions, cfg, 0);
    ck.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("epoch_metrics")) ck.epoch_metrics = j.at("epoch_metrics");
    ck.supcon_skipped = j.value("supcon_skipped_samples", 0);
    const auto& params = j.at("params");
    for (Tensor* t : ck.model.tensors()) {
        if (!params.contains(t->name)) throw SchemaError("checkpoint missing tensor " + t->name);
        const auto& pj = params.at(t->name);
        if (pj.at("rows").get<int>() != t->rows || pj.at("cols").get<int>() != t->cols) {
            throw SchemaError("checkpoint tensor shape mismatch for " + t->name);
        }
        const auto vals = pj.at("values").get<std::vector<double>>();
        if (vals.size() != t->size()) throw SchemaError("checkpoint tensor size mismatch for " + t->name);
        t->v = vals;
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write checkpoint: " + path);
    out << checkpoint_to_json(ck).dump(1) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("checkpoint is not valid JSON: " + std::string(e.what()));
    }
    return checkpoint_from_json(j);
}

// --- training ------------------------------------------------------------------

inline std::pair<double, double> eval_accuracy_miou(const FCModel& m,
                                                    const std::vector<Sample>& samples,
                                                    const std::map<std::string, ToyImage>& images,
                                                    const Lexicon& lex) {
    std::int64_t correct = 0, total = 0;
    double iou_sum = 0.0;
    std::int64_t iou_n = 0;
    for (const auto& s : samples) {
        auto it = images.find(s.image_id);
        if (it == images.end()) throw SchemaError("missing image for sample " + s.image_id);
        const std::vector<double> z_img = encode_image(m, it->second);
        for (const auto& f : s.findings) {
            const Prediction p = predict_one(m, z_img, f.ffl, lex);
            const int e_hat = p.ok && p.e_p >= 0.5 ? 1 : 0;
            correct += e_hat == f.veracity ? 1 : 0;
            ++total;
            if (f.veracity == 1) {
                iou_sum += p.ok ? iou(p.box, f.box) : 0.0;
                ++iou_n;
            }
        }
    }
    if (total == 0) throw UsageError("no findings to evaluate");
    return {static_cast<double>(correct) / static_cast<double>(total),
            iou_n > 0 ? iou_sum / static_cast<double>(iou_n) : 0.0};
}

// Trains on prepared samples; an optional validation set adds per-epoch
// accuracy / mean-IoU to the metrics. Deterministic for a given seed.
inline Checkpoint train(const std::vector<Sample>& train_samples,
                        const std::vector<Sample>& val_samples,
                        const std::map<std::string, ToyImage>& images, const Lexicon& lex,
                        const FCConfig& cfg, std::uint64_t seed) {
    validate_fc_config(cfg);
    if (train_samples.empty()) throw UsageError("training corpus is empty");

    Checkpoint ck;
    ck.seed = seed;
    ck.model.init(lex, cfg, derive_seed(seed, 1));
    FCModel& m = ck.model;

    std::vector<TrainSample> prepared;
    prepared.reserve(train_samples.size());
    for (const auto& s : train_samples) {
        auto it = images.find(s.image_id);
        if (it == images.end()) throw SchemaError("missing image for sample " + s.image_id);
        prepared.push_back(build_train_sample(s, it->second, lex, m));
    }

    const std::size_t nb = (prepared.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = static_cast<std::int64_t>(nb) * cfg.epochs;
    AdamW opt;
    opt.weight_decay = cfg.weight_decay;
    Rng drop_rng(derive_seed(seed, 2));
    auto params = m.tensors();
    std::int64_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(prepared.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        double ep_supcon = 0.0, ep_reg = 0.0;
        std::size_t ep_batches = 0;
        for (std::size_t b = 0; b < nb; ++b) {
            std::vector<const TrainSample*> batch;
            for (std::size_t k = b * cfg.batch_size;
                 k < std::min(order.size(), (b + 1) * static_cast<std::size_t>(cfg.batch_size)); ++k) {
                batch.push_back(&prepared[order[k]]);
            }
            if (batch.empty()) continue;
            for (Tensor* t : params) t->zero_grad();
            BatchStats stats;
            try {
                stats = batch_pass(m, batch, /*with_grad=*/true,
                                   cfg.dropout > 0.0 ? &drop_rng : nullptr);
            } catch (const NumericalError&) {
                throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(b + 1));
            }
            ck.supcon_skipped += stats.supcon_skipped;
            ep_supcon += stats.supcon;
            ep_reg += stats.reg;
            ++ep_batches;
            ++step;
            opt.step(params, lr_at_step(step, total_steps, cfg.lr_max, cfg.warmup_steps));
        }

        nlohmann::json entry{{"epoch", epoch},
                             {"supcon_loss", ep_batches ? ep_supcon / static_cast<double>(ep_batches) : 0.0},
                             {"reg_loss", ep_batches ? ep_reg / static_cast<double>(ep_batches) : 0.0}};
        if (!val_samples.empty()) {
            const auto [acc, miou] = eval_accuracy_miou(m, val_samples, images, lex);
            entry["val_accuracy"] = acc;
            entry["val_miou"] = miou;
        } else {
            entry["val_accuracy"] = nullptr;
            entry["val_miou"] = nullptr;
        }
        ck.epoch_metrics.push_back(std::move(entry));
    }
    return ck;
}

inline void write_training_log(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write training log: " + path);
    for (const auto& entry : ck.epoch_metrics) out << entry.dump() << "\n";
}

// --- gradient verification -------------------------------------------------------

// Compares analytic gradients of the full batch loss with central finite
// differences on a deliberately tiny model; returns the max relative error.
// Mode, loss weights, giou convention and contrastive flags are taken from
// the supplied config; architecture sizes are forced small and dropout off.
inline double grad_check(const FCConfig& base, std::uint64_t seed) {
    FCConfig cfg = base;
    cfg.d_tok = 4;
    cfg.d_joint = 8;
    cfg.image_size = 16;
    cfg.patch_size = 8;
    cfg.image_hidden = 6;
    cfg.text_hidden = 6;
    cfg.reg_hidden = 6;
    cfg.dropout = 0.0;
    validate_fc_config(cfg);

    FCModel m;
    m.init({"alpha", "beta", "gamma"}, {"r1", "r2", "r3", "r4"}, cfg, derive_seed(seed, 1));

    Rng rng(derive_seed(seed, 2));
    auto feat = [&] {
        std::vector<double> f(static_cast<std::size_t>(m.n_patches()));
        for (auto& x : f) x = rng.uniform(0.0, 1.0);
        return f;
    };
    auto tf = [&](bool pos, int find, int anat, const BBox& box, int e) {
        TrainFinding t;
        t.ids = TokenIds{pos ? 1 : 0, find, anat};
        t.target_box = box;
        t.target_e = e;
        return t;
    };

    TrainSample s1;
    s1.image_id = "g1";
    s1.feat = feat();
    s1.findings = {tf(true, 0, 0, BBox{0.12, 0.2, 0.3, 0.4}, 1),
                   tf(false, 1, 1, BBox{0.55, 0.5, 0.25, 0.3}, 1),
                   tf(true, 2, 2, kZeroBox, 0), tf(true, 0, 3, kZeroBox, 0)};
    s1.real_idx = {0, 1};
    s1.fake_idx = {2, 3};

    TrainSample s2;
    s2.image_id = "g2";
    s2.feat = feat();
    s2.findings = {tf(true, 1, 1, BBox{0.3, 0.6, 0.2, 0.2}, 1), tf(true, 2, 0, kZeroBox, 0)};
    s2.real_idx = {0};
    s2.fake_idx = {1};

    const std::vector<const TrainSample*> batch = {&s1, &s2};

    auto params = m.tensors();
    for (Tensor* t : params) t->zero_grad();
    batch_pass(m, batch, /*with_grad=*/true, nullptr);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (Tensor* t : params) {
        if (!t->trainable) continue;
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double orig = t->v[i];
            t->v[i] = orig + h;
            const double lp = batch_pass(m, batch, false, nullptr).total;
            t->v[i] = orig - h;
            const double lm = batch_pass(m, batch, false, nullptr).total;
            t->v[i] = orig;
            const double num = (lp - lm) / (2.0 * h);
            const double ana = t->g[i];
            const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace factground
