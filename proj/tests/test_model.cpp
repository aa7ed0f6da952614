// Unit tests for the fact-checking model: loss functions (against direct
// formula transcriptions and finite differences), encoders, prediction,
// checkpoint round-trips, and the self-contained gradient check.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "factground/model.hpp"
#include "factground/rng.hpp"
#include "factground/toyworld.hpp"

using namespace factground;
using Catch::Approx;

namespace {

const Lexicon& lex() {
    static Lexicon l = Lexicon::load(FACTGROUND_LEXICON);
    return l;
}

// Small-but-real model configuration used by encoder/prediction tests.
FCConfig tiny_config() {
    FCConfig c;
    c.image_size = 32;
    c.patch_size = 8;
    c.image_hidden = 12;
    c.text_hidden = 10;
    c.reg_hidden = 12;
    c.d_tok = 6;
    c.d_joint = 8;
    c.dropout = 0.0;
    c.epochs = 2;
    c.batch_size = 4;
    c.warmup_steps = 2;
    return c;
}

ToyImage make_image(const std::string& id, int size, std::uint64_t seed) {
    ToyImage img;
    img.image_id = id;
    img.size = size;
    img.pixels.resize(static_cast<std::size_t>(size) * size);
    Rng rng(seed);
    for (auto& p : img.pixels) p = rng.uniform(0.0, 1.0);
    return img;
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("factground_model_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

// Direct transcription of the contrastive objective, without the max-shift
// used by the implementation: mean over reals of -log(exp(sr/t) / sum_fakes).
double naive_supcon(const std::vector<double>& sr, const std::vector<double>& sf, double tau,
                    bool incl_positive) {
    double total = 0.0;
    for (double r : sr) {
        double denom = incl_positive ? std::exp(r / tau) : 0.0;
        for (double f : sf) denom += std::exp(f / tau);
        total += -std::log(std::exp(r / tau) / denom);
    }
    return total / static_cast<double>(sr.size());
}

}  // namespace

TEST_CASE("mode and convention names round-trip", "[model]") {
    for (AblationMode m :
         {AblationMode::comb, AblationMode::bce, AblationMode::sep, AblationMode::dual}) {
        CHECK(ablation_mode_from_string(to_string(m)) == m);
    }
    CHECK(to_string(AblationMode::comb) == "FCRegComb");
    CHECK(to_string(AblationMode::bce) == "FCRegBCE");
    CHECK(to_string(AblationMode::sep) == "FCRegSep");
    CHECK(to_string(AblationMode::dual) == "FCRegDual");
    CHECK_THROWS_AS(ablation_mode_from_string("FCRegComb2"), SchemaError);

    for (GiouConvention c : {GiouConvention::standard, GiouConvention::paper_literal}) {
        CHECK(giou_convention_from_string(to_string(c)) == c);
    }
    CHECK_THROWS_AS(giou_convention_from_string("Standard"), SchemaError);

    for (TextMode t : {TextMode::ffl3, TextMode::ffl4}) {
        CHECK(text_mode_from_string(to_string(t)) == t);
    }
    CHECK_THROWS_AS(text_mode_from_string("ffl5"), SchemaError);
}

TEST_CASE("model config round-trips through JSON", "[model]") {
    FCConfig c;
    c.tau = 0.11;
    c.mode = AblationMode::dual;
    c.giou_convention = GiouConvention::paper_literal;
    c.text_mode = TextMode::ffl3;
    c.incl_positive_denominator = true;
    c.cross_sample_negatives = true;
    c.image_size = 64;
    c.patch_size = 16;
    c.lambda_giou = 0.5;

    const nlohmann::json j = fc_config_to_json(c);
    const FCConfig back = fc_config_from_json(j);
    CHECK(fc_config_to_json(back) == j);
    CHECK(back.mode == AblationMode::dual);
    CHECK(back.giou_convention == GiouConvention::paper_literal);
    CHECK(back.text_mode == TextMode::ffl3);
    CHECK(back.incl_positive_denominator);
    CHECK(back.tau == 0.11);

    SECTION("absent keys keep defaults") {
        const FCConfig d = fc_config_from_json(nlohmann::json::object());
        CHECK(d.tau == 0.07);
        CHECK(d.d_joint == 64);
        CHECK(d.batch_size == 32);
        CHECK(d.mode == AblationMode::comb);
    }
    SECTION("unknown keys are rejected") {
        CHECK_THROWS_AS(fc_config_from_json({{"taus", 0.1}}), SchemaError);
    }
}

TEST_CASE("model config validation rejects bad values", "[model]") {
    auto reject = [](auto&& tweak) {
        FCConfig c;
        tweak(c);
        CHECK_THROWS_AS(validate_fc_config(c), SchemaError);
    };
    reject([](FCConfig& c) { c.tau = 0.0; });
    reject([](FCConfig& c) { c.tau = -1.0; });
    reject([](FCConfig& c) { c.lambda_giou = -0.1; });
    reject([](FCConfig& c) { c.lambda_supcon = -1.0; });
    reject([](FCConfig& c) { c.batch_size = 1; });
    reject([](FCConfig& c) { c.image_size = 100; });  // not a multiple of patch 8
    reject([](FCConfig& c) { c.patch_size = 0; });
    reject([](FCConfig& c) { c.dropout = 1.0; });
    reject([](FCConfig& c) { c.dropout = -0.2; });
    reject([](FCConfig& c) { c.epochs = 0; });
    reject([](FCConfig& c) { c.lr_max = 0.0; });
    reject([](FCConfig& c) { c.weight_decay = -0.01; });
    reject([](FCConfig& c) { c.d_tok = 0; });
    // All-zero loss weights are a legal (if useless) configuration.
    FCConfig ok;
    ok.lambda_l1 = ok.lambda_giou = ok.lambda_mse = ok.lambda_bce = ok.lambda_supcon = 0.0;
    CHECK_NOTHROW(validate_fc_config(ok));
}

TEST_CASE("contrastive loss matches a direct transcription", "[model]") {
    SECTION("worked single-real example") {
        // -(0.8 - log(e^0.2 + e^0.4)) with tau = 1.
        const double v = supcon_from_sims({0.8}, {0.2, 0.4}, 1.0);
        CHECK(v == Approx(0.19813886938159175).margin(1e-14));
        CHECK(v == Approx(-(0.8 - std::log(std::exp(0.2) + std::exp(0.4)))).margin(1e-14));
    }
    SECTION("one real and one fake reduce to a similarity difference") {
        Rng rng(11);
        for (int i = 0; i < 200; ++i) {
            const double sr = rng.uniform(-3.0, 3.0);
            const double sf = rng.uniform(-3.0, 3.0);
            const double tau = rng.uniform(0.05, 2.0);
            CHECK(supcon_from_sims({sr}, {sf}, tau) == Approx((sf - sr) / tau).margin(1e-12));
        }
        // Identical similarities cancel exactly.
        CHECK(supcon_from_sims({0.37}, {0.37}, 0.07) == 0.0);
    }
    SECTION("including the positive in the denominator floors the loss at zero") {
        // One real, one fake, equal similarity: -log(1/2) = ln 2.
        CHECK(supcon_from_sims({0.5}, {0.5}, 1.0, true) ==
              Approx(0.6931471805599453).margin(1e-15));
        Rng rng(12);
        for (int i = 0; i < 100; ++i) {
            std::vector<double> sr = {rng.uniform(-2.0, 2.0)};
            std::vector<double> sf = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
            CHECK(supcon_from_sims(sr, sf, 0.3, true) > 0.0);
        }
    }
    SECTION("agrees with the naive formula on random draws") {
        Rng rng(13);
        for (int i = 0; i < 200; ++i) {
            const int nr = 1 + static_cast<int>(rng.index(3));
            const int nf = 1 + static_cast<int>(rng.index(4));
            std::vector<double> sr, sf;
            for (int k = 0; k < nr; ++k) sr.push_back(rng.uniform(-4.0, 4.0));
            for (int k = 0; k < nf; ++k) sf.push_back(rng.uniform(-4.0, 4.0));
            const double tau = rng.uniform(0.07, 1.5);
            const bool incl = rng.index(2) == 0;
            CHECK(supcon_from_sims(sr, sf, tau, incl) ==
                  Approx(naive_supcon(sr, sf, tau, incl)).margin(1e-11));
        }
    }
    SECTION("shifting every similarity by a constant changes nothing") {
        const std::vector<double> sr = {0.2, -0.4};
        const std::vector<double> sf = {0.1, 0.6, -0.3};
        const double base = supcon_from_sims(sr, sf, 0.25);
        for (double c : {-2.0, 0.5, 3.0}) {
            std::vector<double> sr2 = sr, sf2 = sf;
            for (double& v : sr2) v += c;
            for (double& v : sf2) v += c;
            CHECK(supcon_from_sims(sr2, sf2, 0.25) == Approx(base).margin(1e-12));
        }
    }
    SECTION("averaged over reals") {
        const std::vector<double> sf = {0.3, -0.2};
        const double a = supcon_from_sims({0.9}, sf, 0.5);
        const double b = supcon_from_sims({-0.1}, sf, 0.5);
        CHECK(supcon_from_sims({0.9, -0.1}, sf, 0.5) == Approx((a + b) / 2).margin(1e-12));
    }
    SECTION("monotone in the similarities") {
        const double base = supcon_from_sims({0.4}, {0.1, 0.2}, 0.2);
        CHECK(supcon_from_sims({0.5}, {0.1, 0.2}, 0.2) < base);   // better real match
        CHECK(supcon_from_sims({0.4}, {0.1, 0.35}, 0.2) > base);  // worse fake rejection
    }
    SECTION("argument errors") {
        CHECK_THROWS_AS(supcon_from_sims({}, {0.1}, 1.0), UsageError);
        CHECK_THROWS_AS(supcon_from_sims({0.1}, {}, 1.0), UsageError);
        CHECK_THROWS_AS(supcon_from_sims({0.1}, {0.2}, 0.0), UsageError);
        CHECK_THROWS_AS(supcon_from_sims({0.1}, {0.2}, -1.0), UsageError);
    }
}

TEST_CASE("contrastive similarity gradients match finite differences", "[model]") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const int nr = 1 + static_cast<int>(rng.index(3));
        const int nf = 1 + static_cast<int>(rng.index(3));
        std::vector<double> sr, sf;
        for (int k = 0; k < nr; ++k) sr.push_back(rng.uniform(-2.0, 2.0));
        for (int k = 0; k < nf; ++k) sf.push_back(rng.uniform(-2.0, 2.0));
        const double tau = rng.uniform(0.1, 1.0);
        const bool incl = rng.index(2) == 0;

        std::vector<double> dr, df;
        const double loss = supcon_sim_grads(sr, sf, tau, incl, dr, df);
        CHECK(loss == Approx(supcon_from_sims(sr, sf, tau, incl)).margin(1e-12));

        const double h = 1e-6;
        auto fd = [&](std::vector<double>& v, std::size_t i) {
            const double keep = v[i];
            v[i] = keep + h;
            const double up = supcon_from_sims(sr, sf, tau, incl);
            v[i] = keep - h;
            const double dn = supcon_from_sims(sr, sf, tau, incl);
            v[i] = keep;
            return (up - dn) / (2 * h);
        };
        for (std::size_t i = 0; i < sr.size(); ++i) {
            CHECK(dr[i] == Approx(fd(sr, i)).margin(1e-5));
        }
        for (std::size_t i = 0; i < sf.size(); ++i) {
            CHECK(df[i] == Approx(fd(sf, i)).margin(1e-5));
        }
    }
}

TEST_CASE("contrastive loss over embeddings uses dot products", "[model]") {
    // Orthonormal-ish embeddings with hand-picked dot products against z_img.
    const std::vector<double> z = {1.0, 0.0, 0.0};
    const std::vector<std::vector<double>> reals = {{0.8, 0.6, 0.0}};
    const std::vector<std::vector<double>> fakes = {{0.2, 0.0, 0.9797958971132712},
                                                    {0.4, 0.916515138991168, 0.0}};
    // Dots are 0.8, 0.2 and 0.4, so this is the worked example again.
    CHECK(supcon_loss(z, reals, fakes, 1.0) == Approx(0.19813886938159175).margin(1e-12));
    CHECK(supcon_loss(z, reals, fakes, 1.0) ==
          Approx(supcon_from_sims({0.8}, {0.2, 0.4}, 1.0)).margin(1e-15));
    CHECK_THROWS_AS(supcon_loss(z, {{1.0, 0.0}}, fakes, 1.0), UsageError);
}

TEST_CASE("veracity cross entropy is clamped and finite", "[model]") {
    CHECK(bce_clamped(0.5, 1) == Approx(0.6931471805599453).margin(1e-15));
    CHECK(bce_clamped(0.5, 0) == Approx(0.6931471805599453).margin(1e-15));
    // Saturated probabilities stay finite thanks to the clamp.
    CHECK(std::isfinite(bce_clamped(0.0, 1)));
    CHECK(std::isfinite(bce_clamped(1.0, 0)));
    CHECK(bce_clamped(0.0, 1) == Approx(-std::log(kProbClamp)).margin(1e-12));
    CHECK(bce_clamped(1.0, 1) == Approx(-std::log(1.0 - kProbClamp)).margin(1e-15));
    // Label symmetry: predicting p for label 1 costs the same as 1-p for label 0.
    Rng rng(31);
    for (int i = 0; i < 100; ++i) {
        const double p = rng.uniform(0.001, 0.999);
        CHECK(bce_clamped(p, 1) == Approx(bce_clamped(1.0 - p, 0)).margin(1e-12));
    }
}

TEST_CASE("grounding loss matches the worked example", "[model]") {
    Prediction pred;
    pred.box = BBox{0.5, 0.5, 0.5, 0.5};
    pred.e_p = 0.5;
    const BBox target = kZeroBox;  // fabricated finding: target box collapses to zero
    const RegWeights w;            // all weights 1

    SECTION("per-term decomposition") {
        RegWeights only;
        only.l1 = 1;
        only.giou = only.mse = only.bce = 0;
        CHECK(regression_loss(pred, target, 0, only) == Approx(2.0).margin(1e-12));
        only = RegWeights{0, 0, 1, 0};
        CHECK(regression_loss(pred, target, 0, only) == Approx(1.0).margin(1e-12));
        only = RegWeights{0, 1, 0, 0};
        // giou(pred, zero) = 0 - (1 - 0.25)/1 = -0.75, so the term is 1.75.
        CHECK(regression_loss(pred, target, 0, only) == Approx(1.75).margin(1e-12));
        only = RegWeights{0, 0, 0, 1};
        CHECK(regression_loss(pred, target, 0, only) ==
              Approx(0.6931471805599453).margin(1e-12));
    }
    SECTION("weighted sum") {
        CHECK(regression_loss(pred, target, 0, w) == Approx(5.443147180559945).margin(1e-12));
        // The total is linear in the weights.
        RegWeights scaled{2.0, 0.5, 3.0, 1.5};
        const double expect = 2.0 * 2.0 + 0.5 * 1.75 + 3.0 * 1.0 + 1.5 * 0.6931471805599453;
        CHECK(regression_loss(pred, target, 0, scaled) == Approx(expect).margin(1e-12));
    }
    SECTION("degenerate-hull convention changes only the overlap term") {
        // Treating all of the hull as slack penalty: giou = -1, term = 2.
        CHECK(regression_loss(pred, target, 0, w, GiouConvention::paper_literal) ==
              Approx(5.693147180559945).margin(1e-12));
    }
    SECTION("perfect prediction scores nearly zero") {
        Prediction good;
        good.box = BBox{0.2, 0.3, 0.4, 0.25};
        good.e_p = 1.0;  // clamped internally
        CHECK(regression_loss(good, good.box, 1, w) < 1e-6);
    }
    SECTION("non-negative under the standard overlap convention") {
        Rng rng(41);
        for (int i = 0; i < 300; ++i) {
            Prediction p;
            p.box = BBox{rng.uniform(0.0, 0.6), rng.uniform(0.0, 0.6), rng.uniform(0.05, 0.4),
                         rng.uniform(0.05, 0.4)};
            p.e_p = rng.uniform(0.0, 1.0);
            const BBox t = i % 7 == 0 ? kZeroBox
                                      : BBox{rng.uniform(0.0, 0.6), rng.uniform(0.0, 0.6),
                                             rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
            CHECK(regression_loss(p, t, i % 2, w) >= 0.0);
        }
    }
    SECTION("veracity target must be binary") {
        CHECK_THROWS_AS(regression_loss(pred, target, 2, w), UsageError);
        CHECK_THROWS_AS(regression_loss(pred, target, -1, w), UsageError);
    }
}

TEST_CASE("box loss gradient matches finite differences", "[model]") {
    Rng rng(51);
    const double h = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 400; ++trial) {
        BBox p{rng.uniform(0.05, 0.55), rng.uniform(0.05, 0.55), rng.uniform(0.05, 0.4),
               rng.uniform(0.05, 0.4)};
        const BBox t = trial % 9 == 0 ? kZeroBox
                                      : BBox{rng.uniform(0.05, 0.55), rng.uniform(0.05, 0.55),
                                             rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
        // Both the L1 term and the overlap term have kinks where coordinates or
        // box corners coincide; skip trials too close to one for central
        // differences to be meaningful.
        bool near_kink = false;
        const double coords_p[4] = {p.x, p.y, p.w, p.h};
        const double coords_t[4] = {t.x, t.y, t.w, t.h};
        for (int i = 0; i < 4 && !near_kink; ++i) {
            if (std::abs(coords_p[i] - coords_t[i]) < 1e-4) near_kink = true;
        }
        // Corner alignments that flip the interval min/max choices.
        const double edges_p[4] = {p.x, p.x + p.w, p.y, p.y + p.h};
        const double edges_t[4] = {t.x, t.x + t.w, t.y, t.y + t.h};
        for (int i = 0; i < 4 && !near_kink; ++i) {
            if (std::abs(edges_p[i] - edges_t[i]) < 1e-4) near_kink = true;
        }
        if (near_kink) continue;

        const RegWeights w{rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0),
                           1.0};
        const GiouConvention conv =
            trial % 2 ? GiouConvention::standard : GiouConvention::paper_literal;
        std::array<double, 4> grad{};
        const double base = box_loss_grad(p, t, w, conv, &grad);
        CHECK(base == Approx(box_loss_grad(p, t, w, conv, nullptr)).margin(1e-15));

        double* fields[4] = {&p.x, &p.y, &p.w, &p.h};
        for (int i = 0; i < 4; ++i) {
            const double keep = *fields[i];
            *fields[i] = keep + h;
            const double up = box_loss_grad(p, t, w, conv, nullptr);
            *fields[i] = keep - h;
            const double dn = box_loss_grad(p, t, w, conv, nullptr);
            *fields[i] = keep;
            const double fd = (up - dn) / (2 * h);
            CHECK(grad[i] == Approx(fd).margin(1e-4 * std::max(1.0, std::abs(fd))));
        }
        ++checked;
    }
    CHECK(checked >= 200);
}

TEST_CASE("patch features average pixel blocks", "[model]") {
    ToyImage img;
    img.image_id = "t";
    img.size = 16;
    img.pixels.assign(256, 0.5);
    SECTION("constant image gives constant features") {
        const std::vector<double> f = extract_patch_features(img, 8);
        REQUIRE(f.size() == 4);
        for (double v : f) CHECK(v == 0.5);
    }
    SECTION("each feature is its own block mean") {
        // Paint the four 8x8 quadrants with distinct constants.
        for (int y = 0; y < 16; ++y) {
            for (int x = 0; x < 16; ++x) {
                img.at(x, y) = (y < 8 ? (x < 8 ? 0.1 : 0.2) : (x < 8 ? 0.3 : 0.4));
            }
        }
        const std::vector<double> f = extract_patch_features(img, 8);
        REQUIRE(f.size() == 4);
        CHECK(f[0] == Approx(0.1).margin(1e-15));
        CHECK(f[1] == Approx(0.2).margin(1e-15));
        CHECK(f[2] == Approx(0.3).margin(1e-15));
        CHECK(f[3] == Approx(0.4).margin(1e-15));
    }
    SECTION("patch 4 yields a 4x4 grid") {
        CHECK(extract_patch_features(img, 4).size() == 16);
    }
}

TEST_CASE("encoders are deterministic unit vectors", "[model]") {
    FCModel m;
    m.init(lex(), tiny_config(), 2024);
    const ToyImage img = make_image("img-1", 32, 99);

    SECTION("image embedding") {
        const std::vector<double> z1 = encode_image(m, img);
        const std::vector<double> z2 = encode_image(m, img);
        REQUIRE(z1.size() == static_cast<std::size_t>(m.cfg.d_joint));
        CHECK(z1 == z2);
        double norm = 0.0;
        for (double v : z1) norm += v * v;
        CHECK(std::sqrt(norm) == Approx(1.0).margin(1e-9));
    }
    SECTION("image size must match the configuration") {
        CHECK_THROWS_AS(encode_image(m, make_image("bad", 16, 1)), SchemaError);
    }
    SECTION("finding embedding is canonical-form invariant") {
        const FFL a = parse_ffl("disease|yes|edema|left lung");
        const FFL b = parse_ffl("Disease | YES |  Edema | Left   LUNG");
        CHECK(encode_ffl(m, a, lex()) == encode_ffl(m, b, lex()));
        double norm = 0.0;
        for (double v : encode_ffl(m, a, lex())) norm += v * v;
        CHECK(std::sqrt(norm) == Approx(1.0).margin(1e-9));
    }
    SECTION("polarity flips the embedding") {
        const std::vector<double> zy = encode_ffl(m, parse_ffl("disease|yes|edema"), lex());
        const std::vector<double> zn = encode_ffl(m, parse_ffl("disease|no|edema"), lex());
        double diff = 0.0;
        for (std::size_t i = 0; i < zy.size(); ++i) diff += (zy[i] - zn[i]) * (zy[i] - zn[i]);
        CHECK(std::sqrt(diff) > 1e-3);
    }
    SECTION("token ids") {
        const TokenIds with = m.token_ids(lex().canonicalize(parse_ffl("disease|no|edema|cranium")));
        CHECK(with.pol == 0);  // "no" is polarity slot 0
        const TokenIds without = m.token_ids(lex().canonicalize(parse_ffl("disease|yes|edema")));
        CHECK(without.anat == static_cast<int>(m.regions.size()));
        CHECK_THROWS_AS(m.token_ids(lex().canonicalize(parse_ffl("disease|yes|wibble"))),
                        SchemaError);
    }
}

TEST_CASE("predictions stay in range and report failures per finding", "[model]") {
    FCModel m;
    m.init(lex(), tiny_config(), 7);
    const ToyImage img = make_image("img-2", 32, 5);

    std::vector<FFL> ffls;
    ffls.push_back(parse_ffl("disease|yes|edema|left lung"));
    ffls.push_back(parse_ffl("disease|yes|wibble"));  // not in the vocabulary
    ffls.push_back(parse_ffl("disease|yes|edema|left lung"));

    const std::vector<Prediction> preds = predict(m, img, ffls, lex());
    REQUIRE(preds.size() == 3);

    CHECK(preds[0].ok);
    CHECK(preds[0].e_p > 0.0);
    CHECK(preds[0].e_p < 1.0);
    for (double v : {preds[0].box.x, preds[0].box.y, preds[0].box.w, preds[0].box.h}) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    CHECK_FALSE(preds[1].ok);
    CHECK_FALSE(preds[1].error.empty());
    CHECK(is_zero_box(preds[1].box));
    CHECK(preds[1].e_p == 0.0);

    // Identical findings get identical predictions.
    CHECK(preds[2].box.x == preds[0].box.x);
    CHECK(preds[2].e_p == preds[0].e_p);

    SECTION("every ablation mode produces in-range predictions") {
        for (AblationMode mode :
             {AblationMode::bce, AblationMode::sep, AblationMode::dual}) {
            FCConfig c = tiny_config();
            c.mode = mode;
            FCModel mm;
            mm.init(lex(), c, 7);
            const Prediction p = predict(mm, img, {ffls[0]}, lex()).at(0);
            CHECK(p.ok);
            CHECK(p.e_p > 0.0);
            CHECK(p.e_p < 1.0);
            CHECK(p.box.w > 0.0);
        }
    }
}

TEST_CASE("checkpoints round-trip through disk exactly", "[model]") {
    // Train a deliberately tiny model on a handful of generated samples.
    ToyConfig tw;
    tw.negative_mention_prob = 0.2;
    GoldCorpus gold = generate_gold(10, lex(), tw, 321);
    std::map<std::string, ToyImage> images;
    for (auto& im : gold.images) images.emplace(im.image_id, std::move(im));

    FCConfig cfg = tiny_config();
    cfg.image_size = tw.image_size;
    cfg.patch_size = 16;
    cfg.epochs = 2;

    const std::vector<Sample> train_set(gold.samples.begin(), gold.samples.begin() + 8);
    const std::vector<Sample> val_set(gold.samples.begin() + 8, gold.samples.end());
    const Checkpoint ck = train(train_set, val_set, images, lex(), cfg, 777);

    REQUIRE(ck.epoch_metrics.size() == 2);
    CHECK(ck.seed == 777);

    TempDir tmp;
    const std::string path = (tmp.path / "model.json").string();
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);

    SECTION("configuration and metrics survive") {
        CHECK(fc_config_to_json(back.model.cfg) == fc_config_to_json(ck.model.cfg));
        CHECK(back.seed == ck.seed);
        CHECK(back.epoch_metrics == ck.epoch_metrics);
        CHECK(back.supcon_skipped == ck.supcon_skipped);
    }
    SECTION("predictions are bit-identical after reload") {
        const ToyImage& img = images.begin()->second;
        const std::vector<FFL> ffls = {parse_ffl("disease|yes|edema|left lung"),
                                       parse_ffl("disease|no|opacity")};
        const auto before = predict(ck.model, img, ffls, lex());
        const auto after = predict(back.model, img, ffls, lex());
        REQUIRE(before.size() == after.size());
        for (std::size_t i = 0; i < before.size(); ++i) {
            CHECK(before[i].box.x == after[i].box.x);
            CHECK(before[i].box.y == after[i].box.y);
            CHECK(before[i].box.w == after[i].box.w);
            CHECK(before[i].box.h == after[i].box.h);
            CHECK(before[i].e_p == after[i].e_p);
        }
    }
    SECTION("tampered checkpoints are rejected") {
        std::ifstream in(path);
        nlohmann::json j = nlohmann::json::parse(in);
        nlohmann::json wrong_kind = j;
        wrong_kind["kind"] = "fc-model";
        CHECK_THROWS_AS(checkpoint_from_json(wrong_kind), SchemaError);
        nlohmann::json missing = j;
        missing["params"].erase(missing["params"].begin().key());
        CHECK_THROWS_AS(checkpoint_from_json(missing), SchemaError);
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_checkpoint((tmp.path / "absent.json").string()), UsageError);
    }
    SECTION("training log is line-delimited JSON with one row per epoch") {
        const std::string log_path = (tmp.path / "log.jsonl").string();
        write_training_log(ck, log_path);
        std::ifstream in(log_path);
        std::string line;
        int rows = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const nlohmann::json row = nlohmann::json::parse(line);
            CHECK(row.contains("epoch"));
            CHECK(row.contains("supcon_loss"));
            CHECK(row.contains("reg_loss"));
            CHECK(row.contains("val_accuracy"));
            ++rows;
        }
        CHECK(rows == 2);
    }
}

TEST_CASE("training metrics and evaluation guards", "[model]") {
    ToyConfig tw;
    GoldCorpus gold = generate_gold(6, lex(), tw, 9);
    std::map<std::string, ToyImage> images;
    for (auto& im : gold.images) images.emplace(im.image_id, std::move(im));
    FCConfig cfg = tiny_config();
    cfg.image_size = tw.image_size;
    cfg.patch_size = 16;
    cfg.epochs = 1;

    SECTION("empty training corpus is an argument error") {
        CHECK_THROWS_AS(train({}, {}, images, lex(), cfg, 1), UsageError);
    }
    SECTION("validation metrics are null without a validation split") {
        const Checkpoint ck = train(gold.samples, {}, images, lex(), cfg, 1);
        REQUIRE(ck.epoch_metrics.size() == 1);
        CHECK(ck.epoch_metrics[0].at("val_accuracy").is_null());
    }
    SECTION("evaluation needs at least one finding") {
        FCModel m;
        m.init(lex(), cfg, 1);
        CHECK_THROWS_AS(eval_accuracy_miou(m, {}, images, lex()), UsageError);
    }
    SECTION("evaluation returns fractions") {
        const Checkpoint ck = train(gold.samples, {}, images, lex(), cfg, 1);
        const auto [acc, miou] = eval_accuracy_miou(ck.model, gold.samples, images, lex());
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        CHECK(miou >= 0.0);
        CHECK(miou <= 1.0);
    }
}

TEST_CASE("analytic gradients match finite differences on a tiny model", "[model]") {
    SECTION("full objective") {
        FCConfig cfg;  // grad_check shrinks the dimensions itself
        CHECK(grad_check(cfg, 2025) < 1e-4);
    }
    SECTION("smooth-only objective is tighter") {
        FCConfig cfg;
        cfg.lambda_l1 = 0.0;
        cfg.lambda_giou = 0.0;
        CHECK(grad_check(cfg, 2025) < 1e-5);
    }
    SECTION("zero loss weights give zero gradients") {
        FCConfig cfg;
        cfg.lambda_l1 = cfg.lambda_giou = cfg.lambda_mse = cfg.lambda_bce = cfg.lambda_supcon =
            0.0;
        CHECK(grad_check(cfg, 2025) < 1e-12);
    }
}
