#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factground/error.hpp"
#include "factground/ffl.hpp"
#include "factground/geometry.hpp"
#include "factground/lexicon.hpp"
#include "factground/model.hpp"
#include "factground/record.hpp"
#include "factground/region_layout.hpp"
#include "factground/rng.hpp"
#include "factground/toyworld.hpp"

namespace factground {

enum class RqConvention { standard, paper_literal };

inline std::string to_string(RqConvention c) {
    return c == RqConvention::standard ? "standard" : "paper-literal";
}

// A claim from an automated report: the FFL plus the location it indicates,
// recovered as the region box of the claimed anatomy.
struct IndicatedFinding {
    FFL ffl;
    BBox indicated_box;
};

inline IndicatedFinding make_indicated(const FFL& ffl, const RegionLayout& layout) {
    return IndicatedFinding{ffl, layout.box_of(ffl.has_anatomy() ? ffl.anatomy : kUnspecifiedAnatomy)};
}

struct AssessRow {
    FFL ffl;
    BBox indicated_box;
    BBox predicted_box;
    double e_p = 0.0;  // veracity probability (or 0/1 for ground-truth rows)
    double iou = 0.0;  // overlap of indicated vs predicted/gold location
    bool ok = true;
    std::string error;
};

struct ReportAssessment {
    std::vector<AssessRow> rows;
    double fc_score = 0.0;
    double rq = 0.0;
};

// Report-quality score: mean of the predicted-real fraction (threshold 0.5)
// and the mean indicated/predicted box overlap. The paper-literal form
// instead scores 1 when anything is predicted real and halves the IoU term.
inline double fc_score(const std::vector<AssessRow>& rows, RqConvention conv) {
    if (rows.empty()) throw UsageError("fc score is undefined for zero findings");
    const double n = static_cast<double>(rows.size());
    double iou_sum = 0.0;
    double real_n = 0.0;
    for (const auto& r : rows) {
        iou_sum += r.iou;
        if (r.e_p >= 0.5) real_n += 1.0;
    }
    if (conv == RqConvention::standard) {
        return 0.5 * (real_n / n + iou_sum / n);
    }
    return 0.5 * ((real_n > 0.0 ? 1.0 : 0.0) + iou_sum / n / 2.0);
}

inline double rq_from_fc(double fc) { return std::min(1.0, std::max(0.0, 1.0 - fc)); }

inline ReportAssessment assess_rows(std::vector<AssessRow> rows, RqConvention conv) {
    ReportAssessment a;
    a.rows = std::move(rows);
    a.fc_score = fc_score(a.rows, conv);
    a.rq = rq_from_fc(a.fc_score);
    return a;
}

// Fact-checks an automated report against the image: one model prediction per
// indicated finding, scored with the active convention. Per-row prediction
// failures degrade that row (fake, zero box) without aborting the report.
inline ReportAssessment assess_report(const FCModel& model, const ToyImage& image,
                                      const std::vector<IndicatedFinding>& indicated,
                                      const Lexicon& lex,
                                      RqConvention conv = RqConvention::standard) {
    if (indicated.empty()) throw UsageError("report has no findings to verify");
    const std::vector<double> z_img = encode_image(model, image);
    std::vector<AssessRow> rows;
    rows.reserve(indicated.size());
    for (const auto& ind : indicated) {
        const Prediction p = predict_one(model, z_img, ind.ffl, lex);
        AssessRow row;
        row.ffl = ind.ffl;
        row.indicated_box = ind.indicated_box;
        row.predicted_box = p.ok ? p.box : kZeroBox;
        row.e_p = p.ok ? p.e_p : 0.0;
        row.iou = iou(row.indicated_box, row.predicted_box);
        row.ok = p.ok;
        row.error = p.error;
        rows.push_back(std::move(row));
    }
    return assess_rows(std::move(rows), conv);
}

// Same score computed against ground truth: a row counts as real iff its
// polarity+finding matches a genuine gold finding (anatomy differences are
// left to the location term), and its location is scored against the matched
// gold box.
inline double rq_ground_truth(const std::vector<IndicatedFinding>& indicated, const Sample& gold,
                              const Lexicon& lex, RqConvention conv = RqConvention::standard) {
    if (indicated.empty()) throw UsageError("report has no findings to verify");
    std::vector<AssessRow> rows;
    rows.reserve(indicated.size());
    for (const auto& ind : indicated) {
        const FFL f = lex.canonicalize(ind.ffl);
        AssessRow row;
        row.ffl = ind.ffl;
        row.indicated_box = ind.indicated_box;
        row.e_p = 0.0;
        row.iou = 0.0;
        for (const auto& g : gold.findings) {
            if (g.veracity != 1) continue;
            if (g.ffl.positive != f.positive || g.ffl.core_finding != f.core_finding) continue;
            row.e_p = 1.0;
            row.iou = std::max(row.iou, iou(ind.indicated_box, g.box));
            row.predicted_box = g.box;
        }
        rows.push_back(std::move(row));
    }
    return assess_rows(std::move(rows), conv).rq;
}

// Lin's concordance correlation coefficient with population (1/n) moments.
inline double ccc(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw UsageError("ccc inputs differ in length");
    if (x.size() < 2) throw UsageError("ccc needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        vx += (x[i] - mx) * (x[i] - mx);
        vy += (y[i] - my) * (y[i] - my);
        cov += (x[i] - mx) * (y[i] - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    const double denom = vx + vy + (mx - my) * (mx - my);
    if (denom < 1e-15) return 0.0;
    return 2.0 * cov / denom;
}

inline std::pair<double, double> evaluate_model(const FCModel& model,
                                                const std::vector<Sample>& test,
                                                const std::map<std::string, ToyImage>& images,
                                                const Lexicon& lex) {
    return eval_accuracy_miou(model, test, images, lex);
}

// Oracle-injectable variant used to pin the metric definitions in tests.
inline std::pair<double, double> evaluate_with(
    const std::function<Prediction(const Sample&, const GroundedFinding&)>& predictor,
    const std::vector<Sample>& test) {
    std::int64_t correct = 0, total = 0;
    double iou_sum = 0.0;
    std::int64_t iou_n = 0;
    for (const auto& s : test) {
        for (const auto& f : s.findings) {
            const Prediction p = predictor(s, f);
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

// --- simulated report generators -------------------------------------------------

struct GeneratorProfile {
    std::string name;
    double p_reverse = 0.0, p_relocate = 0.0, p_substitute = 0.0;

    double error_rate() const { return p_reverse + p_relocate + p_substitute; }
};

inline void validate_profile(const GeneratorProfile& p) {
    if (p.p_reverse < 0 || p.p_relocate < 0 || p.p_substitute < 0 || p.error_rate() > 1.0) {
        throw SchemaError("generator profile probabilities invalid: " + p.name);
    }
}

// Corrupts a gold sample's findings into an "automated report": each finding
// is kept, polarity-flipped, claimed at a different region, or replaced by an
// unmentioned finding. Negative mentions that draw relocation are flipped
// instead (relocating an absence claim would often still be true).
inline std::vector<IndicatedFinding> simulate_generator(const Sample& gold,
                                                        const GeneratorProfile& prof,
                                                        const Lexicon& lex,
                                                        const RegionLayout& layout, Rng& rng) {
    validate_profile(prof);
    std::vector<std::string> mentioned;
    for (const auto& g : gold.findings) {
        if (g.veracity == 1) mentioned.push_back(g.ffl.core_finding);
    }
    std::vector<IndicatedFinding> out;
    for (const auto& g : gold.findings) {
        if (g.veracity != 1) continue;
        FFL f = g.ffl;
        const double u = rng.next_double();
        if (u < prof.p_reverse) {
            f = negate(f);
        } else if (u < prof.p_reverse + prof.p_relocate) {
            if (!f.positive) {
                f = negate(f);
            } else {
                const auto& names = layout.names();
                std::size_t pick = rng.index(names.size() - 1);
                std::size_t cur = names.size();
                for (std::size_t i = 0; i < names.size(); ++i) {
                    if (names[i] == f.anatomy) cur = i;
                }
                if (cur < names.size() && pick >= cur) ++pick;
                f.anatomy = names[pick];
            }
        } else if (u < prof.error_rate()) {
            std::vector<std::string> absent;
            for (const auto& cand : lex.findings()) {
                bool used = false;
                for (const auto& m : mentioned) used = used || m == cand;
                if (!used) absent.push_back(cand);
            }
            if (!absent.empty()) {
                const std::string core = absent[rng.index(absent.size())];
                f = FFL{lex.finding_type(core), true, core, f.anatomy};
            }
        }
        out.push_back(make_indicated(f, layout));
    }
    return out;
}

inline std::vector<GeneratorProfile> default_generator_profiles() {
    std::vector<GeneratorProfile> out;
    const double rates[] = {0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8};
    for (double c : rates) {
        GeneratorProfile p;
        char name[32];
        std::snprintf(name, sizeof(name), "gen-e%03d", static_cast<int>(std::lround(c * 100)));
        p.name = name;
        p.p_reverse = 0.40 * c;
        p.p_relocate = 0.25 * c;
        p.p_substitute = 0.35 * c;
        out.push_back(std::move(p));
    }
    return out;
}

struct GeneratorResult {
    std::string name;
    double error_rate = 0.0;
    double mean_rq_ap = 0.0;
    double mean_rq_ag = 0.0;
};

struct ConcordanceReport {
    std::vector<GeneratorResult> generators;
    double ccc_value = 0.0;
    bool rq_ag_monotone = true;
};

// Sweeps simulated generators over a gold test split and compares the
// model-based error measure RQ(A,P) with the ground-truth measure RQ(A,G).
inline ConcordanceReport concordance_study(const FCModel& model, const std::vector<Sample>& gold,
                                           const std::map<std::string, ToyImage>& images,
                                           const Lexicon& lex,
                                           const std::vector<GeneratorProfile>& profiles,
                                           std::uint64_t seed,
                                           RqConvention conv = RqConvention::standard) {
    if (profiles.empty()) throw UsageError("no generator profiles");
    if (gold.empty()) throw UsageError("no gold samples");
    const RegionLayout layout = RegionLayout::square(lex);
    ConcordanceReport rep;
    for (std::size_t gi = 0; gi < profiles.size(); ++gi) {
        const auto& prof = profiles[gi];
        double ap_sum = 0.0, ag_sum = 0.0;
        std::size_t used = 0;
        for (std::size_t si = 0; si < gold.size(); ++si) {
            const Sample& s = gold[si];
            Rng rng(derive_seed(seed, gi * 1000003ULL + si));
            const auto indicated = simulate_generator(s, prof, lex, layout, rng);
            if (indicated.empty()) continue;
            auto it = images.find(s.image_id);
            if (it == images.end()) throw SchemaError("missing image for sample " + s.image_id);
            ap_sum += assess_report(model, it->second, indicated, lex, conv).rq;
            ag_sum += rq_ground_truth(indicated, s, lex, conv);
            ++used;
        }
        if (used == 0) throw UsageError("generator produced no reports: " + prof.name);
        rep.generators.push_back(GeneratorResult{prof.name, prof.error_rate(),
                                                 ap_sum / static_cast<double>(used),
                                                 ag_sum / static_cast<double>(used)});
    }
    std::vector<double> ap, ag;
    for (const auto& g : rep.generators) {
        ap.push_back(g.mean_rq_ap);
        ag.push_back(g.mean_rq_ag);
    }
    rep.ccc_value = ccc(ap, ag);
    for (std::size_t i = 1; i < ag.size(); ++i) {
        if (!(ag[i] > ag[i - 1])) rep.rq_ag_monotone = false;
    }
    return rep;
}

}  // namespace factground
