#include <catch2/catch_amalgamated.hpp>

#include <factground/perturb.hpp>
#include <factground/toyworld.hpp>

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

using namespace factground;
using nlohmann::json;

namespace {

const Lexicon& lex() {
    static Lexicon l = Lexicon::load(FACTGROUND_LEXICON);
    return l;
}

const RegionLayout& layout() {
    static RegionLayout r = RegionLayout::square(lex());
    return r;
}

GroundedFinding real_finding(const std::string& core, const BBox& box, bool positive = true) {
    GroundedFinding g;
    g.ffl = FFL{lex().finding_type(core), positive, core, layout().region_of(box)};
    g.box = box;
    g.veracity = 1;
    g.provenance = Provenance::original;
    return g;
}

Sample one_finding_sample(const std::string& id, const std::string& core, const BBox& box) {
    Sample s;
    s.image_id = id;
    s.image_ref = "images/" + id + ".png";
    s.findings.push_back(real_finding(core, box));
    return s;
}

// The worked trio: an edema sample, a second edema site (relocation target),
// and a lung-cyst sample (substitution source).
const BBox kEdemaBox{0.14, 0.13, 0.72, 0.56};
const BBox kOtherEdemaBox{0.85, 0.74, 0.10, 0.21};
const BBox kCystBox{0.02, 0.48, 0.10, 0.14};

std::vector<Sample> worked_corpus() {
    return {one_finding_sample("s0", "edema", kEdemaBox),
            one_finding_sample("s1", "edema", kOtherEdemaBox),
            one_finding_sample("s2", "lung cyst", kCystBox)};
}

std::string dump_corpus(const std::vector<Sample>& samples) {
    std::string out;
    for (const auto& s : samples) out += sample_to_json(s).dump() + "\n";
    return out;
}

}  // namespace

TEST_CASE("location pools accumulate positive real boxes in corpus order") {
    SECTION("singleton") {
        const auto pool = LocationPool::build({one_finding_sample("a", "edema", kEdemaBox)});
        REQUIRE(pool.of("edema").size() == 1);
        CHECK(pool.of("edema")[0] == kEdemaBox);
        CHECK(pool.of("mass").empty());
        CHECK(pool.total() == 1);
    }
    SECTION("accumulation across samples preserves order") {
        const auto pool = LocationPool::build({one_finding_sample("a", "edema", kEdemaBox),
                                               one_finding_sample("b", "edema", kOtherEdemaBox)});
        REQUIRE(pool.of("edema").size() == 2);
        CHECK(pool.of("edema")[0] == kEdemaBox);
        CHECK(pool.of("edema")[1] == kOtherEdemaBox);
    }
    SECTION("negative mentions and fakes stay out of pools") {
        Sample s = one_finding_sample("a", "edema", kEdemaBox);
        s.findings.push_back(real_finding("mass", kCystBox, /*positive=*/false));
        Sample t = one_finding_sample("b", "mass", kOtherEdemaBox);
        t.findings.push_back({parse_ffl("disease|no|mass"), kZeroBox, 0, Provenance::reversal});
        const auto pool = LocationPool::build({s, t});
        CHECK(pool.of("edema").size() == 1);
        CHECK(pool.of("mass").size() == 1);  // only the positive real one
        CHECK(pool.of("mass")[0] == kOtherEdemaBox);
    }
    SECTION("pool sizes equal per-finding occurrence counts on a generated corpus") {
        const GoldCorpus gold = generate_gold(120, lex(), ToyConfig{}, 31);
        const auto pool = LocationPool::build(gold.samples);
        std::map<std::string, std::size_t> expect;
        for (const auto& s : gold.samples) {
            for (const auto& f : s.findings) {
                if (f.veracity == 1 && f.ffl.positive && area(f.box) > 0.0) {
                    expect[f.ffl.core_finding]++;
                }
            }
        }
        std::size_t total = 0;
        for (const auto& core : lex().findings()) {
            const auto it = expect.find(core);
            const std::size_t want = it == expect.end() ? 0 : it->second;
            CHECK(pool.of(core).size() == want);
            total += want;
        }
        CHECK(pool.total() == total);
    }
}

TEST_CASE("one rich sample yields one real plus all three fabrication kinds") {
    PerturbConfig cfg;  // 1/1/1
    const SynthCorpus synth = perturb_corpus(worked_corpus(), lex(), cfg, 17);
    REQUIRE(synth.samples.size() == 3);
    const Sample& s0 = synth.samples[0];
    REQUIRE(s0.findings.size() == 4);
    CHECK(s0.reals().size() == 1);
    CHECK(s0.fakes().size() == 3);

    const GroundedFinding& rev = s0.findings[1];
    const GroundedFinding& rel = s0.findings[2];
    const GroundedFinding& sub = s0.findings[3];

    // Reversal: polarity flips, the box is withdrawn entirely.
    CHECK(rev.provenance == Provenance::reversal);
    CHECK(rev.ffl.positive == false);
    CHECK(rev.ffl.core_finding == "edema");
    CHECK(rev.ffl.anatomy == s0.findings[0].ffl.anatomy);
    CHECK(rev.box == kZeroBox);
    CHECK(rev.veracity == 0);

    // Relocation: same finding moved to the only other pooled edema site,
    // with the stated anatomy following the box.
    CHECK(rel.provenance == Provenance::relocate);
    CHECK(rel.ffl.positive == true);
    CHECK(rel.ffl.core_finding == "edema");
    CHECK(rel.box == kOtherEdemaBox);
    CHECK(rel.ffl.anatomy == layout().region_of(kOtherEdemaBox));
    CHECK(rel.veracity == 0);
    CHECK(iou(rel.box, s0.findings[0].box) < cfg.overlap_threshold);

    // Substitution: the only absent, non-contradicting finding with a pool.
    CHECK(sub.provenance == Provenance::substitution);
    CHECK(sub.ffl.positive == true);
    CHECK(sub.ffl.core_finding == "lung cyst");
    CHECK(sub.box == kCystBox);
    CHECK(sub.ffl.anatomy == layout().region_of(kCystBox));
    CHECK(sub.veracity == 0);

    // Accounting: the cyst sample cannot relocate (singleton pool).
    CHECK(synth.report.samples == 3);
    CHECK(synth.report.reversal_requested == 3);
    CHECK(synth.report.reversal_produced == 3);
    CHECK(synth.report.relocate_requested == 3);
    CHECK(synth.report.relocate_produced == 2);
    CHECK(synth.report.substitute_requested == 3);
    CHECK(synth.report.substitute_produced == 3);
    CHECK(synth.report.skip_reasons.at("relocate:no-eligible-target") == 1);
}

TEST_CASE("empty gold perturbs to empty output") {
    const SynthCorpus synth = perturb_corpus({}, lex(), PerturbConfig{}, 1);
    CHECK(synth.samples.empty());
    CHECK(synth.report.samples == 0);
    CHECK(synth.report.reversal_requested == 0);
}

TEST_CASE("duplicate fabrications are skipped, not emitted") {
    PerturbConfig cfg;
    cfg.n_reversal = 2;  // second flip of the same finding would repeat
    cfg.n_relocate = 0;
    cfg.n_substitute = 0;
    const SynthCorpus synth =
        perturb_corpus({one_finding_sample("a", "edema", kEdemaBox)}, lex(), cfg, 3);
    CHECK(synth.samples[0].findings.size() == 2);
    CHECK(synth.report.reversal_produced == 1);
    CHECK(synth.report.skip_reasons.at("reversal:no-eligible-source") == 1);
}

TEST_CASE("negative mentions are reversal sources only by explicit opt-in") {
    Sample s;
    s.image_id = "neg";
    s.image_ref = "images/neg.png";
    s.findings.push_back(real_finding("edema", kEdemaBox, /*positive=*/false));
    PerturbConfig cfg;
    cfg.n_relocate = 0;
    cfg.n_substitute = 0;

    SECTION("default: skipped") {
        const SynthCorpus synth = perturb_corpus({s}, lex(), cfg, 4);
        CHECK(synth.samples[0].findings.size() == 1);
        CHECK(synth.report.skip_reasons.at("reversal:no-eligible-source") == 1);
    }
    SECTION("opted in: no-polarity source flips to a yes-polarity zero-box fake") {
        cfg.reverse_negatives = true;
        const SynthCorpus synth = perturb_corpus({s}, lex(), cfg, 4);
        REQUIRE(synth.samples[0].findings.size() == 2);
        const auto& f = synth.samples[0].findings[1];
        CHECK(f.ffl.positive == true);
        CHECK(f.box == kZeroBox);
        CHECK(f.veracity == 0);
        CHECK(f.provenance == Provenance::reversal);
    }
}

TEST_CASE("relocation needs a distinct pooled location") {
    PerturbConfig cfg;
    cfg.n_reversal = 0;
    cfg.n_substitute = 0;
    const SynthCorpus synth =
        perturb_corpus({one_finding_sample("solo", "edema", kEdemaBox)}, lex(), cfg, 9);
    CHECK(synth.samples[0].findings.size() == 1);
    CHECK(synth.report.relocate_produced == 0);
    CHECK(synth.report.skip_reasons.at("relocate:no-eligible-target") == 1);
}

TEST_CASE("relocation picks uniformly among eligible pool entries") {
    // Six samples, one edema each, at six well-separated grid sites. For
    // sample 0 every other site is eligible, so across a fixed seed sweep the
    // five picks must be uniform within 3 sigma.
    const std::array<BBox, 6> sites{BBox{0.02, 0.02, 0.10, 0.10}, BBox{0.52, 0.02, 0.10, 0.10},
                                    BBox{0.19, 0.19, 0.10, 0.10}, BBox{0.69, 0.36, 0.10, 0.10},
                                    BBox{0.36, 0.52, 0.10, 0.10}, BBox{0.86, 0.86, 0.10, 0.10}};
    std::vector<Sample> gold;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        gold.push_back(one_finding_sample("u" + std::to_string(i), "edema", sites[i]));
    }
    PerturbConfig cfg;
    cfg.n_reversal = 0;
    cfg.n_substitute = 0;

    const int n_seeds = 10000;
    std::array<int, 6> counts{};
    for (int seed = 0; seed < n_seeds; ++seed) {
        const SynthCorpus synth = perturb_corpus(gold, lex(), cfg, static_cast<std::uint64_t>(seed));
        const auto fakes = synth.samples[0].fakes();
        REQUIRE(fakes.size() == 1);
        bool matched = false;
        for (std::size_t k = 1; k < sites.size(); ++k) {
            if (fakes[0].box == sites[k]) {
                counts[k]++;
                matched = true;
            }
        }
        CHECK(matched);  // always a pool member, never the source site
    }
    CHECK(counts[0] == 0);
    const double p = 1.0 / 5.0;
    const double sigma = std::sqrt(n_seeds * p * (1 - p));
    for (std::size_t k = 1; k < sites.size(); ++k) {
        CHECK(std::abs(counts[k] - n_seeds * p) <= 3.0 * sigma);
    }
}

TEST_CASE("substitution respects mentions and contradictions") {
    SECTION("a finding mentioned negatively is still off-limits") {
        Sample s0 = one_finding_sample("m0", "edema", kEdemaBox);
        s0.findings.push_back(real_finding("mass", kCystBox, /*positive=*/false));
        std::vector<Sample> gold{s0, one_finding_sample("m1", "mass", kOtherEdemaBox),
                                 one_finding_sample("m2", "lung cyst", kCystBox)};
        PerturbConfig cfg;
        cfg.n_reversal = 0;
        cfg.n_relocate = 0;
        for (int seed = 0; seed < 50; ++seed) {
            const SynthCorpus synth = perturb_corpus(gold, lex(), cfg, seed);
            const auto fakes = synth.samples[0].fakes();
            REQUIRE(fakes.size() == 1);
            CHECK(fakes[0].ffl.core_finding == "lung cyst");
        }
    }
    SECTION("contradicting findings are never substituted in") {
        REQUIRE(lex().contradicts("clear lungs", "edema"));
        std::vector<Sample> gold{one_finding_sample("c0", "clear lungs", kEdemaBox),
                                 one_finding_sample("c1", "edema", kOtherEdemaBox),
                                 one_finding_sample("c2", "lung cyst", kCystBox)};
        PerturbConfig cfg;
        cfg.n_reversal = 0;
        cfg.n_relocate = 0;
        for (int seed = 0; seed < 50; ++seed) {
            const SynthCorpus synth = perturb_corpus(gold, lex(), cfg, seed);
            const auto fakes = synth.samples[0].fakes();
            REQUIRE(fakes.size() == 1);
            CHECK(fakes[0].ffl.core_finding == "lung cyst");
        }
    }
}

TEST_CASE("fake consistency checker rejects crafted violations") {
    Sample s = one_finding_sample("bad", "edema", kEdemaBox);
    SECTION("fake restating a real") {
        GroundedFinding f = s.findings[0];
        f.veracity = 0;
        f.provenance = Provenance::relocate;
        f.box = kOtherEdemaBox;
        f.ffl.anatomy = layout().region_of(kOtherEdemaBox);  // moved: distinct statement
        s.findings.push_back(f);
        CHECK_NOTHROW(check_fake_consistency(s, lex()));
        // An identical statement is a restatement even at a different box.
        s.findings.back().ffl = s.findings[0].ffl;
        CHECK_THROWS_AS(check_fake_consistency(s, lex()), SchemaError);
    }
    SECTION("non-reversal fake negating a real") {
        GroundedFinding f;
        f.ffl = negate(s.findings[0].ffl);
        f.box = kOtherEdemaBox;
        f.veracity = 0;
        f.provenance = Provenance::substitution;
        s.findings.push_back(f);
        CHECK_THROWS_AS(check_fake_consistency(s, lex()), SchemaError);
    }
    SECTION("substituted contradiction") {
        GroundedFinding f;
        f.ffl = FFL{lex().finding_type("clear lungs"), true, "clear lungs",
                    layout().region_of(kOtherEdemaBox)};
        f.box = kOtherEdemaBox;
        f.veracity = 0;
        f.provenance = Provenance::substitution;
        s.findings.push_back(f);
        CHECK_THROWS_AS(check_fake_consistency(s, lex()), SchemaError);
    }
}

TEST_CASE("generated synthetic corpus satisfies every structural guarantee") {
    const GoldCorpus gold = generate_gold(300, lex(), ToyConfig{}, 11);
    const SynthCorpus synth = perturb_corpus(gold.samples, lex(), PerturbConfig{}, 5);
    REQUIRE(synth.samples.size() == gold.samples.size());

    // Independent pool reconstruction straight off the gold corpus.
    std::map<std::string, std::vector<BBox>> pools;
    for (const auto& s : gold.samples) {
        for (const auto& f : s.findings) {
            if (f.veracity == 1 && f.ffl.positive) pools[f.ffl.core_finding].push_back(f.box);
        }
    }
    const auto pooled = [&](const std::string& core, const BBox& b) {
        const auto it = pools.find(core);
        if (it == pools.end()) return false;
        for (const auto& pb : it->second) {
            if (pb == b) return true;
        }
        return false;
    };

    int n_rev = 0, n_rel = 0, n_sub = 0, n_real = 0;
    for (std::size_t i = 0; i < synth.samples.size(); ++i) {
        const Sample& s = synth.samples[i];
        const Sample& g = gold.samples[i];
        // Originals survive unchanged, in order, at the front.
        REQUIRE(s.findings.size() >= g.findings.size());
        for (std::size_t k = 0; k < g.findings.size(); ++k) {
            CHECK(s.findings[k] == g.findings[k]);
        }
        const auto reals = s.reals();
        for (const auto& f : s.findings) {
            if (f.veracity == 1) {
                ++n_real;
                continue;
            }
            // Zero box if and only if reversal.
            CHECK((f.provenance == Provenance::reversal) == is_zero_box(f.box));
            switch (f.provenance) {
                case Provenance::reversal: ++n_rev; break;
                case Provenance::relocate:
                    ++n_rel;
                    CHECK(pooled(f.ffl.core_finding, f.box));
                    CHECK(f.ffl.anatomy == layout().region_of(f.box));
                    break;
                case Provenance::substitution:
                    ++n_sub;
                    CHECK(pooled(f.ffl.core_finding, f.box));
                    CHECK(f.ffl.positive);
                    break;
                case Provenance::original: FAIL("fake with original provenance"); break;
            }
            for (const auto& r : reals) {
                CHECK(f.ffl != r.ffl);
                if (f.provenance != Provenance::reversal) CHECK(f.ffl != negate(r.ffl));
                if (f.provenance == Provenance::substitution) {
                    CHECK_FALSE(lex().contradicts(f.ffl.core_finding, r.ffl.core_finding));
                    CHECK_FALSE(r.ffl.core_finding == f.ffl.core_finding);
                }
            }
        }
    }
    // Report counts equal an independent recount of the output.
    CHECK(synth.report.reversal_produced == n_rev);
    CHECK(synth.report.relocate_produced == n_rel);
    CHECK(synth.report.substitute_produced == n_sub);
    CHECK(synth.report.reversal_requested == static_cast<int>(gold.samples.size()));
    const int skipped = synth.report.reversal_requested - n_rev +
                        synth.report.relocate_requested - n_rel +
                        synth.report.substitute_requested - n_sub;
    int reported_skips = 0;
    for (const auto& [_, v] : synth.report.skip_reasons) reported_skips += v;
    CHECK(skipped == reported_skips);

    const json rep = perturb_report_to_json(synth.report);
    CHECK(rep.at("reversal").at("produced") == n_rev);
    CHECK(rep.at("samples") == 300);
}

TEST_CASE("identical inputs give byte-identical synthetic corpora") {
    const GoldCorpus gold = generate_gold(40, lex(), ToyConfig{}, 21);
    PerturbConfig cfg;
    cfg.n_relocate = 2;
    const SynthCorpus a = perturb_corpus(gold.samples, lex(), cfg, 77);
    const SynthCorpus b = perturb_corpus(gold.samples, lex(), cfg, 77);
    CHECK(dump_corpus(a.samples) == dump_corpus(b.samples));
    const SynthCorpus c = perturb_corpus(gold.samples, lex(), cfg, 78);
    CHECK(dump_corpus(a.samples) != dump_corpus(c.samples));
}

TEST_CASE("perturbation requires a purely genuine input corpus") {
    Sample s = one_finding_sample("g", "edema", kEdemaBox);
    s.findings.push_back({negate(s.findings[0].ffl), kZeroBox, 0, Provenance::reversal});
    CHECK_THROWS_AS(perturb_corpus({s}, lex(), PerturbConfig{}, 1), SchemaError);
}

TEST_CASE("perturbation config JSON") {
    PerturbConfig c;
    c.n_relocate = 2;
    c.overlap_threshold = 0.3;
    const PerturbConfig back = perturb_config_from_json(perturb_config_to_json(c));
    CHECK(back.n_relocate == 2);
    CHECK(back.overlap_threshold == 0.3);
    CHECK(back.n_reversal == 1);

    CHECK_THROWS_AS(perturb_config_from_json(json{{"n_reversal", -1}}), SchemaError);
    CHECK_THROWS_AS(perturb_config_from_json(json{{"overlap_threshold", 1.5}}), SchemaError);
    CHECK_THROWS_AS(perturb_config_from_json(json{{"typo_key", 1}}), SchemaError);
}
