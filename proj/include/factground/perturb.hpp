#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factground/error.hpp"
#include "factground/ffl.hpp"
#include "factground/geometry.hpp"
#include "factground/json_util.hpp"
#include "factground/lexicon.hpp"
#include "factground/record.hpp"
#include "factground/region_layout.hpp"
#include "factground/rng.hpp"

namespace factground {

struct PerturbConfig {
    int n_reversal = 1;
    int n_relocate = 1;
    int n_substitute = 1;
    double overlap_threshold = 0.2;
    bool reverse_negatives = false;  // allow negative mentions as reversal sources
};

inline nlohmann::json perturb_config_to_json(const PerturbConfig& c) {
    return nlohmann::json{{"n_reversal", c.n_reversal},
                          {"n_relocate", c.n_relocate},
                          {"n_substitute", c.n_substitute},
                          {"overlap_threshold", c.overlap_threshold},
                          {"reverse_negatives", c.reverse_negatives}};
}

inline PerturbConfig perturb_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(
        j, {"n_reversal", "n_relocate", "n_substitute", "overlap_threshold", "reverse_negatives"},
        "perturb");
    PerturbConfig c;
    if (j.contains("n_reversal")) c.n_reversal = j.at("n_reversal").get<int>();
    if (j.contains("n_relocate")) c.n_relocate = j.at("n_relocate").get<int>();
    if (j.contains("n_substitute")) c.n_substitute = j.at("n_substitute").get<int>();
    if (j.contains("overlap_threshold")) c.overlap_threshold = j.at("overlap_threshold").get<double>();
    if (j.contains("reverse_negatives")) c.reverse_negatives = j.at("reverse_negatives").get<bool>();
    if (c.n_reversal < 0 || c.n_relocate < 0 || c.n_substitute < 0) {
        throw SchemaError("perturbation counts must be >= 0");
    }
    if (c.overlap_threshold < 0.0 || c.overlap_threshold > 1.0) {
        throw SchemaError("overlap_threshold outside [0, 1]");
    }
    return c;
}

struct PerturbReport {
    int samples = 0;
    int reversal_requested = 0, reversal_produced = 0;
    int relocate_requested = 0, relocate_produced = 0;
    int substitute_requested = 0, substitute_produced = 0;
    std::map<std::string, int> skip_reasons;
};

inline nlohmann::json perturb_report_to_json(const PerturbReport& r) {
    nlohmann::json reasons = nlohmann::json::object();
    for (const auto& [k, v] : r.skip_reasons) reasons[k] = v;
    return nlohmann::json{{"samples", r.samples},
                          {"reversal", {{"requested", r.reversal_requested}, {"produced", r.reversal_produced}}},
                          {"relocate", {{"requested", r.relocate_requested}, {"produced", r.relocate_produced}}},
                          {"substitute", {{"requested", r.substitute_requested}, {"produced", r.substitute_produced}}},
                          {"skip_reasons", reasons}};
}

// Corpus-wide pool of observed boxes per canonical finding, built from
// positive real findings. Order follows corpus order, so lookups are
// deterministic.
class LocationPool {
  public:
    static LocationPool build(const std::vector<Sample>& samples) {
        LocationPool p;
        for (const auto& s : samples) {
            for (const auto& f : s.findings) {
                if (f.veracity == 1 && f.ffl.positive && !is_zero_box(f.box)) {
                    p.boxes_[f.ffl.core_finding].push_back(f.box);
                }
            }
        }
        return p;
    }

    const std::vector<BBox>& of(const std::string& core) const {
        static const std::vector<BBox> empty;
        auto it = boxes_.find(core);
        return it == boxes_.end() ? empty : it->second;
    }

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [_, v] : boxes_) n += v.size();
        return n;
    }

  private:
    std::map<std::string, std::vector<BBox>> boxes_;
};

// A fabricated finding must never restate or directly negate a genuine one;
// the only sanctioned negation is a reversal of its own source.
inline void check_fake_consistency(const Sample& s, const Lexicon& lex) {
    const auto reals = s.reals();
    for (const auto& f : s.findings) {
        if (f.veracity != 0) continue;
        for (const auto& r : reals) {
            if (f.ffl == r.ffl) {
                throw SchemaError(s.image_id + ": fabricated finding restates a real one: " +
                                  serialize_ffl(f.ffl));
            }
            if (f.provenance != Provenance::reversal && f.ffl == negate(r.ffl)) {
                throw SchemaError(s.image_id + ": fabricated finding negates a real one: " +
                                  serialize_ffl(f.ffl));
            }
            if (f.provenance == Provenance::substitution &&
                lex.contradicts(f.ffl.core_finding, r.ffl.core_finding)) {
                throw SchemaError(s.image_id + ": substituted finding contradicts a real one");
            }
        }
    }
}

namespace perturb_detail {

inline bool has_pair(const Sample& s, const FFL& ffl, const BBox& box) {
    for (const auto& f : s.findings) {
        if (f.ffl == ffl && f.box == box) return true;
    }
    return false;
}

inline bool ffl_present(const std::vector<GroundedFinding>& fs, const FFL& ffl) {
    for (const auto& f : fs) {
        if (f.ffl == ffl) return true;
    }
    return false;
}

inline void add_reversals(Sample& s, const PerturbConfig& cfg, Rng& rng, PerturbReport& rep) {
    for (int k = 0; k < cfg.n_reversal; ++k) {
        const auto reals = s.reals();
        std::vector<const GroundedFinding*> sources;
        for (const auto& r : reals) {
            if (!cfg.reverse_negatives && !r.ffl.positive) continue;
            const FFL flipped = negate(r.ffl);
            // Reject sources whose negation restates another real or an
            // already fabricated finding.
            if (ffl_present(reals, flipped)) continue;
            if (has_pair(s, flipped, kZeroBox)) continue;
            sources.push_back(&r);
        }
        if (sources.empty()) {
            rep.skip_reasons["reversal:no-eligible-source"]++;
            continue;
        }
        const auto* src = sources[rng.index(sources.size())];
        GroundedFinding g;
        g.ffl = negate(src->ffl);
        g.box = kZeroBox;
        g.veracity = 0;
        g.provenance = Provenance::reversal;
        s.findings.push_back(std::move(g));
        rep.reversal_produced++;
    }
}

inline void add_relocations(Sample& s, const Lexicon& lex, const RegionLayout& layout,
                            const LocationPool& pool, const PerturbConfig& cfg, Rng& rng,
                            PerturbReport& rep) {
    for (int k = 0; k < cfg.n_relocate; ++k) {
        const auto reals = s.reals();
        struct Candidate {
            const GroundedFinding* src;
            std::vector<BBox> targets;
        };
        std::vector<Candidate> cands;
        for (const auto& r : reals) {
            if (!r.ffl.positive || is_zero_box(r.box)) continue;
            const std::string src_region = layout.region_of(r.box);
            Candidate c{&r, {}};
            for (const auto& b : pool.of(r.ffl.core_finding)) {
                if (iou(r.box, b) >= cfg.overlap_threshold) continue;
                const std::string tgt_region = layout.region_of(b);
                if (tgt_region == src_region) continue;
                FFL moved = r.ffl;
                moved.anatomy = tgt_region;
                // Never land where any real states the same finding.
                bool clashes = false;
                for (const auto& other : reals) {
                    if (other.ffl.core_finding == moved.core_finding &&
                        other.ffl.anatomy == moved.anatomy) {
                        clashes = true;
                        break;
                    }
                }
                if (clashes || perturb_detail::has_pair(s, moved, b)) continue;
                c.targets.push_back(b);
            }
            if (!c.targets.empty()) cands.push_back(std::move(c));
        }
        if (cands.empty()) {
            rep.skip_reasons["relocate:no-eligible-target"]++;
            continue;
        }
        const auto& chosen = cands[rng.index(cands.size())];
        const BBox box = chosen.targets[rng.index(chosen.targets.size())];
        GroundedFinding g;
        g.ffl = chosen.src->ffl;
        g.ffl.anatomy = layout.region_of(box);
        g.ffl.finding_type = lex.finding_type(g.ffl.core_finding);
        g.box = box;
        g.veracity = 0;
        g.provenance = Provenance::relocate;
        s.findings.push_back(std::move(g));
        rep.relocate_produced++;
    }
}

inline void add_substitutions(Sample& s, const Lexicon& lex, const RegionLayout& layout,
                              const LocationPool& pool, const PerturbConfig& cfg, Rng& rng,
                              PerturbReport& rep) {
    for (int k = 0; k < cfg.n_substitute; ++k) {
        std::set<std::string> mentioned;
        std::vector<std::string> fake_cores;
        for (const auto& f : s.findings) {
            if (f.veracity == 1) {
                mentioned.insert(f.ffl.core_finding);
            } else {
                fake_cores.push_back(f.ffl.core_finding);
            }
        }
        struct Candidate {
            std::string core;
            std::vector<BBox> boxes;
        };
        std::vector<Candidate> cands;
        for (const auto& f : lex.findings()) {
            if (mentioned.count(f)) continue;
            bool bad = false;
            for (const auto& m : mentioned) bad = bad || lex.contradicts(f, m);
            for (const auto& fc : fake_cores) bad = bad || fc == f || lex.contradicts(f, fc);
            if (bad) continue;
            Candidate c{f, {}};
            for (const auto& b : pool.of(f)) {
                FFL ffl{lex.finding_type(f), true, f, layout.region_of(b)};
                if (!perturb_detail::has_pair(s, ffl, b)) c.boxes.push_back(b);
            }
            if (!c.boxes.empty()) cands.push_back(std::move(c));
        }
        if (cands.empty()) {
            rep.skip_reasons["substitute:no-eligible-finding"]++;
            continue;
        }
        const auto& chosen = cands[rng.index(cands.size())];
        const BBox box = chosen.boxes[rng.index(chosen.boxes.size())];
        GroundedFinding g;
        g.ffl = FFL{lex.finding_type(chosen.core), true, chosen.core, layout.region_of(box)};
        g.box = box;
        g.veracity = 0;
        g.provenance = Provenance::substitution;
        s.findings.push_back(std::move(g));
        rep.substitute_produced++;
    }
}

}  // namespace perturb_detail

struct SynthCorpus {
    std::vector<Sample> samples;
    PerturbReport report;
};

// Expands a fully genuine corpus with fabricated findings: polarity
// reversals, relocations to implausible sites, and substituted findings that
// were never mentioned. Each sample is perturbed under its own derived seed,
// so results do not depend on corpus-level ordering of the RNG stream.
inline SynthCorpus perturb_corpus(const std::vector<Sample>& gold, const Lexicon& lex,
                                  const PerturbConfig& cfg, std::uint64_t seed) {
    for (const auto& s : gold) check_sample_invariants(s, /*gold_only=*/true);
    const RegionLayout layout = RegionLayout::square(lex);
    const LocationPool pool = LocationPool::build(gold);

    SynthCorpus out;
    out.samples = gold;
    out.report.samples = static_cast<int>(gold.size());
    out.report.reversal_requested = cfg.n_reversal * static_cast<int>(gold.size());
    out.report.relocate_requested = cfg.n_relocate * static_cast<int>(gold.size());
    out.report.substitute_requested = cfg.n_substitute * static_cast<int>(gold.size());

    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Sample& s = out.samples[i];
        perturb_detail::add_reversals(s, cfg, rng, out.report);
        perturb_detail::add_relocations(s, lex, layout, pool, cfg, rng, out.report);
        perturb_detail::add_substitutions(s, lex, layout, pool, cfg, rng, out.report);
        check_sample_invariants(s, /*gold_only=*/false);
        check_fake_consistency(s, lex);
    }
    return out;
}

}  // namespace factground
