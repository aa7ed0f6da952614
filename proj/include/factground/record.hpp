#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factground/error.hpp"
#include "factground/ffl.hpp"
#include "factground/geometry.hpp"

namespace factground {

enum class Provenance { original, reversal, relocate, substitution };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::original: return "original";
        case Provenance::reversal: return "reversal";
        case Provenance::relocate: return "relocate";
        case Provenance::substitution: return "substitution";
    }
    return "original";
}

inline Provenance provenance_from_string(const std::string& s) {
    if (s == "original") return Provenance::original;
    if (s == "reversal") return Provenance::reversal;
    if (s == "relocate") return Provenance::relocate;
    if (s == "substitution") return Provenance::substitution;
    throw SchemaError("unknown provenance: \"" + s + "\"");
}

// One finding–location record: the <F, x, y, w, h, E> row of a sample.
struct GroundedFinding {
    FFL ffl;
    BBox box;
    int veracity = 1;  // E: 1 real, 0 fake
    Provenance provenance = Provenance::original;

    bool operator==(const GroundedFinding&) const = default;
};

// One study: an image reference plus its real and fake findings. Findings
// are kept in one ordered list (reals first by construction).
struct Sample {
    std::string image_id;
    std::string image_ref;
    std::vector<GroundedFinding> findings;

    std::vector<GroundedFinding> reals() const {
        std::vector<GroundedFinding> out;
        for (const auto& g : findings)
            if (g.veracity == 1) out.push_back(g);
        return out;
    }
    std::vector<GroundedFinding> fakes() const {
        std::vector<GroundedFinding> out;
        for (const auto& g : findings)
            if (g.veracity == 0) out.push_back(g);
        return out;
    }
};

inline nlohmann::json box_to_json(const BBox& b) {
    return nlohmann::json::array({b.x, b.y, b.w, b.h});
}

inline BBox box_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4) throw SchemaError("box must be a 4-element array");
    BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!box_in_range(b)) throw SchemaError("box out of normalized range: " + j.dump());
    return b;
}

inline nlohmann::json finding_to_json(const GroundedFinding& g) {
    return nlohmann::json{{"ffl", serialize_ffl(g.ffl)},
                          {"box", box_to_json(g.box)},
                          {"e", g.veracity},
                          {"provenance", to_string(g.provenance)}};
}

inline GroundedFinding finding_from_json(const nlohmann::json& j) {
    GroundedFinding g;
    if (!j.contains("ffl") || !j.contains("box") || !j.contains("e")) {
        throw SchemaError("finding record needs ffl, box and e fields: " + j.dump());
    }
    g.ffl = parse_ffl(j.at("ffl").get<std::string>());
    g.box = box_from_json(j.at("box"));
    const int e = j.at("e").get<int>();
    if (e != 0 && e != 1) throw SchemaError("veracity e must be 0 or 1");
    g.veracity = e;
    g.provenance = j.contains("provenance")
                       ? provenance_from_string(j.at("provenance").get<std::string>())
                       : Provenance::original;
    return g;
}

inline nlohmann::json sample_to_json(const Sample& s) {
    nlohmann::json findings = nlohmann::json::array();
    for (const auto& g : s.findings) findings.push_back(finding_to_json(g));
    return nlohmann::json{{"image_id", s.image_id},
                          {"image_ref", s.image_ref},
                          {"findings", std::move(findings)}};
}

inline Sample sample_from_json(const nlohmann::json& j) {
    Sample s;
    if (!j.contains("image_id") || !j.contains("image_ref") || !j.contains("findings")) {
        throw SchemaError("sample needs image_id, image_ref and findings");
    }
    s.image_id = j.at("image_id").get<std::string>();
    s.image_ref = j.at("image_ref").get<std::string>();
    if (!j.at("findings").is_array()) throw SchemaError("findings must be an array");
    for (const auto& f : j.at("findings")) s.findings.push_back(finding_from_json(f));
    return s;
}

// Structural checks beyond parseability. Gold corpora additionally require
// every record to be an original real.
inline void check_sample_invariants(const Sample& s, bool gold_only = false) {
    for (const auto& g : s.findings) {
        if (g.provenance == Provenance::reversal && (g.veracity != 0 || !is_zero_box(g.box))) {
            throw SchemaError(s.image_id + ": reversal record must be fake with zero box");
        }
        if (g.veracity == 1 && area(g.box) <= 0.0) {
            throw SchemaError(s.image_id + ": real record must carry a nonzero-area box");
        }
        if (g.veracity == 1 && g.provenance != Provenance::original) {
            throw SchemaError(s.image_id + ": real record must have original provenance");
        }
        if (g.veracity == 0 && g.provenance == Provenance::original) {
            throw SchemaError(s.image_id + ": fake record cannot have original provenance");
        }
        if (gold_only && g.veracity != 1) {
            throw SchemaError(s.image_id + ": gold corpus may only contain real findings");
        }
    }
    for (std::size_t i = 0; i < s.findings.size(); ++i) {
        for (std::size_t k = i + 1; k < s.findings.size(); ++k) {
            if (s.findings[i].ffl == s.findings[k].ffl && s.findings[i].box == s.findings[k].box) {
                throw SchemaError(s.image_id + ": duplicate (ffl, box) pair: " +
                                  serialize_ffl(s.findings[i].ffl));
            }
        }
    }
}

inline std::vector<Sample> read_corpus(const std::string& path, bool gold_only = false) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open corpus file: " + path);
    std::vector<Sample> out;
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
        Sample s = sample_from_json(j);
        check_sample_invariants(s, gold_only);
        out.push_back(std::move(s));
    }
    return out;
}

inline void write_corpus(const std::string& path, const std::vector<Sample>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write corpus file: " + path);
    for (const auto& s : samples) out << sample_to_json(s).dump() << "\n";
}

// Resolves an image_ref relative to the corpus file that declared it.
inline std::string resolve_image_ref(const std::string& corpus_path, const std::string& image_ref) {
    namespace fs = std::filesystem;
    fs::path ref(image_ref);
    if (ref.is_absolute()) return ref.string();
    return (fs::path(corpus_path).parent_path() / ref).string();
}

}  // namespace factground
