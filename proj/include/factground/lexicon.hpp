#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factground/error.hpp"
#include "factground/ffl.hpp"

namespace factground {

// Controlled vocabulary: canonical findings with synonyms, an ordered region
// catalogue, and a symmetric finding-contradiction relation.
class Lexicon {
public:
    static Lexicon from_json(const nlohmann::json& j) {
        Lexicon lex;
        if (!j.is_object()) throw SchemaError("lexicon root must be a JSON object");
        if (!j.contains("findings") || !j.at("findings").is_object()) {
            throw SchemaError("lexicon needs a findings object");
        }
        if (!j.contains("regions") || !j.at("regions").is_array()) {
            throw SchemaError("lexicon needs a regions array");
        }
        if (j.contains("version")) lex.version_ = j.at("version").get<std::string>();

        std::map<std::string, std::string> types;
        if (j.contains("types")) {
            for (const auto& [k, v] : j.at("types").items()) {
                types[fold_term(k)] = fold_term(v.get<std::string>());
            }
        }

        for (const auto& [key, syns] : j.at("findings").items()) {
            const std::string canonical = fold_term(key);
            if (canonical.empty()) throw SchemaError("empty canonical finding name");
            if (lex.findings_.count(canonical)) {
                throw SchemaError("duplicate canonical finding: " + canonical);
            }
            FindingEntry entry;
            auto it = types.find(canonical);
            entry.type = it == types.end() ? "anatomicalfinding" : it->second;
            if (!syns.is_array()) throw SchemaError("synonyms of " + canonical + " must be an array");
            for (const auto& s : syns) {
                entry.synonyms.push_back(fold_term(s.get<std::string>()));
            }
            lex.findings_[canonical] = std::move(entry);
            lex.finding_order_.push_back(canonical);
        }
        for (const auto& [canonical, entry] : lex.findings_) {
            for (const auto& syn : entry.synonyms) {
                if (syn.empty()) throw SchemaError("empty synonym under " + canonical);
                if (lex.findings_.count(syn)) {
                    throw SchemaError("synonym \"" + syn + "\" collides with a canonical finding");
                }
                auto [it, inserted] = lex.synonym_to_canonical_.emplace(syn, canonical);
                if (!inserted && it->second != canonical) {
                    throw SchemaError("synonym \"" + syn + "\" maps to more than one finding");
                }
            }
        }

        for (const auto& r : j.at("regions")) {
            const std::string name = fold_term(r.get<std::string>());
            if (name.empty()) throw SchemaError("empty region name");
            if (name == kUnspecifiedAnatomy) throw SchemaError("region catalogue may not contain the unspecified marker");
            if (!lex.region_set_.insert(name).second) throw SchemaError("duplicate region: " + name);
            lex.regions_.push_back(name);
        }

        if (j.contains("contradictions")) {
            for (const auto& [k, arr] : j.at("contradictions").items()) {
                const std::string a = lex.normalize_finding(fold_term(k));
                if (!arr.is_array()) throw SchemaError("contradictions of " + a + " must be an array");
                for (const auto& v : arr) {
                    const std::string b = lex.normalize_finding(fold_term(v.get<std::string>()));
                    if (a == b) throw SchemaError("finding " + a + " cannot contradict itself");
                    lex.contradictions_[a].insert(b);
                    lex.contradictions_[b].insert(a);  // stored symmetrically
                }
            }
        }
        return lex;
    }

    static Lexicon load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw SchemaError("cannot open lexicon file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("lexicon is not valid JSON: " + std::string(e.what()));
        }
        return from_json(j);
    }

    const std::string& version() const { return version_; }

    // Canonical findings in lexicographic order (stable, used for glyph ids).
    const std::vector<std::string>& findings() const { return finding_order_; }
    const std::vector<std::string>& regions() const { return regions_; }

    bool is_canonical_finding(const std::string& term) const {
        return findings_.count(fold_term(term)) > 0;
    }

    bool knows_finding(const std::string& term) const {
        const std::string t = fold_term(term);
        return findings_.count(t) > 0 || synonym_to_canonical_.count(t) > 0;
    }

    bool knows_region(const std::string& term) const {
        return region_set_.count(fold_term(term)) > 0;
    }

    // Maps a raw finding term (canonical or synonym, any case/spacing) to its
    // canonical form. Canonical terms are fixed points.
    std::string normalize_finding(const std::string& term) const {
        const std::string t = fold_term(term);
        if (findings_.count(t)) return t;
        auto it = synonym_to_canonical_.find(t);
        if (it != synonym_to_canonical_.end()) return it->second;
        throw SchemaError("unknown finding term: \"" + term + "\"");
    }

    const std::string& finding_type(const std::string& canonical) const {
        auto it = findings_.find(canonical);
        if (it == findings_.end()) throw SchemaError("unknown finding: " + canonical);
        return it->second.type;
    }

    bool contradicts(const std::string& a, const std::string& b) const {
        auto it = contradictions_.find(normalize_finding(a));
        if (it == contradictions_.end()) return false;
        return it->second.count(normalize_finding(b)) > 0;
    }

    const std::set<std::string>& contradictions_of(const std::string& canonical) const {
        static const std::set<std::string> empty;
        auto it = contradictions_.find(canonical);
        return it == contradictions_.end() ? empty : it->second;
    }

    // Normalizes an FFL's finding to canonical form and validates anatomy
    // against the region catalogue.
    FFL canonicalize(const FFL& f) const {
        FFL out = f;
        out.core_finding = normalize_finding(f.core_finding);
        if (out.has_anatomy() && !knows_region(out.anatomy)) {
            throw SchemaError("unknown anatomy term: \"" + f.anatomy + "\"");
        }
        return out;
    }

    // Serializes back to the on-disk shape; from_json(to_json(lex)) restores
    // an equivalent lexicon (contradiction pairs are emitted once).
    nlohmann::json to_json() const {
        nlohmann::json findings = nlohmann::json::object();
        nlohmann::json types = nlohmann::json::object();
        for (const auto& [canonical, entry] : findings_) {
            findings[canonical] = entry.synonyms;
            if (entry.type != "anatomicalfinding") types[canonical] = entry.type;
        }
        nlohmann::json contradictions = nlohmann::json::object();
        for (const auto& [a, others] : contradictions_) {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& b : others) {
                if (a < b) arr.push_back(b);
            }
            if (!arr.empty()) contradictions[a] = std::move(arr);
        }
        nlohmann::json out{{"version", version_}, {"findings", findings}, {"regions", regions_}};
        if (!types.empty()) out["types"] = types;
        if (!contradictions.empty()) out["contradictions"] = contradictions;
        return out;
    }

private:
    struct FindingEntry {
        std::string type;
        std::vector<std::string> synonyms;
    };

    std::string version_ = "0";
    std::map<std::string, FindingEntry> findings_;
    std::vector<std::string> finding_order_;
    std::map<std::string, std::string> synonym_to_canonical_;
    std::vector<std::string> regions_;
    std::set<std::string> region_set_;
    std::map<std::string, std::set<std::string>> contradictions_;
};

}  // namespace factground
