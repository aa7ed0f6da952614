#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "factground/error.hpp"

namespace factground {

inline std::string fold_term(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t");
    s = s.substr(first, last - first + 1);
    // Collapse interior runs of whitespace to single spaces.
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            if (!in_space) out.push_back(' ');
            in_space = true;
        } else {
            out.push_back(c);
            in_space = false;
        }
    }
    return out;
}

inline constexpr const char* kUnspecifiedAnatomy = "unspecified";

// Structured finding label: pipe-delimited type/polarity/finding with an
// optional trailing anatomy field. All fields are stored folded (lower case,
// trimmed, single-spaced) so equality is case- and spacing-insensitive.
struct FFL {
    std::string finding_type;
    bool positive = true;  // polarity: yes (true) / no (false)
    std::string core_finding;
    std::string anatomy = kUnspecifiedAnatomy;

    bool operator==(const FFL&) const = default;

    bool has_anatomy() const { return anatomy != kUnspecifiedAnatomy; }
};

inline std::vector<std::string> split_fields(const std::string& text, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        if (pos == std::string::npos) {
            fields.push_back(text.substr(start));
            break;
        }
        fields.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline FFL parse_ffl(const std::string& text) {
    const auto raw = split_fields(text, '|');
    if (raw.size() != 3 && raw.size() != 4) {
        throw SchemaError("finding label needs 3 or 4 pipe-delimited fields, got " +
                          std::to_string(raw.size()) + " in \"" + text + "\"");
    }
    FFL f;
    f.finding_type = fold_term(raw[0]);
    const std::string polarity = fold_term(raw[1]);
    f.core_finding = fold_term(raw[2]);
    if (f.finding_type.empty()) throw SchemaError("empty finding type in \"" + text + "\"");
    if (f.core_finding.empty()) throw SchemaError("empty core finding in \"" + text + "\"");
    if (polarity == "yes") {
        f.positive = true;
    } else if (polarity == "no") {
        f.positive = false;
    } else {
        throw SchemaError("polarity must be yes or no, got \"" + polarity + "\"");
    }
    if (raw.size() == 4) {
        f.anatomy = fold_term(raw[3]);
        if (f.anatomy.empty()) throw SchemaError("empty anatomy field in \"" + text + "\"");
    }
    return f;
}

// Canonical serialized form: fields joined by '|' with no padding; the
// anatomy field is omitted when unspecified so parse/serialize round-trips.
inline std::string serialize_ffl(const FFL& f) {
    std::string out = f.finding_type + "|" + (f.positive ? "yes" : "no") + "|" + f.core_finding;
    if (f.has_anatomy()) out += "|" + f.anatomy;
    return out;
}

// Canonical spacing/case of an input label without structural changes.
inline std::string normalize_ffl_text(const std::string& text) {
    return serialize_ffl(parse_ffl(text));
}

inline FFL negate(FFL f) {
    f.positive = !f.positive;
    return f;
}

}  // namespace factground
