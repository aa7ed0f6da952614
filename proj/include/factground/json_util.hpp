#pragma once

#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "factground/error.hpp"

namespace factground {

// Config objects are parsed strictly: a key outside the allowed set is a
// schema error, so typos fail loudly instead of silently using defaults.
inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                                const std::string& what) {
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw SchemaError(what + ": unknown config key \"" + key + "\"");
    }
}

}  // namespace factground
