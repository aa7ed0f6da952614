#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "factground/error.hpp"
#include "factground/ffl.hpp"
#include "factground/geometry.hpp"
#include "factground/lexicon.hpp"

namespace factground {

// Fixed grid layout that assigns every catalogued region a normalized box.
// Regions are laid out row-major in lexicon order over a rows×cols grid that
// partitions the unit frame, so region boxes are disjoint and cover it.
class RegionLayout {
public:
    RegionLayout(const std::vector<std::string>& region_names, int rows, int cols)
        : names_(region_names), rows_(rows), cols_(cols) {
        if (rows <= 0 || cols <= 0) throw SchemaError("region grid must be positive");
        if (static_cast<int>(region_names.size()) != rows * cols) {
            throw SchemaError("region catalogue size " + std::to_string(region_names.size()) +
                              " does not fill a " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " grid");
        }
        for (std::size_t i = 0; i < names_.size(); ++i) index_[names_[i]] = i;
    }

    static RegionLayout square(const Lexicon& lex) {
        const int n = static_cast<int>(lex.regions().size());
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
        return RegionLayout(lex.regions(), side, side);
    }

    std::size_t count() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    BBox box_of_index(std::size_t idx) const {
        const int r = static_cast<int>(idx) / cols_;
        const int c = static_cast<int>(idx) % cols_;
        const double x1 = static_cast<double>(c) / cols_;
        const double y1 = static_cast<double>(r) / rows_;
        const double x2 = static_cast<double>(c + 1) / cols_;
        const double y2 = static_cast<double>(r + 1) / rows_;
        return BBox{x1, y1, x2 - x1, y2 - y1};
    }

    // Region box for an anatomy name; the unspecified marker maps to the
    // absent (zero) box.
    BBox box_of(const std::string& region_name) const {
        if (region_name == kUnspecifiedAnatomy) return kZeroBox;
        auto it = index_.find(region_name);
        if (it == index_.end()) throw SchemaError("unknown region: \"" + region_name + "\"");
        return box_of_index(it->second);
    }

    bool knows(const std::string& region_name) const { return index_.count(region_name) > 0; }

    // Region containing a point (clamped to the frame).
    std::size_t index_at(double x, double y) const {
        int c = static_cast<int>(x * cols_);
        int r = static_cast<int>(y * rows_);
        c = std::min(std::max(c, 0), cols_ - 1);
        r = std::min(std::max(r, 0), rows_ - 1);
        return static_cast<std::size_t>(r) * cols_ + c;
    }

    // Region containing a box's center.
    const std::string& region_of(const BBox& b) const {
        return names_[index_at(b.x + b.w / 2.0, b.y + b.h / 2.0)];
    }

private:
    std::vector<std::string> names_;
    int rows_;
    int cols_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace factground
