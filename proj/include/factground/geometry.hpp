#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace factground {

inline constexpr double kGeomEps = 1e-6;

// Axis-aligned box in normalized coordinates: <x, y, w, h>, all in [0,1].
// The all-zero box <0,0,0,0> is the canonical "absent" box.
struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    bool operator==(const BBox&) const = default;
};

inline const BBox kZeroBox{0.0, 0.0, 0.0, 0.0};

inline bool box_in_range(const BBox& b) {
    return b.x >= 0.0 && b.y >= 0.0 && b.w >= 0.0 && b.h >= 0.0 &&
           b.x <= 1.0 && b.y <= 1.0 && b.w <= 1.0 && b.h <= 1.0 &&
           b.x + b.w <= 1.0 + kGeomEps && b.y + b.h <= 1.0 + kGeomEps;
}

inline bool is_zero_box(const BBox& b) {
    return b.x == 0.0 && b.y == 0.0 && b.w == 0.0 && b.h == 0.0;
}

inline double area(const BBox& b) { return b.w * b.h; }

inline double intersection_area(const BBox& a, const BBox& b) {
    const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
    const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    return iw * ih;
}

inline double union_area(const BBox& a, const BBox& b) {
    return area(a) + area(b) - intersection_area(a, b);
}

inline double iou(const BBox& a, const BBox& b) {
    const double u = union_area(a, b);
    if (u < kGeomEps) return 0.0;
    return intersection_area(a, b) / u;
}

// Smallest axis-aligned box containing both inputs. A degenerate box still
// contributes its corner extent, so hull(b, <0,0,0,0>) stretches to the
// origin corner.
inline BBox hull(const BBox& a, const BBox& b) {
    const double x1 = std::min(a.x, b.x);
    const double y1 = std::min(a.y, b.y);
    const double x2 = std::max(a.x + a.w, b.x + b.w);
    const double y2 = std::max(a.y + a.h, b.y + b.h);
    return BBox{x1, y1, x2 - x1, y2 - y1};
}

// Generalized IoU: IoU(a,b) − area(hull \ union)/area(hull).
// Returns 0 when the hull itself is degenerate (both boxes degenerate at the
// same spot), which keeps every case well-defined.
inline double giou(const BBox& a, const BBox& b) {
    const double c = area(hull(a, b));
    if (c < kGeomEps) return 0.0;
    const double u = union_area(a, b);
    return iou(a, b) - (c - u) / c;
}

// Literal transcription variant: subtracts the hull fraction not covered by
// the *intersection*, i.e. IoU − (C − I)/C.
inline double giou_literal(const BBox& a, const BBox& b) {
    const double c = area(hull(a, b));
    if (c < kGeomEps) return 0.0;
    const double i = intersection_area(a, b);
    return iou(a, b) - (c - i) / c;
}

// Value + analytic gradient of giou/giou_literal with respect to the first
// box's (x, y, w, h), holding the second box fixed. Piecewise-smooth: at
// min/max branch boundaries a one-sided derivative is returned.
struct GiouGrad {
    double value = 0.0;
    std::array<double, 4> d{0.0, 0.0, 0.0, 0.0};  // d/dx, d/dy, d/dw, d/dh
};

inline GiouGrad giou_grad(const BBox& a, const BBox& b, bool literal = false) {
    GiouGrad out;
    const double ax1 = a.x, ay1 = a.y, ax2 = a.x + a.w, ay2 = a.y + a.h;
    const double bx1 = b.x, by1 = b.y, bx2 = b.x + b.w, by2 = b.y + b.h;

    const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
    const double ih = std::min(ay2, by2) - std::max(ay1, by1);
    const bool overlap = iw > 0.0 && ih > 0.0;
    const double inter = overlap ? iw * ih : 0.0;

    const double areaA = a.w * a.h;
    const double areaB = b.w * b.h;
    const double uni = areaA + areaB - inter;

    const double cw = std::max(ax2, bx2) - std::min(ax1, bx1);
    const double ch = std::max(ay2, by2) - std::min(ay1, by1);
    const double c = cw * ch;
    if (c < kGeomEps) return out;  // value 0, zero gradient by convention

    // Partials with respect to the corner coordinates (ax1, ay1, ax2, ay2).
    std::array<double, 4> dI{0, 0, 0, 0};
    if (overlap) {
        if (ax1 > bx1) dI[0] = -ih;
        if (ay1 > by1) dI[1] = -iw;
        if (ax2 < bx2) dI[2] = ih;
        if (ay2 < by2) dI[3] = iw;
    }
    const std::array<double, 4> dA{-a.h, -a.w, a.h, a.w};
    std::array<double, 4> dU;
    for (int k = 0; k < 4; ++k) dU[k] = dA[k] - dI[k];
    std::array<double, 4> dC{0, 0, 0, 0};
    if (ax1 < bx1) dC[0] = -ch;
    if (ay1 < by1) dC[1] = -cw;
    if (ax2 > bx2) dC[2] = ch;
    if (ay2 > by2) dC[3] = cw;

    std::array<double, 4> dG{0, 0, 0, 0};
    double value;
    if (uni < kGeomEps) {
        // Both boxes degenerate: IoU part is the constant 0 branch.
        value = literal ? -(c - inter) / c : -(c - uni) / c;
        for (int k = 0; k < 4; ++k) {
            const double dTail = literal ? dI[k] : dU[k];
            dG[k] = (dTail * c - (literal ? inter : uni) * dC[k]) / (c * c);
        }
    } else if (literal) {
        // G = I/U − 1 + I/C
        value = inter / uni - (c - inter) / c;
        for (int k = 0; k < 4; ++k) {
            dG[k] = (dI[k] * uni - inter * dU[k]) / (uni * uni) +
                    (dI[k] * c - inter * dC[k]) / (c * c);
        }
    } else {
        // G = I/U − 1 + U/C
        value = inter / uni - (c - uni) / c;
        for (int k = 0; k < 4; ++k) {
            dG[k] = (dI[k] * uni - inter * dU[k]) / (uni * uni) +
                    (dU[k] * c - uni * dC[k]) / (c * c);
        }
    }

    out.value = value;
    // Chain corner partials back to (x, y, w, h).
    out.d[0] = dG[0] + dG[2];
    out.d[1] = dG[1] + dG[3];
    out.d[2] = dG[2];
    out.d[3] = dG[3];
    return out;
}

}  // namespace factground
