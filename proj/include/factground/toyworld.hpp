#pragma once

#include <array>
#include <cmath>
#include <cstdint>
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
#include "factground/png_io.hpp"
#include "factground/record.hpp"
#include "factground/region_layout.hpp"
#include "factground/rng.hpp"

namespace factground {

// Single-channel toy image, intensities in [0,1].
struct ToyImage {
    std::string image_id;
    int size = 0;
    std::vector<double> pixels;

    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * size + x]; }
    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * size + x]; }
};

struct ToyConfig {
    int image_size = 128;
    int region_grid = 6;
    int findings_min = 1;
    int findings_max = 4;
    double negative_mention_prob = 0.3;
    double noise_level = 0.05;
    double glyph_fill_min = 0.84;
    double glyph_fill_max = 0.95;
};

inline nlohmann::json toy_config_to_json(const ToyConfig& c) {
    return nlohmann::json{{"image_size", c.image_size},
                          {"region_grid", c.region_grid},
                          {"findings_min", c.findings_min},
                          {"findings_max", c.findings_max},
                          {"negative_mention_prob", c.negative_mention_prob},
                          {"noise_level", c.noise_level},
                          {"glyph_fill_min", c.glyph_fill_min},
                          {"glyph_fill_max", c.glyph_fill_max}};
}

inline ToyConfig toy_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j,
                        {"image_size", "region_grid", "findings_min", "findings_max",
                         "negative_mention_prob", "noise_level", "glyph_fill_min", "glyph_fill_max"},
                        "toyworld");
    ToyConfig c;
    if (j.contains("image_size")) c.image_size = j.at("image_size").get<int>();
    if (j.contains("region_grid")) c.region_grid = j.at("region_grid").get<int>();
    if (j.contains("findings_min")) c.findings_min = j.at("findings_min").get<int>();
    if (j.contains("findings_max")) c.findings_max = j.at("findings_max").get<int>();
    if (j.contains("negative_mention_prob"))
        c.negative_mention_prob = j.at("negative_mention_prob").get<double>();
    if (j.contains("noise_level")) c.noise_level = j.at("noise_level").get<double>();
    if (j.contains("glyph_fill_min")) c.glyph_fill_min = j.at("glyph_fill_min").get<double>();
    if (j.contains("glyph_fill_max")) c.glyph_fill_max = j.at("glyph_fill_max").get<double>();
    return c;
}

inline constexpr int kGlyphShapes = 8;
inline const std::array<double, 6> kGlyphIntensities{0.9, 0.8, 0.7, 0.6, 0.5, 0.4};

inline int glyph_capacity() {
    return kGlyphShapes * static_cast<int>(kGlyphIntensities.size());
}

// Stable glyph id per canonical finding: its index in the lexicon ordering.
inline int glyph_id_of(const Lexicon& lex, const std::string& canonical) {
    const auto& all = lex.findings();
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i] == canonical) return static_cast<int>(i);
    }
    throw SchemaError("finding not in lexicon: " + canonical);
}

inline void validate_toy_config(const ToyConfig& c, const Lexicon& lex) {
    if (c.image_size < c.region_grid * 8) {
        throw SchemaError("image_size too small for the region grid");
    }
    const int regions = c.region_grid * c.region_grid;
    if (static_cast<int>(lex.regions().size()) != regions) {
        throw SchemaError("lexicon region count must equal region_grid^2");
    }
    if (c.findings_min < 1 || c.findings_max < c.findings_min) {
        throw SchemaError("findings-per-image range invalid");
    }
    if (c.findings_max > static_cast<int>(lex.findings().size()) || c.findings_max > regions) {
        throw SchemaError("findings_max exceeds placement capacity");
    }
    if (static_cast<int>(lex.findings().size()) > glyph_capacity()) {
        throw SchemaError("lexicon has more findings than the glyph palette supports (" +
                          std::to_string(glyph_capacity()) + ")");
    }
    if (c.noise_level < 0.0 || c.noise_level > 0.2) throw SchemaError("noise_level outside [0, 0.2]");
    if (!(c.glyph_fill_min > 0.3 && c.glyph_fill_max <= 1.0 && c.glyph_fill_min <= c.glyph_fill_max)) {
        throw SchemaError("glyph fill range invalid");
    }
    if (c.negative_mention_prob < 0.0 || c.negative_mention_prob > 1.0) {
        throw SchemaError("negative_mention_prob outside [0, 1]");
    }
}

namespace toy_detail {

// Draws one glyph into img covering the pixel rectangle [x0,x1]x[y0,y1] and
// returns the exact extent of the pixels it actually set, which becomes the
// stored ground-truth box.
struct PixelExtent {
    int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
    bool any() const { return x1 >= 0; }
};

inline PixelExtent draw_glyph(ToyImage& img, int glyph_id, int x0, int y0, int x1, int y1) {
    // Intensity varies fastest across glyph ids so that small finding sets
    // spread over the full brightness range: brightness alone narrows the
    // identity to one of kGlyphShapes candidates, which keeps the glyphs
    // separable by coarse patch statistics.
    const int n_levels = static_cast<int>(kGlyphIntensities.size());
    const int shape = glyph_id / n_levels;
    const double level = kGlyphIntensities[static_cast<std::size_t>(glyph_id % n_levels)];
    const int w = x1 - x0 + 1, h = y1 - y0 + 1;
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double rx = std::max(cx, 0.5), ry = std::max(cy, 0.5);
    const int t = std::max(2, std::min(w, h) / 5);
    PixelExtent ext;
    for (int py = 0; py < h; ++py) {
        for (int px = 0; px < w; ++px) {
            const double u = w > 1 ? static_cast<double>(px) / (w - 1) : 0.5;
            const double v = h > 1 ? static_cast<double>(py) / (h - 1) : 0.5;
            const double ex = (px - cx) / rx, ey = (py - cy) / ry;
            bool on = false;
            switch (shape) {
                case 0:  // solid rectangle
                    on = true;
                    break;
                case 1:  // disc
                    on = ex * ex + ey * ey <= 1.0 + 1e-9;
                    break;
                case 2: {  // ring
                    const double r2 = ex * ex + ey * ey;
                    on = r2 <= 1.0 + 1e-9 && r2 >= 0.30;
                    break;
                }
                case 3:  // frame
                    on = px < t || py < t || px >= w - t || py >= h - t;
                    break;
                case 4:  // plus cross
                    on = std::abs(px - cx) <= t / 2.0 + 0.5 || std::abs(py - cy) <= t / 2.0 + 0.5;
                    break;
                case 5:  // diagonal cross
                    on = std::abs(u - v) <= 0.18 || std::abs(u + v - 1.0) <= 0.18;
                    break;
                case 6:  // triangle, apex at top
                    on = std::abs(u - 0.5) <= v / 2.0 + 1e-9;
                    break;
                case 7:  // diamond
                    on = std::abs(u - 0.5) + std::abs(v - 0.5) <= 0.5 + 1e-9;
                    break;
            }
            if (!on) continue;
            img.at(x0 + px, y0 + py) = level;
            ext.x0 = std::min(ext.x0, x0 + px);
            ext.y0 = std::min(ext.y0, y0 + py);
            ext.x1 = std::max(ext.x1, x0 + px);
            ext.y1 = std::max(ext.y1, y0 + py);
        }
    }
    return ext;
}

}  // namespace toy_detail

struct GoldCorpus {
    std::vector<ToyImage> images;
    std::vector<Sample> samples;
};

// Procedurally generates the gold corpus: each image renders 1..k distinct
// finding glyphs in distinct grid regions; each sample lists those findings
// (plus an occasional explicit negative mention) with exact boxes.
inline GoldCorpus generate_gold(int n, const Lexicon& lex, const ToyConfig& cfg,
                                std::uint64_t seed) {
    if (n < 1) throw UsageError("gold corpus size must be >= 1");
    validate_toy_config(cfg, lex);
    const RegionLayout layout(lex.regions(), cfg.region_grid, cfg.region_grid);
    const int W = cfg.image_size;
    const int grid = cfg.region_grid;

    GoldCorpus out;
    out.images.reserve(static_cast<std::size_t>(n));
    out.samples.reserve(static_cast<std::size_t>(n));

    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "toy-%06d", i);

        ToyImage img;
        img.image_id = idbuf;
        img.size = W;
        img.pixels.assign(static_cast<std::size_t>(W) * W, 0.0);

        Sample sample;
        sample.image_id = img.image_id;
        sample.image_ref = "images/" + img.image_id + ".png";

        // Pick distinct, mutually non-contradictory findings.
        const int want = static_cast<int>(rng.range(cfg.findings_min, cfg.findings_max));
        std::vector<std::string> chosen;
        std::vector<std::string> candidates = lex.findings();
        for (int k = 0; k < want && !candidates.empty(); ++k) {
            const std::size_t pick = rng.index(candidates.size());
            const std::string f = candidates[pick];
            chosen.push_back(f);
            std::vector<std::string> next;
            for (const auto& c : candidates) {
                if (c != f && !lex.contradicts(c, f)) next.push_back(c);
            }
            candidates = std::move(next);
        }

        // Assign distinct regions.
        std::vector<std::size_t> region_ids(layout.count());
        for (std::size_t r = 0; r < region_ids.size(); ++r) region_ids[r] = r;
        rng.shuffle(region_ids);

        for (std::size_t k = 0; k < chosen.size(); ++k) {
            const std::size_t ridx = region_ids[k];
            const int rr = static_cast<int>(ridx) / grid;
            const int rc = static_cast<int>(ridx) % grid;
            // Pixel cell bounds, then a 1px interior margin so neighboring
            // glyphs never touch.
            const int cx0 = rc * W / grid, cx1 = (rc + 1) * W / grid - 1;
            const int cy0 = rr * W / grid, cy1 = (rr + 1) * W / grid - 1;
            const int ix0 = cx0 + 1, ix1 = cx1 - 1, iy0 = cy0 + 1, iy1 = cy1 - 1;
            const int iw = ix1 - ix0 + 1, ih = iy1 - iy0 + 1;
            const int gw = std::max(4, static_cast<int>(std::lround(
                                           iw * rng.uniform(cfg.glyph_fill_min, cfg.glyph_fill_max))));
            const int gh = std::max(4, static_cast<int>(std::lround(
                                           ih * rng.uniform(cfg.glyph_fill_min, cfg.glyph_fill_max))));
            const int gx0 = ix0 + static_cast<int>(rng.index(static_cast<std::size_t>(iw - gw + 1)));
            const int gy0 = iy0 + static_cast<int>(rng.index(static_cast<std::size_t>(ih - gh + 1)));

            const int gid = glyph_id_of(lex, chosen[k]);
            const auto ext = toy_detail::draw_glyph(img, gid, gx0, gy0, gx0 + gw - 1, gy0 + gh - 1);
            if (!ext.any()) throw NumericalError("glyph rendered no pixels");

            GroundedFinding g;
            g.ffl.finding_type = lex.finding_type(chosen[k]);
            g.ffl.positive = true;
            g.ffl.core_finding = chosen[k];
            g.ffl.anatomy = layout.names()[ridx];
            g.box = BBox{static_cast<double>(ext.x0) / W, static_cast<double>(ext.y0) / W,
                         static_cast<double>(ext.x1 - ext.x0 + 1) / W,
                         static_cast<double>(ext.y1 - ext.y0 + 1) / W};
            g.veracity = 1;
            g.provenance = Provenance::original;
            sample.findings.push_back(std::move(g));
        }

        // Occasional explicit negative mention: a finding absent from the
        // scene, asserted absent in some region. Its box is that region box.
        if (rng.bernoulli(cfg.negative_mention_prob)) {
            std::vector<std::string> absent;
            for (const auto& f : lex.findings()) {
                bool used = false;
                for (const auto& c : chosen) used = used || c == f;
                if (!used) absent.push_back(f);
            }
            if (!absent.empty()) {
                const std::string f = absent[rng.index(absent.size())];
                const std::size_t ridx = rng.index(layout.count());
                GroundedFinding g;
                g.ffl.finding_type = lex.finding_type(f);
                g.ffl.positive = false;
                g.ffl.core_finding = f;
                g.ffl.anatomy = layout.names()[ridx];
                g.box = layout.box_of_index(ridx);
                g.veracity = 1;
                g.provenance = Provenance::original;
                sample.findings.push_back(std::move(g));
            }
        }

        // Additive uniform noise over the whole frame.
        if (cfg.noise_level > 0.0) {
            for (auto& p : img.pixels) {
                p = std::min(1.0, p + rng.uniform(0.0, cfg.noise_level));
            }
        }

        out.images.push_back(std::move(img));
        out.samples.push_back(std::move(sample));
    }
    return out;
}

inline std::vector<std::uint8_t> quantize_gray(const ToyImage& img) {
    std::vector<std::uint8_t> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img.pixels[i]));
        bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return bytes;
}

inline void write_toy_png(const std::string& path, const ToyImage& img) {
    write_png(path, img.size, img.size, 1, quantize_gray(img));
}

inline ToyImage toy_image_from_png(const std::string& path, const std::string& image_id) {
    const PngImage png = read_png(path);
    if (png.channels != 1 || png.width != png.height) {
        throw SchemaError("toy images must be square grayscale PNGs: " + path);
    }
    ToyImage img;
    img.image_id = image_id;
    img.size = png.width;
    img.pixels.resize(png.pixels.size());
    for (std::size_t i = 0; i < png.pixels.size(); ++i) img.pixels[i] = png.pixels[i] / 255.0;
    return img;
}

// --- overlay rendering -----------------------------------------------------

enum class OverlayColor { predicted, indicated, ground_truth };

struct OverlayBox {
    BBox box;
    OverlayColor color = OverlayColor::predicted;
    std::string caption;
};

namespace toy_detail {

inline std::array<std::uint8_t, 3> rgb_of(OverlayColor c) {
    switch (c) {
        case OverlayColor::predicted: return {0, 200, 0};      // green
        case OverlayColor::indicated: return {255, 165, 0};    // orange
        case OverlayColor::ground_truth: return {220, 0, 0};   // red
    }
    return {255, 255, 255};
}

// 3x5 pixel font for overlay captions (letters, digits, dash, dot, space).
inline const std::array<std::uint8_t, 5>* font_rows(char c) {
    static const std::map<char, std::array<std::uint8_t, 5>> table = {
        {'a', {0b010, 0b101, 0b111, 0b101, 0b101}}, {'b', {0b110, 0b101, 0b110, 0b101, 0b110}},
        {'c', {0b011, 0b100, 0b100, 0b100, 0b011}}, {'d', {0b110, 0b101, 0b101, 0b101, 0b110}},
        {'e', {0b111, 0b100, 0b110, 0b100, 0b111}}, {'f', {0b111, 0b100, 0b110, 0b100, 0b100}},
        {'g', {0b011, 0b100, 0b101, 0b101, 0b011}}, {'h', {0b101, 0b101, 0b111, 0b101, 0b101}},
        {'i', {0b111, 0b010, 0b010, 0b010, 0b111}}, {'j', {0b001, 0b001, 0b001, 0b101, 0b010}},
        {'k', {0b101, 0b110, 0b100, 0b110, 0b101}}, {'l', {0b100, 0b100, 0b100, 0b100, 0b111}},
        {'m', {0b101, 0b111, 0b111, 0b101, 0b101}}, {'n', {0b110, 0b101, 0b101, 0b101, 0b101}},
        {'o', {0b010, 0b101, 0b101, 0b101, 0b010}}, {'p', {0b110, 0b101, 0b110, 0b100, 0b100}},
        {'q', {0b010, 0b101, 0b101, 0b011, 0b001}}, {'r', {0b110, 0b101, 0b110, 0b110, 0b101}},
        {'s', {0b011, 0b100, 0b010, 0b001, 0b110}}, {'t', {0b111, 0b010, 0b010, 0b010, 0b010}},
        {'u', {0b101, 0b101, 0b101, 0b101, 0b111}}, {'v', {0b101, 0b101, 0b101, 0b101, 0b010}},
        {'w', {0b101, 0b101, 0b111, 0b111, 0b101}}, {'x', {0b101, 0b101, 0b010, 0b101, 0b101}},
        {'y', {0b101, 0b101, 0b010, 0b010, 0b010}}, {'z', {0b111, 0b001, 0b010, 0b100, 0b111}},
        {'0', {0b111, 0b101, 0b101, 0b101, 0b111}}, {'1', {0b010, 0b110, 0b010, 0b010, 0b111}},
        {'2', {0b111, 0b001, 0b111, 0b100, 0b111}}, {'3', {0b111, 0b001, 0b111, 0b001, 0b111}},
        {'4', {0b101, 0b101, 0b111, 0b001, 0b001}}, {'5', {0b111, 0b100, 0b111, 0b001, 0b111}},
        {'6', {0b111, 0b100, 0b111, 0b101, 0b111}}, {'7', {0b111, 0b001, 0b010, 0b010, 0b010}},
        {'8', {0b111, 0b101, 0b111, 0b101, 0b111}}, {'9', {0b111, 0b101, 0b111, 0b001, 0b111}},
        {'-', {0b000, 0b000, 0b111, 0b000, 0b000}}, {'.', {0b000, 0b000, 0b000, 0b000, 0b010}},
        {' ', {0b000, 0b000, 0b000, 0b000, 0b000}},
    };
    const char lower = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    auto it = table.find(lower);
    return it == table.end() ? nullptr : &it->second;
}

inline void blit_text(std::vector<std::uint8_t>& rgb, int W, int H, int x, int y,
                      const std::string& text, const std::array<std::uint8_t, 3>& color) {
    int cx = x;
    for (char ch : text) {
        const auto* rows = font_rows(ch);
        if (rows) {
            for (int ry = 0; ry < 5; ++ry) {
                for (int rx = 0; rx < 3; ++rx) {
                    if (((*rows)[ry] >> (2 - rx)) & 1) {
                        const int px = cx + rx, py = y + ry;
                        if (px >= 0 && px < W && py >= 0 && py < H) {
                            auto* p = rgb.data() + (static_cast<std::size_t>(py) * W + px) * 3;
                            p[0] = color[0];
                            p[1] = color[1];
                            p[2] = color[2];
                        }
                    }
                }
            }
        }
        cx += 4;
        if (cx >= W) break;
    }
}

}  // namespace toy_detail

// Draws box outlines (predicted green / indicated orange / ground truth red)
// with optional captions over a grayscale toy image; returns RGB pixels.
inline std::vector<std::uint8_t> render_overlay_rgb(const ToyImage& img,
                                                    const std::vector<OverlayBox>& boxes) {
    const int W = img.size, H = img.size;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(W) * H * 3);
    const auto gray = quantize_gray(img);
    for (std::size_t i = 0; i < gray.size(); ++i) {
        rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = gray[i];
    }
    auto set_px = [&](int x, int y, const std::array<std::uint8_t, 3>& c) {
        if (x < 0 || y < 0 || x >= W || y >= H) return;
        auto* p = rgb.data() + (static_cast<std::size_t>(y) * W + x) * 3;
        p[0] = c[0];
        p[1] = c[1];
        p[2] = c[2];
    };
    for (const auto& ob : boxes) {
        const auto color = toy_detail::rgb_of(ob.color);
        // Borders are kept off the outermost pixel ring so a box that touches
        // the frame (e.g. the full-frame box) still renders as a visible
        // rectangle, inset one pixel from every image edge it abuts.
        const int x0 = std::min(W - 2, std::max(1, static_cast<int>(std::lround(ob.box.x * W))));
        const int y0 = std::min(H - 2, std::max(1, static_cast<int>(std::lround(ob.box.y * H))));
        const int x1 = std::min(W - 2, std::max(x0, static_cast<int>(std::lround((ob.box.x + ob.box.w) * W)) - 1));
        const int y1 = std::min(H - 2, std::max(y0, static_cast<int>(std::lround((ob.box.y + ob.box.h) * H)) - 1));
        for (int x = x0; x <= x1; ++x) {
            set_px(x, y0, color);
            set_px(x, y1, color);
        }
        for (int y = y0; y <= y1; ++y) {
            set_px(x0, y, color);
            set_px(x1, y, color);
        }
        if (!ob.caption.empty()) {
            toy_detail::blit_text(rgb, W, H, x0 + 2, y0 + 2, ob.caption, color);
        }
    }
    return rgb;
}

inline void render_overlay(const std::string& path, const ToyImage& img,
                           const std::vector<OverlayBox>& boxes) {
    write_png(path, img.size, img.size, 3, render_overlay_rgb(img, boxes));
}

}  // namespace factground
