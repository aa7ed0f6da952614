#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "factground/error.hpp"

namespace factground {

namespace png_detail {

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                        const std::vector<std::uint8_t>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace png_detail

// Encodes an 8-bit image (channels = 1 grayscale or 3 RGB) as a PNG byte
// stream. Fixed zlib level keeps output byte-stable for identical pixels.
inline std::vector<std::uint8_t> encode_png(int width, int height, int channels,
                                            const std::vector<std::uint8_t>& pixels) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        throw SchemaError("png encoder supports positive gray or rgb images only");
    }
    if (pixels.size() != static_cast<std::size_t>(width) * height * channels) {
        throw SchemaError("pixel buffer size mismatch");
    }
    std::vector<std::uint8_t> raw;
    raw.reserve((static_cast<std::size_t>(width) * channels + 1) * height);
    for (int r = 0; r < height; ++r) {
        raw.push_back(0);  // filter type none
        const auto* row = pixels.data() + static_cast<std::size_t>(r) * width * channels;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * channels);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw NumericalError("zlib compression failed");
    }
    compressed.resize(bound);

    std::vector<std::uint8_t> out;
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);

    std::vector<std::uint8_t> ihdr;
    png_detail::put_be32(ihdr, static_cast<std::uint32_t>(width));
    png_detail::put_be32(ihdr, static_cast<std::uint32_t>(height));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);                // color type
    ihdr.push_back(0);                                    // compression
    ihdr.push_back(0);                                    // filter
    ihdr.push_back(0);                                    // interlace
    png_detail::write_chunk(out, "IHDR", ihdr);
    png_detail::write_chunk(out, "IDAT", compressed);
    png_detail::write_chunk(out, "IEND", {});
    return out;
}

inline void write_png(const std::string& path, int width, int height, int channels,
                      const std::vector<std::uint8_t>& pixels) {
    const auto bytes = encode_png(width, height, channels, pixels);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("cannot write image file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw SchemaError("short write on image file: " + path);
}

struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

// Decodes 8-bit non-interlaced grayscale or RGB PNGs (the subset this
// project emits).
inline PngImage decode_png(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0) {
        throw SchemaError("not a PNG file");
    }
    PngImage img;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool seen_ihdr = false;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = png_detail::get_be32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw SchemaError("truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw SchemaError("bad IHDR length");
            img.width = static_cast<int>(png_detail::get_be32(data));
            img.height = static_cast<int>(png_detail::get_be32(data + 4));
            const int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8 || (color != 0 && color != 2) || interlace != 0) {
                throw SchemaError("unsupported PNG variant (need 8-bit gray/rgb, no interlace)");
            }
            img.channels = color == 0 ? 1 : 3;
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || img.width <= 0 || img.height <= 0) throw SchemaError("PNG missing IHDR");

    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<std::uint8_t> raw((stride + 1) * img.height);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size()) {
        throw SchemaError("PNG inflate failed");
    }

    img.pixels.assign(stride * img.height, 0);
    const int bpp = img.channels;
    for (int r = 0; r < img.height; ++r) {
        const std::uint8_t filter = raw[r * (stride + 1)];
        const std::uint8_t* src = raw.data() + r * (stride + 1) + 1;
        std::uint8_t* dst = img.pixels.data() + r * stride;
        const std::uint8_t* up = r > 0 ? img.pixels.data() + (r - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= static_cast<std::size_t>(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: throw SchemaError("unsupported PNG filter");
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    return img;
}

inline PngImage read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open image file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace factground
