#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "msaan/tensor.hpp"

// 8-bit image container and codecs: binary PPM (P6) / PGM (P5) and PNG
// (8-bit gray or RGB, non-interlaced; zlib handles the compressed stream).

namespace msaan {

struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;  // 1 or 3
    std::vector<uint8_t> data;  // row-major, interleaved

    Image() = default;
    Image(int w, int h, int c) : width(w), height(h), channels(c), data(size_t(w) * h * c, 0) {
        MSAAN_CHECK(w >= 1 && h >= 1 && (c == 1 || c == 3), "image dims must be >= 1 with 1 or 3 channels");
    }

    uint8_t& at(int y, int x, int c) { return data[(size_t(y) * width + x) * channels + c]; }
    uint8_t at(int y, int x, int c) const { return data[(size_t(y) * width + x) * channels + c]; }
};

namespace detail {

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path);
}

// --- netpbm ---

inline int pnm_int(const std::vector<uint8_t>& b, size_t& pos) {
    // skip whitespace and '#' comments
    while (pos < b.size()) {
        if (b[pos] == '#') {
            while (pos < b.size() && b[pos] != '\n') ++pos;
        } else if (std::isspace(b[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= b.size() || !std::isdigit(b[pos])) throw FormatError("malformed PNM header");
    int v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) v = v * 10 + (b[pos++] - '0');
    return v;
}

inline Image load_pnm(const std::vector<uint8_t>& bytes) {
    const int channels = bytes[1] == '6' ? 3 : 1;
    size_t pos = 2;
    const int w = pnm_int(bytes, pos);
    const int h = pnm_int(bytes, pos);
    const int maxval = pnm_int(bytes, pos);
    if (maxval != 255) throw FormatError("PNM maxval must be 255 (8-bit)");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("malformed PNM header");
    ++pos;  // single whitespace byte before raster
    Image img(w, h, channels);
    if (bytes.size() - pos < img.data.size()) throw IoError("truncated PNM raster");
    std::memcpy(img.data.data(), bytes.data() + pos, img.data.size());
    return img;
}

inline std::vector<uint8_t> encode_pnm(const Image& img) {
    std::string header = (img.channels == 3 ? "P6\n" : "P5\n") + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

// --- PNG ---

inline uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

inline void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

inline void png_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0, out.data() + type_at, static_cast<uInt>(4 + payload.size())));
    put_be32(out, crc);
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

inline Image load_png(const std::vector<uint8_t>& bytes) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0) throw FormatError("not a PNG file");

    int w = 0, h = 0, bit_depth = 0, color_type = 0, channels = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 8 <= bytes.size()) {
        const uint32_t len = be32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError("truncated PNG chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const uint8_t* payload = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw FormatError("bad IHDR length");
            w = static_cast<int>(be32(payload));
            h = static_cast<int>(be32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[10] != 0 || payload[11] != 0) throw FormatError("unsupported PNG compression/filter method");
            if (payload[12] != 0) throw FormatError("interlaced PNG unsupported");
            if (bit_depth != 8)
                throw FormatError("only 8-bit PNG supported (got bit depth " + std::to_string(bit_depth) + ")");
            if (color_type == 0) channels = 1;
            else if (color_type == 2) channels = 3;
            else throw FormatError("only grayscale/RGB PNG supported (color type " + std::to_string(color_type) + ")");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        } else if (!(type[0] & 0x20)) {
            throw FormatError("unsupported critical PNG chunk " + std::string(type, 4));
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty()) throw IoError("incomplete PNG stream");
    if (w < 1 || h < 1) throw FormatError("bad PNG dimensions");

    const size_t stride = size_t(w) * channels;
    std::vector<uint8_t> raw(size_t(h) * (stride + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw IoError("PNG inflate failed");

    Image img(w, h, channels);
    const int bpp = channels;  // bytes per pixel at 8-bit depth
    for (int y = 0; y < h; ++y) {
        const uint8_t filter = raw[size_t(y) * (stride + 1)];
        const uint8_t* src = raw.data() + size_t(y) * (stride + 1) + 1;
        uint8_t* dst = img.data.data() + size_t(y) * stride;
        const uint8_t* up = y > 0 ? img.data.data() + size_t(y - 1) * stride : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= size_t(bpp) ? dst[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= size_t(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw FormatError("bad PNG filter type " + std::to_string(filter));
            }
            dst[i] = static_cast<uint8_t>(v & 0xff);
        }
    }
    return img;
}

inline std::vector<uint8_t> encode_png(const Image& img) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> out(sig, sig + 8);

    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);                                   // bit depth
    ihdr.push_back(img.channels == 3 ? 2 : 0);           // color type
    ihdr.push_back(0);                                   // compression
    ihdr.push_back(0);                                   // filter method
    ihdr.push_back(0);                                   // no interlace
    png_chunk(out, "IHDR", ihdr);

    const size_t stride = size_t(img.width) * img.channels;
    std::vector<uint8_t> raw(size_t(img.height) * (stride + 1));
    for (int y = 0; y < img.height; ++y) {
        raw[size_t(y) * (stride + 1)] = 0;  // filter: none
        std::memcpy(raw.data() + size_t(y) * (stride + 1) + 1, img.data.data() + size_t(y) * stride, stride);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw IoError("PNG deflate failed");
    compressed.resize(bound);
    png_chunk(out, "IDAT", compressed);
    png_chunk(out, "IEND", {});
    return out;
}

}  // namespace detail

// Format is detected from the file contents (PNG signature or P5/P6 magic).
inline Image load_image(const std::string& path) {
    const std::vector<uint8_t> bytes = detail::read_file(path);
    if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P') return detail::load_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) return detail::load_pnm(bytes);
    throw FormatError("unsupported image format in " + path);
}

// Format is chosen by extension: .png, .ppm (3-channel), .pgm (1-channel).
inline void save_image(const Image& img, const std::string& path) {
    const std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".png") {
        detail::write_file(path, detail::encode_png(img));
    } else if (ext == ".ppm") {
        MSAAN_CHECK(img.channels == 3, "PPM requires a 3-channel image");
        detail::write_file(path, detail::encode_pnm(img));
    } else if (ext == ".pgm") {
        MSAAN_CHECK(img.channels == 1, "PGM requires a 1-channel image");
        detail::write_file(path, detail::encode_pnm(img));
    } else {
        throw FormatError("unsupported output extension '" + ext + "' (use .png/.ppm/.pgm)");
    }
}

// --- image <-> tensor ---

// (1, channels, h, w) tensor in [0,1]
inline Tensor image_to_tensor(const Image& img) {
    Tensor t(1, img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c) {
        float* dst = t.plane(0, c);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) dst[int64_t(y) * img.width + x] = img.at(y, x, c) / 255.0f;
    }
    return t;
}

// Round half away from zero on the 0..255 scale; values clamped to [0,1] first.
inline uint8_t quantize_unit(float v) {
    v = std::clamp(v, 0.0f, 1.0f);
    return static_cast<uint8_t>(std::floor(v * 255.0f + 0.5f));
}

inline Image tensor_to_image(const Tensor& t) {
    MSAAN_CHECK(t.dims.n == 1 && (t.dims.c == 1 || t.dims.c == 3), "tensor_to_image expects (1,{1|3},h,w)");
    Image img(t.dims.w, t.dims.h, t.dims.c);
    for (int c = 0; c < t.dims.c; ++c) {
        const float* src = t.plane(0, c);
        for (int y = 0; y < t.dims.h; ++y)
            for (int x = 0; x < t.dims.w; ++x) img.at(y, x, c) = quantize_unit(src[int64_t(y) * t.dims.w + x]);
    }
    return img;
}

}  // namespace msaan
