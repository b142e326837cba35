#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "atep/common.hpp"

namespace atep {

struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major grayscale

    uint8_t at(int row, int col) const { return pixels[std::size_t(row) * width + col]; }
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

/// Write a file atomically: write to a sibling temp file, then rename over
/// the target. Readers never observe a half-written file.
inline void atomic_write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

/// FNV-1a 64-bit content digest; used for cache keys and run manifests.
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string digest_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

inline uint64_t digest_file(const std::string& path) { return fnv1a64(read_file_bytes(path)); }

// ---- PGM (portable graymap), the required raster format ----

namespace detail {
inline int pgm_next_int(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comment lines between header tokens.
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string dummy;
            std::getline(in, dummy);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = 0;
    if (!(in >> v)) throw ParseError("malformed PGM header in " + path);
    return v;
}
}  // namespace detail

/// Read an 8-bit PGM image (binary P5 or ASCII P2).
inline Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P2") throw ParseError(path + ": not a PGM file (magic " + magic + ")");
    Image img;
    img.width = detail::pgm_next_int(in, path);
    img.height = detail::pgm_next_int(in, path);
    int maxval = detail::pgm_next_int(in, path);
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
        throw ParseError(path + ": unsupported PGM dimensions or maxval");
    std::size_t n = std::size_t(img.width) * std::size_t(img.height);
    img.pixels.resize(n);
    if (magic == "P5") {
        in.get();  // single whitespace after maxval
        in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(n));
        if (std::size_t(in.gcount()) != n) throw ParseError(path + ": truncated PGM payload");
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            int v = 0;
            if (!(in >> v) || v < 0 || v > maxval) throw ParseError(path + ": bad PGM sample");
            img.pixels[i] = uint8_t(v);
        }
    }
    return img;
}

inline void write_pgm(const std::string& path, const Image& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
    atomic_write_file(path, out);
}

}  // namespace atep
