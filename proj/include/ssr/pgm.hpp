// Minimal binary PGM (P5) reader and the image-to-column-sequence pipeline.
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssr/datagen.hpp"
#include "ssr/ssr1.hpp"

namespace ssr {

struct PgmError : std::runtime_error {
    std::size_t offset;
    PgmError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

struct PgmImage {
    std::size_t width = 0, height = 0, maxval = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

namespace detail {

inline bool pgm_ws(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Skips whitespace and '#' comment lines.
inline void pgm_skip(const std::string& b, std::size_t& i) {
    while (i < b.size()) {
        if (pgm_ws(b[i])) {
            ++i;
        } else if (b[i] == '#') {
            while (i < b.size() && b[i] != '\n') ++i;
        } else {
            return;
        }
    }
}

inline std::size_t pgm_uint(const std::string& b, std::size_t& i, const char* what) {
    pgm_skip(b, i);
    if (i >= b.size() || b[i] < '0' || b[i] > '9')
        throw PgmError(std::string("expected ") + what, i);
    std::size_t v = 0;
    while (i < b.size() && b[i] >= '0' && b[i] <= '9') {
        v = v * 10 + static_cast<std::size_t>(b[i] - '0');
        if (v > 1000000000) throw PgmError(std::string(what) + " out of range", i);
        ++i;
    }
    return v;
}

}  // namespace detail

inline PgmImage read_pgm(const std::filesystem::path& path) {
    const std::string b = read_file(path);
    std::size_t i = 0;
    if (b.size() < 2 || b[0] != 'P' || b[1] != '5') throw PgmError("not a P5 PGM file", 0);
    i = 2;
    PgmImage img;
    img.width = detail::pgm_uint(b, i, "width");
    img.height = detail::pgm_uint(b, i, "height");
    img.maxval = detail::pgm_uint(b, i, "maxval");
    if (img.width == 0 || img.height == 0) throw PgmError("zero image dimension", i);
    if (img.maxval == 0 || img.maxval > 255) throw PgmError("maxval must be in 1..255", i);
    if (i >= b.size() || !detail::pgm_ws(b[i]))
        throw PgmError("expected single whitespace before pixel data", i);
    ++i;
    const std::size_t need = img.width * img.height;
    if (b.size() - i < need) throw PgmError("truncated pixel data", b.size());
    img.pixels.assign(b.begin() + static_cast<std::ptrdiff_t>(i),
                      b.begin() + static_cast<std::ptrdiff_t>(i + need));
    return img;
}

// Center-crops to a square, box-averages down to n x n, scales to [0, 1] and
// emits the n columns as y_seq (x_seq is produced separately by measure()).
// The square side is first reduced to the largest multiple of n so block
// averaging is exact.
inline SequenceSample load_image_columns(const std::filesystem::path& path, std::size_t n) {
    require(n >= 1, "load_image_columns: target side must be >= 1");
    const PgmImage img = read_pgm(path);
    const std::size_t side = std::min(img.width, img.height);
    require(side >= n, "load_image_columns: image smaller than target side");
    const std::size_t block = side / n;
    const std::size_t used = block * n;
    const std::size_t row0 = (img.height - used) / 2;
    const std::size_t col0 = (img.width - used) / 2;

    SequenceSample out;
    out.y_seq.assign(n, DenseVector(n, 0.0));
    const double scale = 1.0 / (static_cast<double>(img.maxval) * static_cast<double>(block * block));
    for (std::size_t bi = 0; bi < n; ++bi) {
        for (std::size_t bj = 0; bj < n; ++bj) {
            double acc = 0.0;
            for (std::size_t r = 0; r < block; ++r) {
                const std::size_t row = row0 + bi * block + r;
                const std::uint8_t* px = &img.pixels[row * img.width + col0 + bj * block];
                for (std::size_t c = 0; c < block; ++c) acc += px[c];
            }
            out.y_seq[bj][bi] = acc * scale;  // column bj, entry bi
        }
    }
    return out;
}

}  // namespace ssr
