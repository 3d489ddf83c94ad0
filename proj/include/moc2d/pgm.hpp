#pragma once

// Binary PGM (P5, maxval 255) reader/writer. Parse errors name the byte
// offset where the header went wrong.

#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "moc2d/errors.hpp"

namespace moc2d {

/// Grayscale raster with values in [0,1]; row 0 is the top image row.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // row-major, top to bottom
    double pitch = 1.0;          // domain length units per pixel

    double at(int i, int j) const { return pixels[static_cast<size_t>(j) * width + i]; }
    double& at(int i, int j) { return pixels[static_cast<size_t>(j) * width + i]; }
};

namespace detail {

struct PgmScanner {
    std::istream& is;
    long offset = 0;

    int get() {
        const int c = is.get();
        if (c != EOF) ++offset;
        return c;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw IoError("malformed PGM header at byte " + std::to_string(offset) + ": " + what);
    }

    void skip_space_and_comments() {
        while (true) {
            int c = is.peek();
            if (c == '#') {
                while (c != EOF && c != '\n') c = get();
                continue;
            }
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                get();
                continue;
            }
            return;
        }
    }

    long read_number() {
        skip_space_and_comments();
        int c = is.peek();
        if (c == EOF) fail("unexpected end of header");
        if (c < '0' || c > '9') fail(std::string("expected digit, got '") + char(c) + "'");
        long value = 0;
        while (c >= '0' && c <= '9') {
            get();
            value = value * 10 + (c - '0');
            if (value > 100000000L) fail("numeric field out of range");
            c = is.peek();
        }
        return value;
    }
};

}  // namespace detail

inline GrayImage read_pgm(std::istream& is) {
    detail::PgmScanner sc{is};
    if (sc.get() != 'P') sc.fail("missing magic 'P5'");
    const int kind = sc.get();
    if (kind != '5') sc.fail("only binary P5 is supported");
    GrayImage img;
    const long w = sc.read_number();
    const long h = sc.read_number();
    const long maxval = sc.read_number();
    if (w <= 0 || h <= 0 || w > 65536 || h > 65536) sc.fail("implausible dimensions");
    if (maxval != 255) sc.fail("maxval must be 255");
    const int sep = sc.get();
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') {
        sc.fail("expected single whitespace before raster");
    }
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.pixels.resize(static_cast<size_t>(w) * h);
    std::vector<unsigned char> raw(img.pixels.size());
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(is.gcount()) != raw.size()) {
        throw IoError("truncated PGM raster at byte " +
                      std::to_string(sc.offset + is.gcount()));
    }
    for (size_t k = 0; k < raw.size(); ++k) img.pixels[k] = raw[k] / 255.0;
    return img;
}

inline void write_pgm(std::ostream& os, const GrayImage& img) {
    os << "P5\n" << img.width << " " << img.height << "\n255\n";
    for (double v : img.pixels) {
        const double t = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * t))));
    }
    if (!os) throw IoError("failed to write PGM");
}

}  // namespace moc2d
