#include "topowarp/pgm.hpp"

#include <cmath>
#include <fstream>

namespace topowarp {

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& is) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

}  // namespace

void write_pgm(const std::string& path, const PgmImage& img) {
    if (img.pix.size() != img.h * img.w) throw IoError("pgm write: pixel count mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << "P5\n" << img.w << " " << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pix.data()),
             static_cast<std::streamsize>(img.pix.size()));
    if (!os) throw IoError("pgm write failed: " + path);
}

PgmImage read_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    if (next_token(is) != "P5") throw IoError("not a binary PGM (P5) file: " + path);
    PgmImage img;
    try {
        img.w = std::stoul(next_token(is));
        img.h = std::stoul(next_token(is));
        const unsigned maxval = static_cast<unsigned>(std::stoul(next_token(is)));
        if (maxval != 255) throw IoError("pgm read: only maxval 255 is supported: " + path);
    } catch (const std::logic_error&) {
        throw IoError("pgm read: malformed header: " + path);
    }
    img.pix.resize(img.h * img.w);
    is.read(reinterpret_cast<char*>(img.pix.data()),
            static_cast<std::streamsize>(img.pix.size()));
    if (!is) throw IoError("pgm read: truncated pixel data: " + path);
    return img;
}

void write_mask_pgm(const std::string& path, const BinaryMask& mask) {
    PgmImage img;
    img.h = mask.h;
    img.w = mask.w;
    img.pix.resize(mask.v.size());
    for (std::size_t i = 0; i < mask.v.size(); ++i) img.pix[i] = mask.v[i] ? 255 : 0;
    write_pgm(path, img);
}

BinaryMask read_mask_pgm(const std::string& path) {
    const PgmImage img = read_pgm(path);
    BinaryMask mask(img.h, img.w);
    for (std::size_t i = 0; i < img.pix.size(); ++i) mask.v[i] = img.pix[i] >= 128 ? 1 : 0;
    return mask;
}

void write_image_pgm(const std::string& path, const Tensor& t) {
    std::size_t h = 0, w = 0;
    std::size_t off = 0;
    if (t.rank() == 2) {
        h = t.extent(0);
        w = t.extent(1);
    } else if (t.rank() == 3 && t.extent(0) == 1) {
        h = t.extent(1);
        w = t.extent(2);
    } else {
        throw ShapeError("write_image_pgm: expected [H,W] or [1,H,W], got " +
                         shape_str(t.shape()));
    }
    PgmImage img;
    img.h = h;
    img.w = w;
    img.pix.resize(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
        double v = t[off + i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        img.pix[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    write_pgm(path, img);
}

Tensor read_image_pgm(const std::string& path) {
    const PgmImage img = read_pgm(path);
    Tensor t(Shape{1, img.h, img.w});
    for (std::size_t i = 0; i < img.pix.size(); ++i)
        t[i] = static_cast<double>(img.pix[i]) / 255.0;
    return t;
}

void write_heatmap_pgm(const std::string& path, const Tensor& values) {
    if (values.rank() != 2)
        throw ShapeError("write_heatmap_pgm: expected rank-2 tensor, got " +
                         shape_str(values.shape()));
    double lo = values[0], hi = values[0];
    for (std::size_t i = 0; i < values.numel(); ++i) {
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    PgmImage img;
    img.h = values.extent(0);
    img.w = values.extent(1);
    img.pix.resize(values.numel());
    const double span = hi - lo;
    for (std::size_t i = 0; i < values.numel(); ++i) {
        const double v = span > 0.0 ? (values[i] - lo) / span : 0.5;
        img.pix[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    write_pgm(path, img);
}

}  // namespace topowarp
