#include "data/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace agcu {
namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("image_io: " + path + ": " + what);
}

// Skips whitespace and '#' comments, then reads one unsigned decimal token.
int64_t next_token(std::istream& in, const std::string& path) {
    for (;;) {
        int c = in.peek();
        if (c == EOF) fail(path, "truncated header");
        if (std::isspace(c)) {
            in.get();
        } else if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else {
            break;
        }
    }
    int64_t v = -1;
    in >> v;
    if (!in || v < 0) fail(path, "malformed header token");
    return v;
}

struct Raw {
    int channels = 0;
    int64_t h = 0, w = 0;
    std::vector<float> px;  // h*w*channels, interleaved, scaled to [0,1]
};

Raw read_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");
    char p = 0, kind = 0;
    in.get(p);
    in.get(kind);
    if (p != 'P' || (kind != '2' && kind != '3' && kind != '5' && kind != '6'))
        fail(path, "not a PGM/PPM file");
    const bool color = (kind == '3' || kind == '6');
    const bool binary = (kind == '5' || kind == '6');

    Raw r;
    r.channels = color ? 3 : 1;
    r.w = next_token(in, path);
    r.h = next_token(in, path);
    int64_t maxval = next_token(in, path);
    if (r.w <= 0 || r.h <= 0) fail(path, "bad dimensions");
    if (maxval <= 0 || maxval > 255) fail(path, "unsupported maxval");

    const int64_t n = r.h * r.w * r.channels;
    r.px.resize(static_cast<size_t>(n));
    const float denom = static_cast<float>(maxval);
    if (binary) {
        int sep = in.get();
        if (sep == EOF || !std::isspace(sep)) fail(path, "missing header separator");
        std::vector<unsigned char> buf(static_cast<size_t>(n));
        in.read(reinterpret_cast<char*>(buf.data()), n);
        if (in.gcount() != n) fail(path, "truncated pixel data");
        for (int64_t i = 0; i < n; ++i) {
            if (buf[static_cast<size_t>(i)] > maxval) fail(path, "pixel above maxval");
            r.px[static_cast<size_t>(i)] = static_cast<float>(buf[static_cast<size_t>(i)]) / denom;
        }
    } else {
        for (int64_t i = 0; i < n; ++i) {
            int64_t v = next_token(in, path);
            if (v > maxval) fail(path, "pixel above maxval");
            r.px[static_cast<size_t>(i)] = static_cast<float>(v) / denom;
        }
    }
    return r;
}

unsigned char to_byte(float v) {
    float s = std::clamp(v, 0.0f, 1.0f) * 255.0f;
    return static_cast<unsigned char>(std::lround(s));
}

}  // namespace

Tensor<float> read_image(const std::string& path) {
    Raw r = read_raw(path);
    Tensor<float> out({3, r.h, r.w});
    float* d = out.data();
    const int64_t plane = r.h * r.w;
    for (int64_t i = 0; i < plane; ++i) {
        if (r.channels == 3) {
            d[i] = r.px[static_cast<size_t>(3 * i)];
            d[plane + i] = r.px[static_cast<size_t>(3 * i + 1)];
            d[2 * plane + i] = r.px[static_cast<size_t>(3 * i + 2)];
        } else {
            d[i] = d[plane + i] = d[2 * plane + i] = r.px[static_cast<size_t>(i)];
        }
    }
    return out;
}

Tensor<float> read_gray(const std::string& path) {
    Raw r = read_raw(path);
    Tensor<float> out({r.h, r.w});
    float* d = out.data();
    const int64_t plane = r.h * r.w;
    for (int64_t i = 0; i < plane; ++i) {
        if (r.channels == 3) {
            d[i] = (r.px[static_cast<size_t>(3 * i)] + r.px[static_cast<size_t>(3 * i + 1)] +
                    r.px[static_cast<size_t>(3 * i + 2)]) /
                   3.0f;
        } else {
            d[i] = r.px[static_cast<size_t>(i)];
        }
    }
    return out;
}

void write_ppm(const std::string& path, const Tensor<float>& image) {
    if (image.shape().size() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("write_ppm: expected [3,H,W], got " + shape_str(image.shape()));
    const int64_t h = image.dim(1), w = image.dim(2), plane = h * w;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    const float* d = image.data();
    std::vector<unsigned char> buf(static_cast<size_t>(3 * plane));
    for (int64_t i = 0; i < plane; ++i) {
        buf[static_cast<size_t>(3 * i)] = to_byte(d[i]);
        buf[static_cast<size_t>(3 * i + 1)] = to_byte(d[plane + i]);
        buf[static_cast<size_t>(3 * i + 2)] = to_byte(d[2 * plane + i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(path, "write failed");
}

void write_pgm(const std::string& path, const Tensor<float>& gray) {
    if (gray.shape().size() != 2)
        throw std::invalid_argument("write_pgm: expected [H,W], got " + shape_str(gray.shape()));
    const int64_t h = gray.dim(0), w = gray.dim(1);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(path, "cannot open for writing");
    out << "P5\n" << w << " " << h << "\n255\n";
    const float* d = gray.data();
    std::vector<unsigned char> buf(static_cast<size_t>(h * w));
    for (int64_t i = 0; i < h * w; ++i) buf[static_cast<size_t>(i)] = to_byte(d[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(path, "write failed");
}

}  // namespace agcu
