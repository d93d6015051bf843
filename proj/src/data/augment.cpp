#include "data/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "data/resample.hpp"

namespace agcu {
namespace {

Tensor<float> lift_hw(const Tensor<float>& m) {
    Tensor<float> t({1, m.dim(0), m.dim(1)});
    std::copy(m.vec().begin(), m.vec().end(), t.vec().begin());
    return t;
}

Tensor<float> drop_plane(const Tensor<float>& t) {
    Tensor<float> m({t.dim(1), t.dim(2)});
    std::copy(t.vec().begin(), t.vec().end(), m.vec().begin());
    return m;
}

Tensor<float> hflip(const Tensor<float>& in) {
    const int64_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<float> out({c, h, w});
    const float* s = in.data();
    float* d = out.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t r = 0; r < h; ++r)
            for (int64_t col = 0; col < w; ++col)
                d[(ch * h + r) * w + col] = s[(ch * h + r) * w + (w - 1 - col)];
    return out;
}

Tensor<float> vflip(const Tensor<float>& in) {
    const int64_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<float> out({c, h, w});
    const float* s = in.data();
    float* d = out.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t r = 0; r < h; ++r)
            for (int64_t col = 0; col < w; ++col)
                d[(ch * h + r) * w + col] = s[(ch * h + (h - 1 - r)) * w + col];
    return out;
}

// Rescales by `factor`, then restores the original frame: center crop when
// the rescaled plane is larger, centered zero padding when it is smaller.
Tensor<float> rescale_chw(const Tensor<float>& in, double factor, bool nearest) {
    const int64_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int64_t nh = std::llround(static_cast<double>(h) * factor);
    const int64_t nw = std::llround(static_cast<double>(w) * factor);
    Tensor<float> scaled;
    if (nearest) {
        Tensor<float> sc({c, nh, nw});
        for (int64_t ch = 0; ch < c; ++ch) {
            Tensor<float> plane({h, w});
            std::copy(in.vec().begin() + ch * h * w, in.vec().begin() + (ch + 1) * h * w,
                      plane.vec().begin());
            Tensor<float> rp = nearest_resize_hw(plane, nh, nw);
            std::copy(rp.vec().begin(), rp.vec().end(), sc.vec().begin() + ch * nh * nw);
        }
        scaled = std::move(sc);
    } else {
        scaled = bilinear_resize_chw(in, nh, nw);
    }

    Tensor<float> out = Tensor<float>::full({c, h, w}, 0.0f);
    const float* s = scaled.data();
    float* d = out.data();
    if (nh >= h) {
        int64_t oy = (nh - h) / 2, ox = (nw - w) / 2;
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t r = 0; r < h; ++r)
                for (int64_t col = 0; col < w; ++col)
                    d[(ch * h + r) * w + col] = s[(ch * nh + r + oy) * nw + col + ox];
    } else {
        int64_t oy = (h - nh) / 2, ox = (w - nw) / 2;
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t r = 0; r < nh; ++r)
                for (int64_t col = 0; col < nw; ++col)
                    d[(ch * h + r + oy) * w + col + ox] = s[(ch * nh + r) * nw + col];
    }
    return out;
}

SamplePair geometric(const SamplePair& s, const std::string& tag,
                     Tensor<float> (*f)(const Tensor<float>&)) {
    SamplePair out;
    out.id = s.id + "." + tag;
    out.image = f(s.image);
    out.mask = drop_plane(f(lift_hw(s.mask)));
    return out;
}

SamplePair rescaled(const SamplePair& s, const std::string& tag, double factor) {
    SamplePair out;
    out.id = s.id + "." + tag;
    out.image = rescale_chw(s.image, factor, false);
    out.mask = drop_plane(rescale_chw(lift_hw(s.mask), factor, true));
    return out;
}

SamplePair photometric(const SamplePair& s, const std::string& tag,
                       Tensor<float> (*f)(const Tensor<float>&)) {
    SamplePair out;
    out.id = s.id + "." + tag;
    out.image = f(s.image);
    out.mask = s.mask;
    return out;
}

Tensor<float> brighten(const Tensor<float>& in) {
    Tensor<float> out(in.shape());
    for (int64_t i = 0; i < in.numel(); ++i)
        out.data()[i] = std::clamp(in.data()[i] * 1.5f, 0.0f, 1.0f);
    return out;
}

Tensor<float> darken(const Tensor<float>& in) {
    double mean = 0;
    for (int64_t i = 0; i < in.numel(); ++i) mean += in.data()[i];
    mean /= static_cast<double>(in.numel());
    const float m = static_cast<float>(mean);
    Tensor<float> out(in.shape());
    for (int64_t i = 0; i < in.numel(); ++i) out.data()[i] = m + 0.5f * (in.data()[i] - m);
    return out;
}

}  // namespace

Tensor<float> rot90_ccw(const Tensor<float>& in) {
    if (in.shape().size() != 3)
        throw std::invalid_argument("rot90_ccw: expected [C,H,W], got " + shape_str(in.shape()));
    const int64_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<float> out({c, w, h});
    const float* s = in.data();
    float* d = out.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t r = 0; r < w; ++r)
            for (int64_t col = 0; col < h; ++col)
                d[(ch * w + r) * h + col] = s[(ch * h + (h - 1 - col)) * w + r];
    return out;
}

Tensor<float> gaussian_blur5(const Tensor<float>& in) {
    if (in.shape().size() != 3)
        throw std::invalid_argument("gaussian_blur5: expected [C,H,W], got " +
                                    shape_str(in.shape()));
    double k[5];
    double sum = 0;
    for (int i = -2; i <= 2; ++i) {
        k[i + 2] = std::exp(-0.5 * static_cast<double>(i * i));
        sum += k[i + 2];
    }
    for (double& v : k) v /= sum;

    const int64_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<float> mid({c, h, w});
    Tensor<float> out({c, h, w});
    const float* s = in.data();
    float* md = mid.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t r = 0; r < h; ++r)
            for (int64_t col = 0; col < w; ++col) {
                double acc = 0;
                for (int i = -2; i <= 2; ++i) {
                    int64_t cc = std::clamp<int64_t>(col + i, 0, w - 1);
                    acc += k[i + 2] * s[(ch * h + r) * w + cc];
                }
                md[(ch * h + r) * w + col] = static_cast<float>(acc);
            }
    float* d = out.data();
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t r = 0; r < h; ++r)
            for (int64_t col = 0; col < w; ++col) {
                double acc = 0;
                for (int i = -2; i <= 2; ++i) {
                    int64_t rr = std::clamp<int64_t>(r + i, 0, h - 1);
                    acc += k[i + 2] * md[(ch * h + rr) * w + col];
                }
                d[(ch * h + r) * w + col] = static_cast<float>(acc);
            }
    return out;
}

std::vector<SamplePair> augment_twelve(const SamplePair& s) {
    s.validate();
    std::vector<SamplePair> out;
    out.reserve(12);

    auto rot90x2 = [](const Tensor<float>& t) { return rot90_ccw(rot90_ccw(t)); };
    auto rot90x3 = [](const Tensor<float>& t) { return rot90_ccw(rot90_ccw(rot90_ccw(t))); };
    out.push_back(geometric(s, "rot90", rot90_ccw));
    out.push_back(geometric(s, "rot180", rot90x2));
    out.push_back(geometric(s, "rot270", rot90x3));
    out.push_back(geometric(s, "hflip", hflip));
    out.push_back(geometric(s, "vflip", vflip));
    out.push_back(rescaled(s, "scale090", 0.9));
    out.push_back(rescaled(s, "scale110", 1.1));
    out.push_back(rescaled(s, "scale115", 1.15));
    out.push_back(rescaled(s, "scale120", 1.2));
    out.push_back(photometric(s, "blur", gaussian_blur5));
    out.push_back(photometric(s, "brighten", brighten));
    out.push_back(photometric(s, "darken", darken));
    for (const auto& v : out) v.validate();
    return out;
}

}  // namespace agcu
