#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/tensor.hpp"

namespace agcu {

/// Bilinear resample of a [C,H,W] tensor to [C,oh,ow], half-pixel centers,
/// edge taps clamped. Matches the convention used inside the network.
inline Tensor<float> bilinear_resize_chw(const Tensor<float>& in, int64_t oh, int64_t ow) {
    if (in.shape().size() != 3)
        throw std::invalid_argument("bilinear_resize_chw: expected [C,H,W], got " +
                                    shape_str(in.shape()));
    const int64_t c = in.dim(0), ih = in.dim(1), iw = in.dim(2);
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("bilinear_resize_chw: bad target size");
    Tensor<float> out({c, oh, ow});
    const double sy = static_cast<double>(ih) / static_cast<double>(oh);
    const double sx = static_cast<double>(iw) / static_cast<double>(ow);
    const float* src = in.data();
    float* dst = out.data();
    for (int64_t oy = 0; oy < oh; ++oy) {
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        int64_t y0 = static_cast<int64_t>(std::floor(fy));
        double wy = fy - static_cast<double>(y0);
        int64_t y0c = std::clamp<int64_t>(y0, 0, ih - 1);
        int64_t y1c = std::clamp<int64_t>(y0 + 1, 0, ih - 1);
        for (int64_t ox = 0; ox < ow; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            int64_t x0 = static_cast<int64_t>(std::floor(fx));
            double wx = fx - static_cast<double>(x0);
            int64_t x0c = std::clamp<int64_t>(x0, 0, iw - 1);
            int64_t x1c = std::clamp<int64_t>(x0 + 1, 0, iw - 1);
            for (int64_t ch = 0; ch < c; ++ch) {
                const float* plane = src + ch * ih * iw;
                double top = (1.0 - wx) * plane[y0c * iw + x0c] + wx * plane[y0c * iw + x1c];
                double bot = (1.0 - wx) * plane[y1c * iw + x0c] + wx * plane[y1c * iw + x1c];
                dst[(ch * oh + oy) * ow + ox] = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

/// Nearest-neighbor resample of a [H,W] tensor to [oh,ow]; values pass
/// through untouched, so binary masks stay binary.
inline Tensor<float> nearest_resize_hw(const Tensor<float>& in, int64_t oh, int64_t ow) {
    if (in.shape().size() != 2)
        throw std::invalid_argument("nearest_resize_hw: expected [H,W], got " +
                                    shape_str(in.shape()));
    const int64_t ih = in.dim(0), iw = in.dim(1);
    if (oh <= 0 || ow <= 0) throw std::invalid_argument("nearest_resize_hw: bad target size");
    Tensor<float> out({oh, ow});
    const double sy = static_cast<double>(ih) / static_cast<double>(oh);
    const double sx = static_cast<double>(iw) / static_cast<double>(ow);
    const float* src = in.data();
    float* dst = out.data();
    for (int64_t oy = 0; oy < oh; ++oy) {
        int64_t ny = std::clamp<int64_t>(
            static_cast<int64_t>(std::floor((static_cast<double>(oy) + 0.5) * sy)), 0, ih - 1);
        for (int64_t ox = 0; ox < ow; ++ox) {
            int64_t nx = std::clamp<int64_t>(
                static_cast<int64_t>(std::floor((static_cast<double>(ox) + 0.5) * sx)), 0, iw - 1);
            dst[oy * ow + ox] = src[ny * iw + nx];
        }
    }
    return out;
}

}  // namespace agcu
