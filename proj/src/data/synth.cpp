#include "data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/rng.hpp"
#include "data/resample.hpp"

namespace agcu {
namespace {

constexpr double kMinPositive = 0.01;
constexpr double kMaxPositive = 0.60;
constexpr int kMaxAttempts = 1000;

struct Blob {
    double cy, cx, a, b, cos_t, sin_t;
    float color[3];
};

Blob draw_blob(Rng& rng, const SyntheticConfig& cfg, const float base[3]) {
    Blob bl;
    const double side = static_cast<double>(cfg.side);
    bl.cy = (0.2 + 0.6 * rng.uniform()) * side;
    bl.cx = (0.2 + 0.6 * rng.uniform()) * side;
    bl.a = (0.10 + 0.18 * rng.uniform()) * side;
    double ecc = cfg.ecc_min + (cfg.ecc_max - cfg.ecc_min) * rng.uniform();
    bl.b = bl.a * ecc;
    double theta = rng.uniform() * 3.14159265358979323846;
    bl.cos_t = std::cos(theta);
    bl.sin_t = std::sin(theta);
    for (int c = 0; c < 3; ++c) {
        // Shift each channel away from the background base so the blob is
        // always separable from its surroundings.
        double shift = 0.25 + 0.20 * rng.uniform();
        double sign = (rng.uniform() < 0.5) ? -1.0 : 1.0;
        if (base[c] + sign * shift < 0.05 || base[c] + sign * shift > 0.95) sign = -sign;
        bl.color[c] = static_cast<float>(std::clamp(base[c] + sign * shift, 0.0, 1.0));
    }
    return bl;
}

bool inside(const Blob& bl, int64_t y, int64_t x) {
    double dy = static_cast<double>(y) + 0.5 - bl.cy;
    double dx = static_cast<double>(x) + 0.5 - bl.cx;
    double u = (dx * bl.cos_t + dy * bl.sin_t) / bl.a;
    double v = (-dx * bl.sin_t + dy * bl.cos_t) / bl.b;
    return u * u + v * v <= 1.0;
}

SamplePair make_sample(Rng& rng, const SyntheticConfig& cfg, const std::string& id) {
    const int64_t side = cfg.side;
    float base[3];
    for (float& b : base) b = static_cast<float>(0.25 + 0.30 * rng.uniform());

    Tensor<float> grid({3, 8, 8});
    for (float& v : grid.vec())
        v = static_cast<float>((rng.uniform() * 2.0 - 1.0) * cfg.noise_amp);
    Tensor<float> coarse = bilinear_resize_chw(grid, side, side);

    SamplePair s;
    s.id = id;
    s.image = Tensor<float>({3, side, side});
    float* img = s.image.data();
    const float* co = coarse.data();
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t i = 0; i < side * side; ++i)
            img[c * side * side + i] = base[c] + co[c * side * side + i];

    std::vector<Blob> blobs;
    Tensor<float> mask;
    for (int attempt = 0;; ++attempt) {
        if (attempt >= kMaxAttempts)
            throw std::runtime_error("synth_generate: cannot satisfy the positive-fraction "
                                     "bounds with this config");
        blobs.clear();
        int nb = static_cast<int>(rng.uniform_int(cfg.min_blobs, cfg.max_blobs));
        for (int i = 0; i < nb; ++i) blobs.push_back(draw_blob(rng, cfg, base));

        mask = Tensor<float>::full({side, side}, 0.0f);
        int64_t pos = 0;
        float* m = mask.data();
        for (int64_t y = 0; y < side; ++y)
            for (int64_t x = 0; x < side; ++x)
                for (const auto& bl : blobs)
                    if (inside(bl, y, x)) {
                        if (m[y * side + x] == 0.0f) {
                            m[y * side + x] = 1.0f;
                            ++pos;
                        }
                        break;
                    }
        double frac = static_cast<double>(pos) / static_cast<double>(side * side);
        if (frac >= kMinPositive && frac <= kMaxPositive) break;
    }
    s.mask = std::move(mask);

    const float* m = s.mask.data();
    for (int64_t y = 0; y < side; ++y)
        for (int64_t x = 0; x < side; ++x) {
            if (m[y * side + x] == 0.0f) continue;
            for (const auto& bl : blobs)
                if (inside(bl, y, x)) {
                    for (int64_t c = 0; c < 3; ++c) {
                        float& px = img[(c * side + y) * side + x];
                        px = 0.75f * bl.color[c] + 0.25f * px;
                    }
                    break;
                }
        }

    for (int64_t i = 0; i < s.image.numel(); ++i) {
        float n = static_cast<float>((rng.uniform() * 2.0 - 1.0) * cfg.noise_amp * 0.5);
        img[i] = std::clamp(img[i] + n, 0.0f, 1.0f);
    }
    return s;
}

}  // namespace

void SyntheticConfig::validate() const {
    if (count < 1) throw std::invalid_argument("SyntheticConfig: count must be positive");
    if (side <= 0 || side % 32 != 0)
        throw std::invalid_argument("SyntheticConfig: side must be a positive multiple of 32");
    if (min_blobs < 1 || max_blobs < min_blobs)
        throw std::invalid_argument("SyntheticConfig: bad blob count range");
    if (!(ecc_min > 0.0 && ecc_min <= ecc_max && ecc_max <= 1.0))
        throw std::invalid_argument("SyntheticConfig: eccentricity range must satisfy "
                                    "0 < min <= max <= 1");
    if (!(noise_amp >= 0.0 && noise_amp <= 0.5))
        throw std::invalid_argument("SyntheticConfig: noise_amp must be in [0, 0.5]");
}

std::vector<SamplePair> synth_generate(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    int width = 3;
    for (int64_t v = cfg.count - 1; v >= 1000; v /= 10) ++width;
    std::vector<SamplePair> out;
    out.reserve(static_cast<size_t>(cfg.count));
    for (int64_t i = 0; i < cfg.count; ++i) {
        std::string n = std::to_string(i);
        std::string id = "sample_" + std::string(static_cast<size_t>(width) - n.size(), '0') + n;
        out.push_back(make_sample(rng, cfg, id));
    }
    return out;
}

}  // namespace agcu
