// Verification gate: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "core/rng.hpp"
#include "core/tape.hpp"
#include "data/augment.hpp"
#include "data/dataset.hpp"
#include "data/scenario.hpp"
#include "data/synth.hpp"
#include "model/attention_gate.hpp"
#include "model/coupled_net.hpp"
#include "model/splat.hpp"
#include "train/checkpoint.hpp"
#include "train/config.hpp"
#include "train/gradsuite.hpp"
#include "train/losses.hpp"
#include "train/metrics.hpp"
#include "train/trainer.hpp"

using namespace agcu;
namespace fs = std::filesystem;

namespace {

// Frozen tolerances and budgets. The smoke-test wall bound was set after a
// calibration run (about 200s on one core) with a wide margin.
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 300.0;
constexpr double kAttnSumTol = 1e-6;
constexpr double kSplatOracleTol = 1e-9;
constexpr double kGateSaturationTol = 1e-8;
constexpr double kDiceIdentityTol = 1e-9;
constexpr double kAucOracleTol = 1e-9;
constexpr double kSmokeDice = 0.85;
constexpr int kSmokeEpochBudget = 30;
constexpr double kSmokeWallSec = 900.0;

struct Outcome {
    bool ok = true;
    std::string detail;
};

Outcome pass(std::string detail = "") { return {true, std::move(detail)}; }
Outcome fail(std::string detail) { return {false, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_dir() {
    static fs::path p = [] {
        fs::path d = fs::temp_directory_path() / "agcu_acceptance";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(s));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

template <typename T>
void randomize_params(ParamSet<T>& ps, Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (auto& [name, t] : ps.params)
        for (int64_t i = 0; i < t->numel(); ++i) (*t)[i] = static_cast<T>(rng.uniform(lo, hi));
}

// ---- straight-line reimplementation of the split-attention block ----------

Tensor<double> conv_naive(const Tensor<double>& x, const Tensor<double>& w,
                          const Tensor<double>* bias, int s, int p) {
    int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    int64_t Ho = (H + 2 * p - kh) / s + 1, Wo = (W + 2 * p - kw) / s + 1;
    Tensor<double> y(Shape{B, Cout, Ho, Wo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    double acc = bias ? (*bias)[co] : 0.0;
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t i = 0; i < kh; ++i)
                            for (int64_t j = 0; j < kw; ++j) {
                                int64_t ih = oh * s + i - p, iw = ow * s + j - p;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at4(b, ci, ih, iw) * w.at4(co, ci, i, j);
                            }
                    y.at4(b, co, oh, ow) = acc;
                }
    return y;
}

Tensor<double> bn_eval_naive(const Tensor<double>& x, const Tensor<double>& gamma,
                             const Tensor<double>& beta, const Tensor<double>& rm,
                             const Tensor<double>& rv, double eps) {
    Tensor<double> y(x.shape());
    for (int64_t b = 0; b < x.dim(0); ++b)
        for (int64_t c = 0; c < x.dim(1); ++c)
            for (int64_t h = 0; h < x.dim(2); ++h)
                for (int64_t w = 0; w < x.dim(3); ++w)
                    y.at4(b, c, h, w) =
                        gamma[c] * (x.at4(b, c, h, w) - rm[c]) / std::sqrt(rv[c] + eps) + beta[c];
    return y;
}

Tensor<double> splat_naive(const SplatConfig& cfg, SplatBlock<double>& blk,
                           const Tensor<double>& x) {
    int K = cfg.cardinality, R = cfg.radix;
    int64_t B = x.dim(0), ck = cfg.out_channels / K;

    std::vector<Tensor<double>> u;
    for (int g = 0; g < cfg.groups(); ++g) {
        auto c = conv_naive(x, blk.conv_w[static_cast<size_t>(g)], nullptr, cfg.stride, 1);
        u.push_back(bn_eval_naive(c, blk.bn_gamma[static_cast<size_t>(g)],
                                  blk.bn_beta[static_cast<size_t>(g)],
                                  blk.bn_state[static_cast<size_t>(g)].mean,
                                  blk.bn_state[static_cast<size_t>(g)].var, kBnEps));
    }
    int64_t Ho = u[0].dim(2), Wo = u[0].dim(3);

    Tensor<double> y(Shape{B, cfg.out_channels, Ho, Wo});
    for (int k = 0; k < K; ++k) {
        Tensor<double> uhat(Shape{B, ck, Ho, Wo});
        for (int r = 0; r < R; ++r)
            for (int64_t i = 0; i < uhat.numel(); ++i)
                uhat[i] += u[static_cast<size_t>(k * R + r)][i];

        Tensor<double> s(Shape{B, ck});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < ck; ++c) {
                double acc = 0;
                for (int64_t h = 0; h < Ho; ++h)
                    for (int64_t w = 0; w < Wo; ++w) acc += uhat.at4(b, c, h, w);
                s.at2(b, c) = acc / static_cast<double>(Ho * Wo);
            }

        int64_t hd = cfg.hidden();
        const auto& w1 = blk.fc1_w[static_cast<size_t>(k)];
        const auto& b1 = blk.fc1_b[static_cast<size_t>(k)];
        const auto& w2 = blk.fc2_w[static_cast<size_t>(k)];
        const auto& b2 = blk.fc2_b[static_cast<size_t>(k)];
        for (int64_t b = 0; b < B; ++b) {
            std::vector<double> hvec(static_cast<size_t>(hd));
            for (int64_t j = 0; j < hd; ++j) {
                double acc = b1[j];
                for (int64_t i = 0; i < ck; ++i) acc += w1.at2(j, i) * s.at2(b, i);
                hvec[static_cast<size_t>(j)] = std::max(acc, 0.0);
            }
            std::vector<double> logits(static_cast<size_t>(R) * static_cast<size_t>(ck));
            for (int64_t j = 0; j < static_cast<int64_t>(R) * ck; ++j) {
                double acc = b2[j];
                for (int64_t i = 0; i < hd; ++i) acc += w2.at2(j, i) * hvec[static_cast<size_t>(i)];
                logits[static_cast<size_t>(j)] = acc;
            }
            std::vector<double> a(logits.size());
            if (R > 1) {
                for (int64_t c = 0; c < ck; ++c) {
                    double mx = logits[static_cast<size_t>(c)];
                    for (int r = 1; r < R; ++r)
                        mx = std::max(mx, logits[static_cast<size_t>(r * ck + c)]);
                    double z = 0;
                    for (int r = 0; r < R; ++r)
                        z += std::exp(logits[static_cast<size_t>(r * ck + c)] - mx);
                    for (int r = 0; r < R; ++r)
                        a[static_cast<size_t>(r * ck + c)] =
                            std::exp(logits[static_cast<size_t>(r * ck + c)] - mx) / z;
                }
            } else {
                for (size_t j = 0; j < logits.size(); ++j)
                    a[j] = 1.0 / (1.0 + std::exp(-logits[j]));
            }
            for (int64_t c = 0; c < ck; ++c)
                for (int64_t h = 0; h < Ho; ++h)
                    for (int64_t w = 0; w < Wo; ++w) {
                        double acc = 0;
                        for (int r = 0; r < R; ++r)
                            acc += a[static_cast<size_t>(r * ck + c)] *
                                   u[static_cast<size_t>(k * R + r)].at4(b, c, h, w);
                        y.at4(b, k * ck + c, h, w) = acc;
                    }
        }
    }

    if (blk.has_shortcut) {
        auto sc = conv_naive(x, blk.short_w, &blk.short_b, cfg.stride, 0);
        for (int64_t i = 0; i < y.numel(); ++i) y[i] += sc[i];
    } else {
        for (int64_t i = 0; i < y.numel(); ++i) y[i] += x[i];
    }
    return y;
}

// Nearest-neighbor rescale of a [H,W] mask to `factor`, center-cropped or
// zero-padded back to the original side, matching the augmentation recipe.
Tensor<float> rescale_mask_oracle(const Tensor<float>& mask, double factor) {
    int64_t side = mask.dim(0);
    int64_t ns = std::llround(static_cast<double>(side) * factor);
    Tensor<float> scaled({ns, ns});
    double scale = static_cast<double>(side) / static_cast<double>(ns);
    for (int64_t y = 0; y < ns; ++y)
        for (int64_t x = 0; x < ns; ++x) {
            auto src = [&](int64_t o) {
                int64_t s = static_cast<int64_t>(
                    std::floor((static_cast<double>(o) + 0.5) * scale));
                return std::clamp<int64_t>(s, 0, side - 1);
            };
            scaled[y * ns + x] = mask[src(y) * side + src(x)];
        }
    Tensor<float> out({side, side});
    if (ns >= side) {
        int64_t off = (ns - side) / 2;
        for (int64_t y = 0; y < side; ++y)
            for (int64_t x = 0; x < side; ++x) out[y * side + x] = scaled[(y + off) * ns + x + off];
    } else {
        int64_t off = (side - ns) / 2;
        for (int64_t y = 0; y < ns; ++y)
            for (int64_t x = 0; x < ns; ++x) out[(y + off) * side + x + off] = scaled[y * ns + x];
    }
    return out;
}

// ---- criteria --------------------------------------------------------------

Outcome criterion_gradients() {
    auto t0 = std::chrono::steady_clock::now();
    GradReport r = gradient_suite("full");
    double secs = seconds_since(t0);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "max rel err %.3g over %zu checks in %.0fs", r.max_err,
                  r.items.size(), secs);
    if (r.max_err >= kGradTol) return fail(buf);
    if (secs >= kGradBudgetSec) return fail(std::string(buf) + " (over budget)");
    return pass(buf);
}

Outcome criterion_attention_normalization() {
    Rng rng(1001);
    for (int rep = 0; rep < 1000; ++rep) {
        SplatConfig c;
        c.radix = 2 + rep % 3;
        c.cardinality = static_cast<int>(rng.uniform_int(1, 3));
        int64_t ck = rng.uniform_int(1, 4);
        c.out_channels = c.cardinality * ck;
        c.in_channels = rng.uniform_int(1, 4);
        c.stride = rng.uniform(0, 1) < 0.5 ? 1 : 2;

        SplatBlock<float> blk(c);
        blk.init(rng);
        ParamSet<float> ps;
        blk.register_into(ps, "b");
        randomize_params(ps, rng, -2.0, 2.0);

        int64_t B = rng.uniform_int(1, 2);
        Tensor<float> x = random_tensor<float>(Shape{B, c.in_channels, 4, 4}, rng, -2.0, 2.0);
        Tape<float> t;
        auto out = blk.forward(t, t.constant(x), BnMode::Train);
        for (Var a : out.attn) {
            const Tensor<float>& av = t.value(a);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t ch = 0; ch < ck; ++ch) {
                    double sum = 0;
                    for (int64_t r = 0; r < c.radix; ++r) sum += av[(b * c.radix + r) * ck + ch];
                    if (std::abs(sum - 1.0) > kAttnSumTol)
                        return fail("split weights sum to " + std::to_string(sum) + " at rep " +
                                    std::to_string(rep));
                }
        }
    }

    for (int rep = 0; rep < 100; ++rep) {
        SplatConfig c;
        c.radix = 1;
        c.cardinality = static_cast<int>(rng.uniform_int(1, 3));
        c.out_channels = c.cardinality * rng.uniform_int(1, 4);
        c.in_channels = rng.uniform_int(1, 4);
        SplatBlock<float> blk(c);
        blk.init(rng);
        ParamSet<float> ps;
        blk.register_into(ps, "b");
        randomize_params(ps, rng, -0.5, 0.5);
        Tensor<float> x = random_tensor<float>(Shape{1, c.in_channels, 4, 4}, rng);
        Tape<float> t;
        auto out = blk.forward(t, t.constant(x), BnMode::Train);
        for (Var a : out.attn)
            for (float v : t.value(a).vec())
                if (!(v > 0.0f && v < 1.0f))
                    return fail("radix-1 weight " + std::to_string(v) + " outside (0,1)");
    }
    return pass("1000 multi-split configs and 100 radix-1 configs");
}

Outcome criterion_splat_oracle() {
    Rng rng(1003);
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        SplatConfig c;
        c.cardinality = static_cast<int>(rng.uniform_int(1, 4));
        c.radix = static_cast<int>(rng.uniform_int(1, 4));
        int64_t ck = rng.uniform_int(1, 4);
        c.out_channels = c.cardinality * ck;
        c.in_channels = rng.uniform_int(1, 6);
        c.stride = rng.uniform(0, 1) < 0.5 ? 1 : 2;

        SplatBlock<double> blk(c);
        blk.init(rng);
        ParamSet<double> ps;
        blk.register_into(ps, "b");
        randomize_params(ps, rng);
        for (auto& [name, t] : ps.buffers)
            for (int64_t i = 0; i < t->numel(); ++i)
                (*t)[i] = name.ends_with(".rv") ? rng.uniform(0.5, 2.0) : rng.uniform(-0.5, 0.5);

        int64_t B = rng.uniform_int(1, 2);
        int64_t H = rng.uniform(0, 1) < 0.5 ? 2 : 4;
        Tensor<double> x = random_tensor<double>(Shape{B, c.in_channels, H, H}, rng);

        Tape<double> t;
        Var y = blk.forward(t, t.constant(x), BnMode::Eval).y;
        Tensor<double> want = splat_naive(c, blk, x);
        const Tensor<double>& got = t.value(y);
        if (got.shape() != want.shape()) return fail("shape mismatch at rep " + std::to_string(rep));
        for (int64_t i = 0; i < got.numel(); ++i)
            worst = std::max(worst, std::abs(got[i] - want[i]));
        if (worst > kSplatOracleTol)
            return fail("worst deviation " + std::to_string(worst) + " at rep " +
                        std::to_string(rep));
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst deviation %.3g over 100 cases", worst);
    return pass(buf);
}

Outcome criterion_gate_contract() {
    Rng rng(1004);
    for (int rep = 0; rep < 20; ++rep) {
        int64_t fx = rng.uniform_int(1, 8), fg = rng.uniform_int(1, 8);
        int64_t B = rng.uniform_int(1, 2), H = 2 * rng.uniform_int(2, 5);
        AttentionGate<double> gate(fx, fg);
        gate.init(rng);
        ParamSet<double> ps;
        gate.register_into(ps, "g");
        randomize_params(ps, rng);

        Tensor<double> x = random_tensor<double>(Shape{B, fx, H, H}, rng);
        Tensor<double> g = random_tensor<double>(Shape{B, fg, H / 2, H / 2}, rng);
        Tape<double> t;
        auto out = gate.forward(t, t.constant(x), t.constant(g));
        const Tensor<double>& xh = t.value(out.x_hat);
        const Tensor<double>& al = t.value(out.alpha);
        if (xh.shape() != x.shape()) return fail("x_hat shape differs from x");
        if (al.shape() != Shape{B, 1, H, H}) return fail("alpha is not a one-channel map");
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < fx; ++c)
                for (int64_t i = 0; i < H * H; ++i) {
                    double want = al[(b * 1) * H * H + i] * x[(b * fx + c) * H * H + i];
                    if (xh[(b * fx + c) * H * H + i] != want)
                        return fail("x_hat is not exactly alpha*x at rep " + std::to_string(rep));
                }
    }

    // Saturation: a large psi bias drives alpha to either limit.
    AttentionGate<double> gate(6, 10);
    Rng rng2(1005);
    gate.init(rng2);
    Tensor<double> x = random_tensor<double>(Shape{1, 6, 8, 8}, rng2);
    Tensor<double> g = random_tensor<double>(Shape{1, 10, 4, 4}, rng2);
    for (double sign : {-1.0, 1.0}) {
        for (int64_t i = 0; i < gate.psi_b.numel(); ++i) gate.psi_b[i] = sign * 40.0;
        Tape<double> t;
        auto out = gate.forward(t, t.constant(x), t.constant(g));
        for (double v : t.value(out.alpha).vec()) {
            double limit_gap = sign < 0 ? v : 1.0 - v;
            if (limit_gap > kGateSaturationTol)
                return fail("alpha saturates only to " + std::to_string(v));
        }
    }
    return pass("shape, exact gating, and both saturation limits");
}

Outcome criterion_tversky_dice() {
    Rng rng(1006);
    // Tversky at alpha = beta = 0.5 is soft Dice; epsilon shrunk so smoothing
    // does not mask a real difference.
    TverskyParams half{0.5, 0.5, 1e-12};
    double worst = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        int64_t n = rng.uniform_int(4, 64);
        Tensor<double> p({1, 1, 1, n}), g({1, 1, 1, n});
        for (int64_t i = 0; i < n; ++i) {
            p[i] = rng.uniform(0.0, 1.0);
            g[i] = rng.uniform(0.0, 1.0) < 0.5 ? 0.0 : 1.0;
        }
        double t = tversky_scalar(p, g, half);
        double inter = 0, psum = 0, gsum = 0;
        for (int64_t i = 0; i < n; ++i) {
            inter += p[i] * g[i];
            psum += p[i];
            gsum += g[i];
        }
        double dice = (2.0 * inter + 2.0 * half.eps) / (psum + gsum + 2.0 * half.eps);
        worst = std::max(worst, std::abs(t - dice));
    }
    if (worst > kDiceIdentityTol)
        return fail("Tversky(0.5,0.5) deviates from soft Dice by " + std::to_string(worst));

    for (int rep = 0; rep < 200; ++rep) {
        Tensor<double> p({1, 1, 6, 6}), g({1, 1, 6, 6});
        for (int64_t i = 0; i < p.numel(); ++i) {
            p[i] = rng.uniform(0.0, 1.0) < 0.5 ? 0.0 : 1.0;
            g[i] = rng.uniform(0.0, 1.0) < 0.5 ? 0.0 : 1.0;
        }
        ImageMetrics m = image_metrics(confusion(p, g, 0.5));
        double derived = 2.0 * m.iou / (1.0 + m.iou);
        if (std::abs(m.dice - derived) > 1e-12 * std::max(1.0, std::abs(m.dice)))
            return fail("dice " + std::to_string(m.dice) + " vs 2iou/(1+iou) " +
                        std::to_string(derived));
    }

    ImageMetrics hand = image_metrics({3, 3, 1, 0});
    if (hand.dice != 0.6 || hand.iou != 3.0 / 7.0 || hand.recall != 0.75 || hand.precision != 0.5)
        return fail("hand case gave (" + std::to_string(hand.dice) + ", " +
                    std::to_string(hand.iou) + ", " + std::to_string(hand.recall) + ", " +
                    std::to_string(hand.precision) + ")");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst soft-Dice gap %.3g", worst);
    return pass(buf);
}

Outcome criterion_curve_oracle() {
    Rng rng(1007);
    double worst = 0;
    for (int rep = 0; rep < 50; ++rep) {
        int64_t n = rng.uniform_int(10, 1000);
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<uint8_t> labels(static_cast<size_t>(n));
        bool tie_heavy = rep % 2 == 0;
        int64_t pos = 0;
        for (auto& s : scores)
            s = tie_heavy ? std::round(rng.uniform(0.0, 1.0) * 8.0) / 8.0 : rng.uniform(0.0, 1.0);
        for (auto& l : labels) {
            l = rng.uniform(0.0, 1.0) < 0.4 ? 1 : 0;
            pos += l;
        }
        if (pos == 0) labels[0] = 1;
        if (pos == n) labels[0] = 0;

        CurveData c = curves(scores, labels);
        double wins = 0, pairs = 0;
        for (size_t i = 0; i < scores.size(); ++i) {
            if (!labels[i]) continue;
            for (size_t j = 0; j < scores.size(); ++j) {
                if (labels[j]) continue;
                pairs += 1.0;
                if (scores[i] > scores[j])
                    wins += 1.0;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
        }
        worst = std::max(worst, std::abs(c.auc - wins / pairs));
        if (worst > kAucOracleTol)
            return fail("AUC deviates from pairwise ranking by " + std::to_string(worst));
    }

    CurveData perfect =
        curves(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<uint8_t>{1, 1, 0, 0});
    if (perfect.auc != 1.0 || perfect.map != 1.0)
        return fail("perfect separation gave AUC " + std::to_string(perfect.auc) + ", MAP " +
                    std::to_string(perfect.map));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst ranking gap %.3g over 50 cases", worst);
    return pass(buf);
}

Outcome criterion_augmentation() {
    const std::vector<std::string> want_tags{"rot90",    "rot180",  "rot270", "hflip",
                                             "vflip",    "scale090", "scale110", "scale115",
                                             "scale120", "blur",    "brighten", "darken"};
    const std::vector<double> scale_of{0.90, 1.10, 1.15, 1.20};

    Rng rng(1008);
    int64_t side = 32;
    SamplePair s;
    s.id = "probe";
    s.image = Tensor<float>({3, side, side});
    s.mask = Tensor<float>({side, side});
    for (int64_t i = 0; i < side * side; ++i) s.mask[i] = rng.uniform(0.0, 1.0) < 0.3 ? 1.0f : 0.0f;
    // Channel 0 mirrors the mask so exact lockstep under rotations and flips
    // is observable; the other channels are arbitrary.
    for (int64_t i = 0; i < side * side; ++i) {
        s.image[i] = s.mask[i];
        s.image[side * side + i] = static_cast<float>(rng.uniform(0.0, 1.0));
        s.image[2 * side * side + i] = static_cast<float>(rng.uniform(0.0, 1.0));
    }

    auto vars = augment_twelve(s);
    if (vars.size() != 12) return fail("produced " + std::to_string(vars.size()) + " variants");
    for (size_t i = 0; i < 12; ++i) {
        std::string want_id = s.id + "." + want_tags[i];
        if (vars[i].id != want_id)
            return fail("variant " + std::to_string(i) + " is " + vars[i].id + ", expected " +
                        want_id);
        for (float v : vars[i].mask.vec())
            if (v != 0.0f && v != 1.0f) return fail(vars[i].id + " mask is not binary");
    }

    // Rotations and flips: the mask moves in exact lockstep with channel 0.
    for (size_t i = 0; i < 5; ++i) {
        const auto& v = vars[i];
        for (int64_t j = 0; j < side * side; ++j)
            if (v.image[j] != v.mask[j])
                return fail(v.id + " mask is not the transformed channel 0");
    }

    // Rescales: the mask matches an independent nearest-neighbor oracle.
    for (size_t i = 5; i < 9; ++i) {
        Tensor<float> want = rescale_mask_oracle(s.mask, scale_of[i - 5]);
        for (int64_t j = 0; j < side * side; ++j)
            if (vars[i].mask[j] != want[j]) return fail(vars[i].id + " mask deviates from oracle");
    }

    // Photometric variants leave the mask untouched and change the image.
    for (size_t i = 9; i < 12; ++i) {
        const auto& v = vars[i];
        for (int64_t j = 0; j < side * side; ++j)
            if (v.mask[j] != s.mask[j]) return fail(v.id + " moved the mask");
        bool changed = false;
        for (int64_t j = 0; j < v.image.numel() && !changed; ++j)
            changed = v.image[j] != s.image[j];
        if (!changed) return fail(v.id + " left the image unchanged");
    }
    return pass("12 tagged variants, exact mask consistency");
}

Outcome criterion_protocol() {
    auto folds = make_folds(612, 5, 7);
    std::multiset<size_t> sizes;
    std::set<int64_t> seen;
    for (const auto& f : folds) {
        sizes.insert(f.size());
        seen.insert(f.begin(), f.end());
    }
    if (sizes != std::multiset<size_t>{123, 123, 122, 122, 122})
        return fail("fold sizes are not {123,123,122,122,122}");
    if (seen.size() != 612 || *seen.begin() != 0 || *seen.rbegin() != 611)
        return fail("folds are not a disjoint cover of 0..611");
    if (make_folds(612, 5, 7) != folds) return fail("folds are not seed-stable");
    if (make_folds(612, 5, 8) == folds) return fail("folds ignore the seed");

    auto manufacture = [](const std::string& prefix, int64_t n) {
        NamedSource src;
        src.name = prefix;
        src.manifest.root = prefix;
        for (int64_t i = 0; i < n; ++i) {
            ManifestEntry e;
            e.id = prefix + "_" + std::to_string(i);
            e.image_path = prefix + "/images/" + e.id + ".ppm";
            e.mask_path = prefix + "/masks/" + e.id + ".pgm";
            src.manifest.entries.push_back(std::move(e));
        }
        return src;
    };
    std::vector<NamedSource> sources{manufacture("alpha", 1000), manufacture("beta", 612)};

    ScenarioSpec spec;
    spec.id = 4;
    spec.train_sources = {"alpha"};
    spec.test_sources = {"beta"};
    spec.seed = 5;
    ScenarioSplit split = scenario_split(spec, sources);
    if (split.train.size() != 1290 || split.validation.size() != 161 || split.test.size() != 161)
        return fail("scenario 4 sizes are " + std::to_string(split.train.size()) + "/" +
                    std::to_string(split.validation.size()) + "/" +
                    std::to_string(split.test.size()));

    std::set<std::string> all;
    auto collect = [&](const std::vector<SampleRef>& refs) {
        for (const auto& r : refs) all.insert(r.source + ":" + r.entry.id);
    };
    collect(split.train);
    collect(split.validation);
    collect(split.test);
    if (all.size() != 1612) return fail("scenario 4 splits overlap or drop items");

    ScenarioSplit again = scenario_split(spec, sources);
    auto ids = [](const std::vector<SampleRef>& refs) {
        std::vector<std::string> v;
        for (const auto& r : refs) v.push_back(r.source + ":" + r.entry.id);
        return v;
    };
    if (ids(again.train) != ids(split.train) || ids(again.test) != ids(split.test))
        return fail("scenario 4 split is not seed-stable");
    spec.seed = 6;
    if (ids(scenario_split(spec, sources).train) == ids(split.train))
        return fail("scenario 4 split ignores the seed");
    return pass("612 -> {123,123,122,122,122}; 1612 -> 1290/161/161");
}

Outcome criterion_smoke() {
    auto t0 = std::chrono::steady_clock::now();

    // Byte round trip so training sees the same quantized pixels a dataset
    // on disk would provide.
    SyntheticConfig sc;
    sc.count = 200;
    sc.side = 64;
    sc.seed = 1;
    fs::path data = work_dir() / "smoke_data";
    save_dataset(synth_generate(sc), data.string());
    std::vector<SamplePair> all = load_dataset(scan_dataset(data.string()));

    TrainConfig cfg;
    cfg.side = 64;
    cfg.base_width = 8;
    cfg.max_epochs = 15;  // two phases within the 30-epoch budget
    cfg.patience = 10;
    cfg.seed = 0;
    cfg.output_dir = (work_dir() / "smoke_run").string();

    Rng rng(cfg.seed);
    std::vector<int64_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<SamplePair> val, train;
    for (size_t i = 0; i < order.size(); ++i)
        (i < 20 ? val : train).push_back(all[static_cast<size_t>(order[i])]);

    CoupledNet<float> net(cfg.net_config());
    net.init(cfg.seed);
    TrainResult res = train_two_phase(cfg, train, val, net);

    double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "best val mDice %.3f in %zu epochs, %.0fs",
                  res.best_val_mdice, res.epochs.size(), secs);
    if (res.nan_abort) return fail(std::string(buf) + " (diverged)");
    if (res.epochs.size() > static_cast<size_t>(kSmokeEpochBudget))
        return fail(std::string(buf) + " (over epoch budget)");
    if (res.best_val_mdice < kSmokeDice) return fail(buf);
    if (secs >= kSmokeWallSec) return fail(std::string(buf) + " (over wall budget)");

    // Smoothed monotonicity: 5-epoch moving averages of the phase-1 training
    // loss never increase.
    std::vector<double> p1;
    for (const auto& r : res.epochs)
        if (r.phase == 1) p1.push_back(r.train_loss);
    for (size_t i = 0; i + 5 < p1.size(); ++i) {
        double a = 0, b = 0;
        for (size_t j = 0; j < 5; ++j) {
            a += p1[i + j];
            b += p1[i + 1 + j];
        }
        if (b > a + 1e-9)
            return fail(std::string(buf) + " (phase-1 smoothed loss rose at epoch " +
                        std::to_string(i + 2) + ")");
    }

    // Ablation: without the second network the two outputs are the same map.
    {
        CoupledNetConfig single = CoupledNetConfig::from_base_width(32, 4, 2, 2);
        single.second_unet = false;
        CoupledNet<float> n1(single);
        n1.init(3);
        Rng r2(77);
        Tensor<float> img = random_tensor<float>(Shape{1, 3, 32, 32}, r2, 0.0, 1.0);
        Tape<float> t;
        auto out = n1.forward(t, t.constant(img), BnMode::Eval);
        const Tensor<float>& p1v = t.value(out.p1);
        const Tensor<float>& p2v = t.value(out.p2);
        for (int64_t i = 0; i < p1v.numel(); ++i)
            if (p1v[i] != p2v[i]) return fail("single-network ablation: p2 differs from p1");
    }

    // Ablation: disabling the gates changes the output map.
    {
        CoupledNetConfig on = CoupledNetConfig::from_base_width(32, 4, 2, 2);
        CoupledNetConfig off = on;
        off.attention_gates = false;
        CoupledNet<float> n_on(on), n_off(off);
        n_on.init(3);
        n_off.init(3);
        Rng r2(78);
        Tensor<float> img = random_tensor<float>(Shape{1, 3, 32, 32}, r2, 0.0, 1.0);
        Tape<float> t1, t2;
        const Tensor<float>& a = t1.value(n_on.forward(t1, t1.constant(img), BnMode::Eval).p2);
        const Tensor<float>& b = t2.value(n_off.forward(t2, t2.constant(img), BnMode::Eval).p2);
        double diff = 0;
        for (int64_t i = 0; i < a.numel(); ++i) diff = std::max(diff, std::abs(double(a[i] - b[i])));
        if (diff <= 1e-9) return fail("gate ablation left the output unchanged");
    }
    return pass(buf);
}

Outcome criterion_reproducibility() {
    SyntheticConfig sc;
    sc.count = 24;
    sc.side = 32;
    sc.seed = 6;
    std::vector<SamplePair> all = synth_generate(sc);
    Rng rng(1);
    std::vector<int64_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<SamplePair> val, train;
    for (size_t i = 0; i < order.size(); ++i)
        (i < 4 ? val : train).push_back(all[static_cast<size_t>(order[i])]);

    TrainConfig cfg;
    cfg.side = 32;
    cfg.base_width = 4;
    cfg.max_epochs = 3;
    cfg.patience = 10;
    cfg.seed = 11;

    auto run = [&](const std::string& dir) {
        TrainConfig c = cfg;
        c.output_dir = (work_dir() / dir).string();
        CoupledNet<float> net(c.net_config());
        net.init(c.seed);
        TrainResult r = train_two_phase(c, train, val, net);
        return std::make_pair(std::move(r), std::move(net));
    };
    auto [r1, net1] = run("repro_a");
    auto [r2, net2] = run("repro_b");

    if (r1.epochs.size() != r2.epochs.size()) return fail("runs differ in epoch count");
    for (size_t i = 0; i < r1.epochs.size(); ++i) {
        const auto& a = r1.epochs[i];
        const auto& b = r2.epochs[i];
        if (a.phase != b.phase || a.epoch != b.epoch || a.train_loss != b.train_loss ||
            a.val_mdice != b.val_mdice || a.val_miou != b.val_miou)
            return fail("run records diverge at index " + std::to_string(i));
    }

    EvalResult before = evaluate_samples(net1, val, cfg.threshold, cfg.batch_size);
    Checkpoint ck = load_checkpoint(r1.checkpoint_path);
    CoupledNet<float> fresh(cfg.net_config());
    fresh.init(999);  // deliberately different start, wiped by the restore
    ParamSet<float> ps = fresh.param_set();
    restore_params(ps, ck);
    EvalResult after = evaluate_samples(fresh, val, cfg.threshold, cfg.batch_size);
    if (before.report.to_json() != after.report.to_json())
        return fail("checkpoint round trip changed the metric report");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu identical records, round-trip report equal",
                  r1.epochs.size());
    return pass(buf);
}

}  // namespace

int main() {
    struct Criterion {
        const char* label;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"gradient suite (ops, blocks, gate, decoder, loss, full net) < 1e-4",
         criterion_gradients},
        {"split-attention weights normalize per split", criterion_attention_normalization},
        {"split-attention block matches the naive oracle <= 1e-9", criterion_splat_oracle},
        {"attention-gate contract (shape, exact gating, saturation)", criterion_gate_contract},
        {"Tversky/Dice identities and hand case", criterion_tversky_dice},
        {"AUC pairwise-ranking oracle and perfect separation", criterion_curve_oracle},
        {"augmentation recipe (12 variants, exact masks)", criterion_augmentation},
        {"fold and scenario machinery (612 and 1612 items)", criterion_protocol},
        {"end-to-end smoke: val mDice >= 0.85 within 30 epochs", criterion_smoke},
        {"reproducibility and checkpoint round trip", criterion_reproducibility},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].run();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        double secs = seconds_since(t0);
        std::printf("%s %2zu. %s%s%s [%.1fs]\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].label,
                    o.detail.empty() ? "" : ": ", o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.ok) ++failures;
    }
    if (failures) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
