#include <cmath>
#include <cstring>
#include <vector>

#include "core/gradcheck.hpp"
#include "core/rng.hpp"
#include "doctest.h"
#include "model/splat.hpp"

using namespace agcu;

namespace {

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

// The whole block in eval mode, written as plain loops over the same tensors
// the block registers.
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
                for (size_t j = 0; j < logits.size(); ++j) a[j] = 1.0 / (1.0 + std::exp(-logits[j]));
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

}  // namespace

TEST_CASE("splat config validation") {
    SplatConfig c;
    c.in_channels = 4;
    c.out_channels = 6;
    c.cardinality = 4;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.cardinality = 2;
    c.stride = 3;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.stride = 2;
    CHECK_NOTHROW(c.validate());
    CHECK(c.hidden() == 8);
    c.out_channels = 64;
    CHECK(c.hidden() == 16);
}

TEST_CASE("splat block is the identity at initialization") {
    SplatConfig c;
    c.in_channels = 6;
    c.out_channels = 6;
    c.cardinality = 2;
    c.radix = 3;
    SplatBlock<float> blk(c);
    Rng rng(11);
    blk.init(rng);
    CHECK_FALSE(blk.has_shortcut);

    Tensor<float> x = random_tensor<float>(Shape{2, 6, 4, 4}, rng);
    for (auto mode : {BnMode::Train, BnMode::Eval}) {
        Tape<float> t;
        Var y = blk.forward(t, t.constant(x), mode).y;
        const Tensor<float>& yv = t.value(y);
        REQUIRE(yv.shape() == x.shape());
        CHECK(std::memcmp(yv.data(), x.data(), sizeof(float) * static_cast<size_t>(x.numel())) == 0);
    }
}

TEST_CASE("attention weights sum to one across the radix") {
    Rng rng(101);
    int configs = 0;
    while (configs < 1000) {
        SplatConfig c;
        c.cardinality = static_cast<int>(rng.uniform_int(1, 4));
        c.radix = static_cast<int>(rng.uniform_int(2, 4));
        int64_t ck = rng.uniform_int(1, 4);
        c.out_channels = c.cardinality * ck;
        c.in_channels = rng.uniform_int(1, 6);
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
        REQUIRE(out.attn.size() == static_cast<size_t>(c.cardinality));
        for (Var a : out.attn) {
            const Tensor<float>& av = t.value(a);
            REQUIRE(av.shape() == Shape{B, c.radix, ck});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t ch = 0; ch < ck; ++ch) {
                    double sum = 0;
                    for (int64_t r = 0; r < c.radix; ++r) sum += av[(b * c.radix + r) * ck + ch];
                    CHECK(std::abs(sum - 1.0) <= 1e-6);
                }
        }
        ++configs;
    }
}

TEST_CASE("radix one uses an independent sigmoid in (0,1)") {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        SplatConfig c;
        c.cardinality = static_cast<int>(rng.uniform_int(1, 3));
        c.radix = 1;
        c.out_channels = c.cardinality * rng.uniform_int(1, 4);
        c.in_channels = rng.uniform_int(1, 4);
        SplatBlock<float> blk(c);
        blk.init(rng);
        ParamSet<float> ps;
        blk.register_into(ps, "b");
        // Moderate weights keep the logits away from float sigmoid saturation,
        // where the open-interval property cannot be observed.
        randomize_params(ps, rng, -0.5, 0.5);

        Tensor<float> x = random_tensor<float>(Shape{1, c.in_channels, 4, 4}, rng);
        Tape<float> t;
        auto out = blk.forward(t, t.constant(x), BnMode::Train);
        for (Var a : out.attn)
            for (float v : t.value(a).vec()) {
                CHECK(v > 0.0f);
                CHECK(v < 1.0f);
            }
    }
}

TEST_CASE("zeroed attention mlp yields uniform weights") {
    SplatConfig c;
    c.in_channels = 4;
    c.out_channels = 6;
    c.cardinality = 2;
    c.radix = 3;
    SplatBlock<float> blk(c);
    Rng rng(23);
    blk.init(rng);
    for (int k = 0; k < c.cardinality; ++k) {
        blk.fc2_w[static_cast<size_t>(k)] = Tensor<float>(blk.fc2_w[static_cast<size_t>(k)].shape());
        blk.fc2_b[static_cast<size_t>(k)] = Tensor<float>(blk.fc2_b[static_cast<size_t>(k)].shape());
    }
    Tensor<float> x = random_tensor<float>(Shape{1, 4, 4, 4}, rng);
    Tape<float> t;
    auto out = blk.forward(t, t.constant(x), BnMode::Train);
    for (Var a : out.attn)
        for (float v : t.value(a).vec()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("splat block matches a naive loop oracle in eval mode") {
    Rng rng(4242);
    for (int rep = 0; rep < 100; ++rep) {
        SplatConfig c;
        c.cardinality = static_cast<int>(rng.uniform_int(1, 4));
        c.radix = static_cast<int>(rng.uniform_int(1, 4));
        int64_t ck = rng.uniform_int(1, 4);
        c.out_channels = c.cardinality * ck;
        c.in_channels = rng.uniform_int(1, 6);
        c.stride = rng.uniform(0, 1) < 0.5 ? 1 : 2;
        REQUIRE(c.out_channels <= 16);

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
        REQUIRE(got.shape() == want.shape());
        double worst = 0;
        for (int64_t i = 0; i < got.numel(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("splat block gradients agree with finite differences") {
    SplatConfig c;
    c.in_channels = 3;
    c.out_channels = 4;
    c.cardinality = 2;
    c.radix = 2;
    c.stride = 2;
    SplatBlock<double> blk(c);
    Rng rng(7);
    blk.init(rng);
    ParamSet<double> ps;
    blk.register_into(ps, "b");
    randomize_params(ps, rng);

    Tensor<double> x = random_tensor<double>(Shape{2, 3, 4, 4}, rng);
    Tensor<double> lw = random_tensor<double>(Shape{2, 4, 2, 2}, rng);

    std::vector<Tensor<double>*> probes{&x};
    for (auto& [name, t] : ps.params) probes.push_back(t);
    double err = check_gradients(probes, [&](Tape<double>& t) {
        Var y = blk.forward(t, t.parameter(x), BnMode::Train).y;
        return sum_all(t, mul(t, y, t.constant(lw)));
    });
    CHECK(err < 1e-4);
}

TEST_CASE("encoder produces the five stride pyramid") {
    EncoderConfig ec = EncoderConfig::from_base_width(8, 2, 2);
    CHECK(ec.widths == std::array<int64_t, 5>{8, 16, 32, 64, 64});
    SplatEncoder<float> enc(ec);
    Rng rng(5);
    enc.init(rng);

    Tensor<float> img = random_tensor<float>(Shape{2, 3, 64, 64}, rng);
    Tape<float> t;
    auto out = enc.forward(t, t.constant(img), BnMode::Train);
    CHECK(t.value(out.stem).shape() == Shape{2, 8, 64, 64});
    CHECK(t.value(out.pyramid[0]).shape() == Shape{2, 8, 32, 32});
    CHECK(t.value(out.pyramid[1]).shape() == Shape{2, 16, 16, 16});
    CHECK(t.value(out.pyramid[2]).shape() == Shape{2, 32, 8, 8});
    CHECK(t.value(out.pyramid[3]).shape() == Shape{2, 64, 4, 4});
    CHECK(t.value(out.pyramid[4]).shape() == Shape{2, 64, 2, 2});
}

TEST_CASE("encoder handles a large input side") {
    EncoderConfig ec = EncoderConfig::from_base_width(4, 2, 2);
    SplatEncoder<float> enc(ec);
    Rng rng(6);
    enc.init(rng);

    Tensor<float> img = random_tensor<float>(Shape{1, 3, 512, 512}, rng);
    Tape<float> t;
    auto out = enc.forward(t, t.constant(img), BnMode::Eval);
    CHECK(t.value(out.pyramid[4]).shape() == Shape{1, 32, 16, 16});
}

TEST_CASE("encoder rejects malformed images") {
    SplatEncoder<float> enc(EncoderConfig::from_base_width(4, 2, 2));
    Rng rng(8);
    enc.init(rng);
    Tape<float> t;
    Tensor<float> bad_ch = random_tensor<float>(Shape{1, 1, 32, 32}, rng);
    CHECK_THROWS_AS(enc.forward(t, t.constant(bad_ch), BnMode::Eval), std::invalid_argument);
    Tensor<float> bad_side = random_tensor<float>(Shape{1, 3, 48, 48}, rng);
    CHECK_THROWS_AS(enc.forward(t, t.constant(bad_side), BnMode::Eval), std::invalid_argument);
}

TEST_CASE("encoder hook sees each stage input") {
    EncoderConfig ec = EncoderConfig::from_base_width(4, 2, 2);
    SplatEncoder<float> enc(ec);
    Rng rng(9);
    enc.init(rng);

    std::vector<std::pair<int, Shape>> seen;
    SplatEncoder<float>::Hook hook = [&](Tape<float>& t, int site, Var x) {
        seen.emplace_back(site, t.value(x).shape());
        return x;
    };
    Tensor<float> img = random_tensor<float>(Shape{1, 3, 64, 64}, rng);
    Tape<float> t;
    enc.forward(t, t.constant(img), BnMode::Eval, hook);

    REQUIRE(seen.size() == 5);
    CHECK(seen[0] == std::pair<int, Shape>{0, Shape{1, 4, 64, 64}});
    CHECK(seen[1] == std::pair<int, Shape>{1, Shape{1, 4, 32, 32}});
    CHECK(seen[2] == std::pair<int, Shape>{2, Shape{1, 8, 16, 16}});
    CHECK(seen[3] == std::pair<int, Shape>{3, Shape{1, 16, 8, 8}});
    CHECK(seen[4] == std::pair<int, Shape>{4, Shape{1, 32, 4, 4}});
}

TEST_CASE("splat registration covers every tensor once") {
    SplatConfig c;
    c.in_channels = 3;
    c.out_channels = 8;
    c.cardinality = 2;
    c.radix = 2;
    c.stride = 2;
    SplatBlock<float> blk(c);
    ParamSet<float> ps;
    blk.register_into(ps, "b");

    int64_t ck = 4, h = c.hidden();
    int64_t want = c.groups() * (ck * 3 * 9 + 2 * ck)                    // group convs + bn
                   + c.cardinality * (h * ck + h + 2 * ck * h + 2 * ck)  // attention mlps
                   + 8 * 3 + 8;                                          // shortcut
    CHECK(ps.param_count() == want);
    CHECK(ps.find_param("b.g0.w") != nullptr);
    CHECK(ps.find_param("b.a1.fc2.b") != nullptr);
    CHECK(ps.find_param("b.short.w") != nullptr);
    CHECK(ps.buffers.size() == static_cast<size_t>(2 * c.groups()));
}
