#include "model/splat.hpp"

#include <cmath>
#include <stdexcept>

namespace agcu {

namespace {

template <typename T>
void kaiming_fill(Tensor<T>& w, int64_t fan_in, Rng& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * std);
}

}  // namespace

void SplatConfig::validate() const {
    if (in_channels < 1 || out_channels < 1)
        throw std::invalid_argument("splat: channel counts must be positive");
    if (cardinality < 1 || radix < 1)
        throw std::invalid_argument("splat: cardinality and radix must be positive");
    if (out_channels % cardinality != 0)
        throw std::invalid_argument("splat: out channels " + std::to_string(out_channels) +
                                    " not divisible by cardinality " + std::to_string(cardinality));
    if (stride != 1 && stride != 2) throw std::invalid_argument("splat: stride must be 1 or 2");
}

template <typename T>
SplatBlock<T>::SplatBlock(SplatConfig c) : cfg(c) {
    cfg.validate();
    int G = cfg.groups();
    int64_t ck = cfg.out_channels / cfg.cardinality;
    int64_t h = cfg.hidden();
    for (int g = 0; g < G; ++g) {
        conv_w.emplace_back(Shape{ck, cfg.in_channels, 3, 3});
        bn_gamma.push_back(Tensor<T>::full(Shape{ck}, T(1)));
        bn_beta.emplace_back(Shape{ck});
        bn_state.emplace_back(ck);
    }
    for (int k = 0; k < cfg.cardinality; ++k) {
        fc1_w.emplace_back(Shape{h, ck});
        fc1_b.emplace_back(Shape{h});
        fc2_w.emplace_back(Shape{static_cast<int64_t>(cfg.radix) * ck, h});
        fc2_b.emplace_back(Shape{static_cast<int64_t>(cfg.radix) * ck});
    }
    has_shortcut = cfg.stride != 1 || cfg.in_channels != cfg.out_channels;
    if (has_shortcut) {
        short_w = Tensor<T>(Shape{cfg.out_channels, cfg.in_channels, 1, 1});
        short_b = Tensor<T>(Shape{cfg.out_channels});
    }
}

template <typename T>
void SplatBlock<T>::init(Rng& rng) {
    for (auto& w : conv_w) kaiming_fill(w, cfg.in_channels * 9, rng);
    // Residual branch normalization scale starts at zero so the block is the
    // identity (plus shortcut) at initialization.
    for (auto& g : bn_gamma)
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = T(0);
    int64_t ck = cfg.out_channels / cfg.cardinality;
    for (auto& w : fc1_w) kaiming_fill(w, ck, rng);
    for (auto& w : fc2_w) kaiming_fill(w, cfg.hidden(), rng);
    if (has_shortcut) kaiming_fill(short_w, cfg.in_channels, rng);
}

template <typename T>
void SplatBlock<T>::register_into(ParamSet<T>& ps, const std::string& prefix) {
    for (size_t g = 0; g < conv_w.size(); ++g) {
        std::string gp = prefix + ".g" + std::to_string(g);
        ps.add_param(gp + ".w", &conv_w[g]);
        ps.add_param(gp + ".bn.g", &bn_gamma[g]);
        ps.add_param(gp + ".bn.b", &bn_beta[g]);
        ps.add_buffer(gp + ".bn.rm", &bn_state[g].mean);
        ps.add_buffer(gp + ".bn.rv", &bn_state[g].var);
    }
    for (size_t k = 0; k < fc1_w.size(); ++k) {
        std::string kp = prefix + ".a" + std::to_string(k);
        ps.add_param(kp + ".fc1.w", &fc1_w[k]);
        ps.add_param(kp + ".fc1.b", &fc1_b[k]);
        ps.add_param(kp + ".fc2.w", &fc2_w[k]);
        ps.add_param(kp + ".fc2.b", &fc2_b[k]);
    }
    if (has_shortcut) {
        ps.add_param(prefix + ".short.w", &short_w);
        ps.add_param(prefix + ".short.b", &short_b);
    }
}

template <typename T>
typename SplatBlock<T>::Out SplatBlock<T>::forward(Tape<T>& t, Var x, BnMode mode) {
    const Tensor<T>& xv = t.value(x);
    if (xv.rank() != 4 || xv.dim(1) != cfg.in_channels)
        throw std::invalid_argument("splat: input " + shape_str(xv.shape()) + " does not carry " +
                                    std::to_string(cfg.in_channels) + " channels");
    int64_t B = xv.dim(0);
    int K = cfg.cardinality, R = cfg.radix, G = cfg.groups();
    int64_t ck = cfg.out_channels / K;

    std::vector<Var> u(static_cast<size_t>(G));
    for (int g = 0; g < G; ++g) {
        Var c = conv2d(t, x, t.parameter(conv_w[static_cast<size_t>(g)]), Var{}, cfg.stride, 1);
        u[static_cast<size_t>(g)] =
            batch_norm(t, c, t.parameter(bn_gamma[static_cast<size_t>(g)]),
                       t.parameter(bn_beta[static_cast<size_t>(g)]), bn_state[static_cast<size_t>(g)],
                       mode, static_cast<T>(kBnMomentum), static_cast<T>(kBnEps));
    }

    Out out;
    std::vector<Var> fused;
    for (int k = 0; k < K; ++k) {
        Var uhat = u[static_cast<size_t>(k * R)];
        for (int r = 1; r < R; ++r) uhat = add(t, uhat, u[static_cast<size_t>(k * R + r)]);
        Var s = global_avg_pool(t, uhat);
        Var h = relu(t, fully_connected(t, s, t.parameter(fc1_w[static_cast<size_t>(k)]),
                                        t.parameter(fc1_b[static_cast<size_t>(k)])));
        Var logits = fully_connected(t, h, t.parameter(fc2_w[static_cast<size_t>(k)]),
                                     t.parameter(fc2_b[static_cast<size_t>(k)]));
        Var stacked = reshape(t, logits, Shape{B, R, ck});
        Var a = R > 1 ? softmax_axis(t, stacked, 1) : sigmoid(t, stacked);
        out.attn.push_back(a);

        Var vk{};
        for (int r = 0; r < R; ++r) {
            Var ar = reshape(t, slice_axis(t, a, 1, r, 1), Shape{B, ck});
            Var term = mul_channel_scale(t, u[static_cast<size_t>(k * R + r)], ar);
            vk = r == 0 ? term : add(t, vk, term);
        }
        fused.push_back(vk);
    }
    Var v = concat_channels(t, fused);

    Var shortcut = x;
    if (has_shortcut)
        shortcut = conv2d(t, x, t.parameter(short_w), t.parameter(short_b), cfg.stride, 0);
    out.y = add(t, shortcut, v);
    return out;
}

EncoderConfig EncoderConfig::from_base_width(int64_t w, int cardinality, int radix) {
    EncoderConfig c;
    c.widths = {w, 2 * w, 4 * w, 8 * w, 8 * w};
    c.blocks = {1, 1, 1, 1, 1};
    c.cardinality = cardinality;
    c.radix = radix;
    c.stem_width = w;
    return c;
}

void EncoderConfig::validate() const {
    for (int64_t w : widths)
        if (w < 1 || w % cardinality != 0)
            throw std::invalid_argument("encoder: stage widths must be positive multiples of the cardinality");
    for (int b : blocks)
        if (b < 1) throw std::invalid_argument("encoder: every stage needs at least one block");
    if (stem_width < 1) throw std::invalid_argument("encoder: stem width must be positive");
}

template <typename T>
SplatEncoder<T>::SplatEncoder(EncoderConfig c)
    : cfg(c),
      stem_w(Shape{c.stem_width, 3, 3, 3}),
      stem_gamma(Tensor<T>::full(Shape{c.stem_width}, T(1))),
      stem_beta(Shape{c.stem_width}),
      stem_bn(c.stem_width) {
    cfg.validate();
    for (int s = 0; s < 5; ++s) {
        std::vector<SplatBlock<T>> stage;
        int64_t in = s == 0 ? cfg.stem_width : cfg.widths[static_cast<size_t>(s - 1)];
        for (int b = 0; b < cfg.blocks[static_cast<size_t>(s)]; ++b) {
            SplatConfig sc;
            sc.in_channels = b == 0 ? in : cfg.widths[static_cast<size_t>(s)];
            sc.out_channels = cfg.widths[static_cast<size_t>(s)];
            sc.cardinality = cfg.cardinality;
            sc.radix = cfg.radix;
            sc.stride = b == 0 ? 2 : 1;
            stage.emplace_back(sc);
        }
        stages.push_back(std::move(stage));
    }
}

template <typename T>
void SplatEncoder<T>::init(Rng& rng) {
    kaiming_fill(stem_w, 3 * 9, rng);
    for (auto& stage : stages)
        for (auto& block : stage) block.init(rng);
}

template <typename T>
void SplatEncoder<T>::register_into(ParamSet<T>& ps, const std::string& prefix) {
    ps.add_param(prefix + ".stem.w", &stem_w);
    ps.add_param(prefix + ".stem.bn.g", &stem_gamma);
    ps.add_param(prefix + ".stem.bn.b", &stem_beta);
    ps.add_buffer(prefix + ".stem.bn.rm", &stem_bn.mean);
    ps.add_buffer(prefix + ".stem.bn.rv", &stem_bn.var);
    for (size_t s = 0; s < stages.size(); ++s)
        for (size_t b = 0; b < stages[s].size(); ++b)
            stages[s][b].register_into(ps, prefix + ".s" + std::to_string(s) + ".b" + std::to_string(b));
}

template <typename T>
typename SplatEncoder<T>::Out SplatEncoder<T>::forward(Tape<T>& t, Var image, BnMode mode,
                                                       const Hook& hook) {
    const Tensor<T>& iv = t.value(image);
    if (iv.rank() != 4 || iv.dim(1) != 3)
        throw std::invalid_argument("encoder: expected a [B,3,S,S] image, got " + shape_str(iv.shape()));
    if (iv.dim(2) != iv.dim(3) || iv.dim(2) % 32 != 0)
        throw std::invalid_argument("encoder: side " + std::to_string(iv.dim(2)) +
                                    " must be square and divisible by 32");

    Var c = conv2d(t, image, t.parameter(stem_w), Var{}, 1, 1);
    Var n = batch_norm(t, c, t.parameter(stem_gamma), t.parameter(stem_beta), stem_bn, mode,
                       static_cast<T>(kBnMomentum), static_cast<T>(kBnEps));
    Out out;
    out.stem = relu(t, n);

    Var cur = out.stem;
    for (int s = 0; s < 5; ++s) {
        if (hook) cur = hook(t, s, cur);
        for (auto& block : stages[static_cast<size_t>(s)]) cur = block.forward(t, cur, mode).y;
        out.pyramid[static_cast<size_t>(s)] = cur;
    }
    return out;
}

template struct SplatBlock<float>;
template struct SplatBlock<double>;
template struct SplatEncoder<float>;
template struct SplatEncoder<double>;

}  // namespace agcu
