#include "model/coupled_net.hpp"

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

CoupledNetConfig CoupledNetConfig::from_base_width(int64_t side, int64_t w, int cardinality,
                                                   int radix) {
    CoupledNetConfig c;
    c.side = side;
    c.encoder = EncoderConfig::from_base_width(w, cardinality, radix);
    c.decoder_widths = {4 * w, 2 * w, w, w, w};
    return c;
}

void CoupledNetConfig::validate() const {
    if (side < 32 || side % 32 != 0)
        throw std::invalid_argument("config: side " + std::to_string(side) +
                                    " must be a positive multiple of 32");
    encoder.validate();
    for (int64_t w : decoder_widths)
        if (w < 1) throw std::invalid_argument("config: decoder widths must be positive");
}

template <typename T>
DecoderBlock<T>::DecoderBlock(int64_t in, int64_t out)
    : in_ch(in),
      out_ch(out),
      w1(Shape{out, in, 3, 3}),
      gamma1(Tensor<T>::full(Shape{out}, T(1))),
      beta1(Shape{out}),
      bn1(out),
      w2(Shape{out, out, 3, 3}),
      gamma2(Tensor<T>::full(Shape{out}, T(1))),
      beta2(Shape{out}),
      bn2(out) {
    if (in < 1 || out < 1) throw std::invalid_argument("decoder block: channel counts must be positive");
}

template <typename T>
void DecoderBlock<T>::init(Rng& rng) {
    kaiming_fill(w1, in_ch * 9, rng);
    kaiming_fill(w2, out_ch * 9, rng);
}

template <typename T>
void DecoderBlock<T>::register_into(ParamSet<T>& ps, const std::string& prefix) {
    ps.add_param(prefix + ".w1", &w1);
    ps.add_param(prefix + ".bn1.g", &gamma1);
    ps.add_param(prefix + ".bn1.b", &beta1);
    ps.add_buffer(prefix + ".bn1.rm", &bn1.mean);
    ps.add_buffer(prefix + ".bn1.rv", &bn1.var);
    ps.add_param(prefix + ".w2", &w2);
    ps.add_param(prefix + ".bn2.g", &gamma2);
    ps.add_param(prefix + ".bn2.b", &beta2);
    ps.add_buffer(prefix + ".bn2.rm", &bn2.mean);
    ps.add_buffer(prefix + ".bn2.rv", &bn2.var);
}

template <typename T>
Var DecoderBlock<T>::forward(Tape<T>& t, Var coarse, const std::vector<Var>& skips, BnMode mode) {
    const Tensor<T>& cv = t.value(coarse);
    Var up = resample_bilinear(t, coarse, cv.dim(2) * 2, cv.dim(3) * 2);
    std::vector<Var> parts{up};
    parts.insert(parts.end(), skips.begin(), skips.end());
    Var cat = parts.size() == 1 ? up : concat_channels(t, parts);
    if (t.value(cat).dim(1) != in_ch)
        throw std::invalid_argument("decoder block: got " + std::to_string(t.value(cat).dim(1)) +
                                    " input channels, built for " + std::to_string(in_ch));
    Var y = relu(t, batch_norm(t, conv2d(t, cat, t.parameter(w1), Var{}, 1, 1), t.parameter(gamma1),
                               t.parameter(beta1), bn1, mode, static_cast<T>(kBnMomentum),
                               static_cast<T>(kBnEps)));
    return relu(t, batch_norm(t, conv2d(t, y, t.parameter(w2), Var{}, 1, 1), t.parameter(gamma2),
                              t.parameter(beta2), bn2, mode, static_cast<T>(kBnMomentum),
                              static_cast<T>(kBnEps)));
}

template <typename T>
int64_t UNet<T>::skip_width(int level) const {
    if (level < 4) return enc_cfg.widths[static_cast<size_t>(3 - level)];
    return enc_cfg.stem_width;
}

template <typename T>
int64_t UNet<T>::gate_g_width(int level) const {
    if (level == 0) return enc_cfg.widths[4];
    return dec_widths[static_cast<size_t>(level - 1)];
}

template <typename T>
UNet<T>::UNet(const EncoderConfig& e, const std::array<int64_t, 5>& dw, bool gates_on, bool cross_dec)
    : enc_cfg(e),
      dec_widths(dw),
      use_gates(gates_on),
      cross_decoder_inputs(cross_dec),
      encoder(e),
      head_w(Shape{1, dw[4], 1, 1}),
      head_b(Shape{1}) {
    for (int i = 0; i < 5; ++i) {
        if (use_gates) gates.emplace_back(skip_width(i), gate_g_width(i));
        int64_t in = gate_g_width(i) + skip_width(i) +
                     (cross_decoder_inputs ? dec_widths[static_cast<size_t>(i)] : 0);
        decoder.emplace_back(in, dec_widths[static_cast<size_t>(i)]);
    }
}

template <typename T>
void UNet<T>::init(Rng& rng) {
    encoder.init(rng);
    for (auto& g : gates) g.init(rng);
    for (auto& d : decoder) d.init(rng);
    kaiming_fill(head_w, dec_widths[4], rng);
}

template <typename T>
void UNet<T>::register_into(ParamSet<T>& ps, const std::string& prefix) {
    encoder.register_into(ps, prefix + ".enc");
    for (size_t i = 0; i < gates.size(); ++i)
        gates[i].register_into(ps, prefix + ".gate" + std::to_string(i));
    for (size_t i = 0; i < decoder.size(); ++i)
        decoder[i].register_into(ps, prefix + ".dec" + std::to_string(i));
    ps.add_param(prefix + ".head.w", &head_w);
    ps.add_param(prefix + ".head.b", &head_b);
}

template <typename T>
typename UNet<T>::Out UNet<T>::forward(Tape<T>& t, Var image, BnMode mode,
                                       const typename SplatEncoder<T>::Hook& enc_hook,
                                       const std::array<Var, 5>* cross_dec) {
    Out out;
    auto enc_out = encoder.forward(t, image, mode, enc_hook);
    out.stem = enc_out.stem;
    out.enc = enc_out.pyramid;

    Var g = enc_out.pyramid[4];
    for (int i = 0; i < 5; ++i) {
        Var x = i < 4 ? enc_out.pyramid[static_cast<size_t>(3 - i)] : enc_out.stem;
        Var skip = x;
        if (use_gates) {
            auto gate_out = gates[static_cast<size_t>(i)].forward(t, x, g);
            skip = gate_out.x_hat;
            out.last_alpha = gate_out.alpha;
        }
        std::vector<Var> skips{skip};
        if (cross_dec) skips.push_back((*cross_dec)[static_cast<size_t>(i)]);
        g = decoder[static_cast<size_t>(i)].forward(t, g, skips, mode);
        out.dec[static_cast<size_t>(i)] = g;
    }
    out.logits = conv2d(t, g, t.parameter(head_w), t.parameter(head_b), 1, 0);
    out.p = sigmoid(t, out.logits);
    return out;
}

template <typename T>
CoupledNet<T>::CoupledNet(CoupledNetConfig c)
    : cfg(c), u1(c.encoder, c.decoder_widths, c.attention_gates, false) {
    cfg.validate();
    if (!cfg.second_unet) return;
    u2.emplace(cfg.encoder, cfg.decoder_widths, cfg.attention_gates, cfg.cross_connections);
    if (cfg.cross_connections) {
        for (int s = 0; s < 5; ++s) {
            int64_t ch = s == 0 ? cfg.encoder.stem_width : cfg.encoder.widths[static_cast<size_t>(s - 1)];
            cross_w.emplace_back(Shape{ch, 2 * ch, 1, 1});
            cross_b.emplace_back(Shape{ch});
        }
    }
    if (cfg.bridge == CoupledNetConfig::Bridge::ConcatProject) {
        bridge_w = Tensor<T>(Shape{3, 4, 1, 1});
        bridge_b = Tensor<T>(Shape{3});
    }
}

template <typename T>
void CoupledNet<T>::init(uint64_t seed) {
    Rng rng(seed);
    u1.init(rng);
    if (u2) u2->init(rng);
    for (size_t s = 0; s < cross_w.size(); ++s) kaiming_fill(cross_w[s], cross_w[s].dim(1), rng);
    if (bridge_w.numel() > 0) kaiming_fill(bridge_w, 4, rng);
}

template <typename T>
ParamSet<T> CoupledNet<T>::param_set() {
    ParamSet<T> ps;
    u1.register_into(ps, "u1");
    if (u2) u2->register_into(ps, "u2");
    for (size_t s = 0; s < cross_w.size(); ++s) {
        ps.add_param("cross" + std::to_string(s) + ".w", &cross_w[s]);
        ps.add_param("cross" + std::to_string(s) + ".b", &cross_b[s]);
    }
    if (bridge_w.numel() > 0) {
        ps.add_param("bridge.w", &bridge_w);
        ps.add_param("bridge.b", &bridge_b);
    }
    return ps;
}

template <typename T>
NetworkOutput CoupledNet<T>::forward(Tape<T>& t, Var image, BnMode mode) {
    auto o1 = u1.forward(t, image, mode);
    if (!cfg.second_unet) return {o1.p, o1.p, o1.last_alpha};

    Var f1 = cfg.bridge_from_logits ? o1.logits : o1.p;
    Var bridged;
    if (cfg.bridge == CoupledNetConfig::Bridge::Multiply) {
        bridged = mul_gate(t, image, f1);
    } else {
        Var cat = concat_channels(t, {image, f1});
        bridged = conv2d(t, cat, t.parameter(bridge_w), t.parameter(bridge_b), 1, 0);
    }

    typename SplatEncoder<T>::Hook hook;
    std::array<Var, 5> fuse_src{o1.stem, o1.enc[0], o1.enc[1], o1.enc[2], o1.enc[3]};
    if (cfg.cross_connections) {
        hook = [this, fuse_src](Tape<T>& tt, int s, Var x) -> Var {
            Var cat = concat_channels(tt, {x, fuse_src[static_cast<size_t>(s)]});
            return conv2d(tt, cat, tt.parameter(cross_w[static_cast<size_t>(s)]),
                          tt.parameter(cross_b[static_cast<size_t>(s)]), 1, 0);
        };
    }
    auto o2 = u2->forward(t, bridged, mode, hook, cfg.cross_connections ? &o1.dec : nullptr);
    return {o1.p, o2.p, o2.last_alpha};
}

int64_t conv_flop_count(int64_t cin, int64_t cout, int64_t k, int64_t out_h, int64_t out_w) {
    return 2 * cout * out_h * out_w * cin * k * k;
}

int64_t conv_param_count(int64_t cin, int64_t cout, int64_t k, bool bias) {
    return cout * cin * k * k + (bias ? cout : 0);
}

namespace {

struct Acc {
    CostEstimate e;

    void conv(int64_t cin, int64_t cout, int64_t k, int64_t oh, int64_t ow, bool bias) {
        int64_t f = conv_flop_count(cin, cout, k, oh, ow);
        e.flops += f;
        e.conv_flops += f;
        e.params += conv_param_count(cin, cout, k, bias);
    }
    void bn(int64_t c, int64_t h, int64_t w) {
        e.flops += 2 * c * h * w;
        e.params += 2 * c;
    }
    void fc(int64_t cin, int64_t cout) {
        e.flops += 2 * cin * cout;
        e.params += cout * cin + cout;
    }
    void relu(int64_t n) { e.flops += n; }
    void sigmoid(int64_t n) { e.flops += 4 * n; }
    void softmax(int64_t n) { e.flops += 5 * n; }
    void resample(int64_t n_out) { e.flops += 8 * n_out; }
    void elementwise(int64_t n) { e.flops += n; }

    void splat_block(const SplatConfig& c, int64_t h) {
        int64_t ho = h / c.stride;
        int64_t ck = c.out_channels / c.cardinality;
        int64_t plane = ck * ho * ho;
        for (int g = 0; g < c.groups(); ++g) {
            conv(c.in_channels, ck, 3, ho, ho, false);
            bn(ck, ho, ho);
        }
        for (int k = 0; k < c.cardinality; ++k) {
            elementwise((c.radix - 1) * plane);  // split sum
            elementwise(plane);                  // pooling reads each value once
            fc(ck, c.hidden());
            relu(c.hidden());
            fc(c.hidden(), c.radix * ck);
            if (c.radix > 1)
                softmax(c.radix * ck);
            else
                sigmoid(c.radix * ck);
            elementwise(c.radix * plane);        // weighted splits
            elementwise((c.radix - 1) * plane);  // fusion sum
        }
        if (c.stride != 1 || c.in_channels != c.out_channels)
            conv(c.in_channels, c.out_channels, 1, ho, ho, true);
        elementwise(c.out_channels * ho * ho);  // residual add
    }

    void gate(int64_t fx, int64_t fg, int64_t hx, int64_t hg) {
        int64_t fi = std::max<int64_t>(fx / 2, 4);
        resample(fx * hg * hg);
        conv(fx, fi, 1, hg, hg, false);
        conv(fg, fi, 1, hg, hg, true);
        elementwise(fi * hg * hg);
        relu(fi * hg * hg);
        conv(fi, 1, 1, hg, hg, true);
        sigmoid(hg * hg);
        resample(hx * hx);
        elementwise(fx * hx * hx);
    }

    void decoder_block(int64_t coarse_ch, int64_t in, int64_t out, int64_t ht) {
        resample(coarse_ch * ht * ht);
        conv(in, out, 3, ht, ht, false);
        bn(out, ht, ht);
        relu(out * ht * ht);
        conv(out, out, 3, ht, ht, false);
        bn(out, ht, ht);
        relu(out * ht * ht);
    }

    void unet(const EncoderConfig& ec, const std::array<int64_t, 5>& dw, bool gates, bool cross,
              int64_t side) {
        conv(3, ec.stem_width, 3, side, side, false);
        bn(ec.stem_width, side, side);
        relu(ec.stem_width * side * side);

        int64_t h = side;
        int64_t in = ec.stem_width;
        for (int s = 0; s < 5; ++s) {
            if (cross) conv(2 * in, in, 1, h, h, true);
            for (int b = 0; b < ec.blocks[static_cast<size_t>(s)]; ++b) {
                SplatConfig sc;
                sc.in_channels = b == 0 ? in : ec.widths[static_cast<size_t>(s)];
                sc.out_channels = ec.widths[static_cast<size_t>(s)];
                sc.cardinality = ec.cardinality;
                sc.radix = ec.radix;
                sc.stride = b == 0 ? 2 : 1;
                splat_block(sc, h);
                if (b == 0) h /= 2;
            }
            in = ec.widths[static_cast<size_t>(s)];
        }

        int64_t hd = side / 32;
        int64_t g_ch = ec.widths[4];
        for (int i = 0; i < 5; ++i) {
            int64_t ht = hd * 2;
            int64_t skip = i < 4 ? ec.widths[static_cast<size_t>(3 - i)] : ec.stem_width;
            if (gates) gate(skip, g_ch, ht, hd);
            int64_t dec_in = g_ch + skip + (cross ? dw[static_cast<size_t>(i)] : 0);
            decoder_block(g_ch, dec_in, dw[static_cast<size_t>(i)], ht);
            g_ch = dw[static_cast<size_t>(i)];
            hd = ht;
        }
        conv(dw[4], 1, 1, side, side, true);
        sigmoid(side * side);
    }
};

}  // namespace

CostEstimate estimate_flops_params(const CoupledNetConfig& cfg) {
    cfg.validate();
    Acc acc;
    acc.unet(cfg.encoder, cfg.decoder_widths, cfg.attention_gates, false, cfg.side);
    if (cfg.second_unet) {
        if (cfg.bridge == CoupledNetConfig::Bridge::Multiply)
            acc.elementwise(3 * cfg.side * cfg.side);
        else
            acc.conv(4, 3, 1, cfg.side, cfg.side, true);
        acc.unet(cfg.encoder, cfg.decoder_widths, cfg.attention_gates, cfg.cross_connections,
                 cfg.side);
    }
    return acc.e;
}

template struct DecoderBlock<float>;
template struct DecoderBlock<double>;
template struct UNet<float>;
template struct UNet<double>;
template struct CoupledNet<float>;
template struct CoupledNet<double>;

}  // namespace agcu
