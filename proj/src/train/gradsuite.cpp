#include "train/gradsuite.hpp"

#include <algorithm>
#include <stdexcept>

#include "core/gradcheck.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"
#include "model/coupled_net.hpp"
#include "train/losses.hpp"

namespace agcu {
namespace {

Tensor<double> rand_t(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

void add_item(GradReport& r, const std::string& name, double err) {
    r.items.emplace_back(name, err);
    r.max_err = std::max(r.max_err, err);
}

void randomize_params(ParamSet<double>& ps, Rng& rng) {
    for (auto& [name, tensor] : ps.params)
        for (int64_t i = 0; i < tensor->numel(); ++i) (*tensor)[i] = rng.uniform(-0.5, 0.5);
}

void ops_items(GradReport& r, Rng& rng) {
    {
        Tensor<double> x = rand_t({2, 3, 6, 5}, rng);
        Tensor<double> w = rand_t({4, 3, 3, 3}, rng);
        Tensor<double> b = rand_t({4}, rng);
        add_item(r, "conv2d", check_gradients({&x, &w, &b}, [&](Tape<double>& t) {
                     Var y = conv2d(t, t.parameter(x), t.parameter(w), t.parameter(b), 2, 1);
                     return sum_all(t, mul(t, y, y));
                 }));
    }
    {
        Tensor<double> x = rand_t({2, 3, 5, 5}, rng);
        Tensor<double> gamma = rand_t({3}, rng, 0.5, 1.5);
        Tensor<double> beta = rand_t({3}, rng);
        Tensor<double> lw = rand_t({2, 3, 5, 5}, rng);
        BatchNormState<double> state(3);
        add_item(r, "batch_norm", check_gradients({&x, &gamma, &beta}, [&](Tape<double>& t) {
                     Var y = batch_norm(t, t.parameter(x), t.parameter(gamma), t.parameter(beta),
                                        state, BnMode::Train, 0.1, 1e-5);
                     return sum_all(t, mul(t, y, t.constant(lw)));
                 }));
    }
    {
        Tensor<double> x = rand_t({1, 2, 5, 4}, rng);
        add_item(r, "resample_bilinear", check_gradients({&x}, [&](Tape<double>& t) {
                     Var y = resample_bilinear(t, t.parameter(x), 9, 7);
                     return sum_all(t, mul(t, y, y));
                 }));
    }
    {
        Tensor<double> x(Shape{1, 2, 6, 6});
        for (int64_t i = 0; i < x.numel(); ++i)
            x[i] = rng.uniform(-1, 1) + 0.001 * static_cast<double>(i);
        add_item(r, "max_pool2d", check_gradients({&x}, [&](Tape<double>& t) {
                     Var y = max_pool2d(t, t.parameter(x), 2, 2);
                     return sum_all(t, mul(t, y, y));
                 }));
    }
    {
        Tensor<double> x = rand_t({3, 4, 5}, rng, -3.0, 3.0);
        add_item(r, "softmax_axis", check_gradients({&x}, [&](Tape<double>& t) {
                     Var y = softmax_axis(t, t.parameter(x), 1);
                     return sum_all(t, mul(t, y, y));
                 }));
    }
    {
        Tensor<double> x = rand_t({2, 6}, rng);
        Tensor<double> w = rand_t({4, 6}, rng);
        Tensor<double> b = rand_t({4}, rng);
        add_item(r, "fully_connected", check_gradients({&x, &w, &b}, [&](Tape<double>& t) {
                     Var y = fully_connected(t, t.parameter(x), t.parameter(w), t.parameter(b));
                     return sum_all(t, mul(t, y, y));
                 }));
    }
    {
        Tensor<double> x = rand_t({1, 3, 4, 4}, rng);
        Tensor<double> g = rand_t({1, 1, 4, 4}, rng, 0.1, 0.9);
        add_item(r, "mul_gate", check_gradients({&x, &g}, [&](Tape<double>& t) {
                     Var y = mul_gate(t, t.parameter(x), t.parameter(g));
                     return sum_all(t, mul(t, y, y));
                 }));
    }
    {
        Tensor<double> a = rand_t({8}, rng, 0.5, 2.0);
        Tensor<double> b = rand_t({8}, rng, 0.5, 2.0);
        add_item(r, "divide", check_gradients({&a, &b}, [&](Tape<double>& t) {
                     Var y = divide(t, t.parameter(a), t.parameter(b));
                     return sum_all(t, mul(t, y, y));
                 }));
    }
    {
        Tensor<double> x = rand_t({10}, rng, -4.0, 4.0);
        add_item(r, "sigmoid", check_gradients({&x}, [&](Tape<double>& t) {
                     Var y = sigmoid(t, t.parameter(x));
                     return sum_all(t, mul(t, y, y));
                 }));
    }
}

void block_items(GradReport& r, Rng& rng) {
    {
        SplatConfig cfg;
        cfg.in_channels = 6;
        cfg.out_channels = 8;
        cfg.cardinality = 2;
        cfg.radix = 2;
        cfg.stride = 2;
        SplatBlock<double> block(cfg);
        block.init(rng);
        ParamSet<double> ps;
        block.register_into(ps, "b");
        randomize_params(ps, rng);
        Tensor<double> x = rand_t({1, 6, 8, 8}, rng);
        Tensor<double> lw = rand_t({1, 8, 4, 4}, rng);
        std::vector<Tensor<double>*> probes{&x, &block.conv_w[0], &block.fc2_b[1],
                                            &block.short_w, &block.bn_gamma[2]};
        add_item(r, "splat_block",
                 check_gradients(
                     probes,
                     [&](Tape<double>& t) {
                         auto out = block.forward(t, t.parameter(x), BnMode::Train);
                         return sum_all(t, mul(t, out.y, t.constant(lw)));
                     },
                     1e-5, 4));
    }
    {
        AttentionGate<double> gate(8, 16);
        gate.init(rng);
        Tensor<double> x = rand_t({1, 8, 12, 12}, rng);
        Tensor<double> g = rand_t({1, 16, 6, 6}, rng);
        Tensor<double> lw = rand_t({1, 8, 12, 12}, rng);
        std::vector<Tensor<double>*> probes{&x, &g, &gate.wx, &gate.wg, &gate.wg_b,
                                            &gate.psi, &gate.psi_b};
        add_item(r, "attention_gate",
                 check_gradients(
                     probes,
                     [&](Tape<double>& t) {
                         auto out = gate.forward(t, t.parameter(x), t.parameter(g));
                         return sum_all(t, mul(t, out.x_hat, t.constant(lw)));
                     },
                     1e-5, 4));
    }
    {
        DecoderBlock<double> block(12, 6);
        Rng init_rng(31);
        block.init(init_rng);
        ParamSet<double> ps;
        block.register_into(ps, "d");
        randomize_params(ps, rng);
        Tensor<double> coarse = rand_t({1, 4, 3, 3}, rng);
        Tensor<double> skip = rand_t({1, 8, 6, 6}, rng);
        Tensor<double> lw = rand_t({1, 6, 6, 6}, rng);
        std::vector<Tensor<double>*> probes{&coarse, &skip, &block.w1, &block.w2,
                                            &block.gamma2, &block.beta1};
        add_item(r, "decoder_block",
                 check_gradients(
                     probes,
                     [&](Tape<double>& t) {
                         Var y = block.forward(t, t.parameter(coarse), {t.parameter(skip)},
                                               BnMode::Train);
                         return sum_all(t, mul(t, y, t.constant(lw)));
                     },
                     1e-5, 4));
    }
    {
        Tensor<double> p = rand_t({1, 1, 6, 6}, rng, 0.1, 0.9);
        Tensor<double> g(Shape{1, 1, 6, 6});
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
        TverskyParams params;
        add_item(r, "tversky_loss", check_gradients({&p}, [&](Tape<double>& t) {
                     Var ti = tversky_index(t, t.parameter(p), t.constant(g), params);
                     return affine(t, ti, -1.0, 1.0);
                 }));
    }
}

void full_item(GradReport& r, Rng& rng) {
    CoupledNetConfig cfg = CoupledNetConfig::from_base_width(32, 4, 2, 2);
    CoupledNet<double> net(cfg);
    net.init(21);
    // At exact initialization the zeroed residual scales leave some weights
    // with gradients too small for finite differences to resolve; random
    // parameters make every path generic.
    auto ps = net.param_set();
    randomize_params(ps, rng);

    Tensor<double> img = rand_t({2, 3, 32, 32}, rng, 0.0, 1.0);
    Tensor<double> w1 = rand_t({2, 1, 32, 32}, rng);
    Tensor<double> w2 = rand_t({2, 1, 32, 32}, rng);

    std::vector<Tensor<double>*> probes{&img,
                                        &net.u1.encoder.stem_w,
                                        &net.u1.encoder.stages[2][0].conv_w[0],
                                        &net.u1.gates[1].psi_b,
                                        &net.u1.decoder[3].w1,
                                        &net.u1.head_w,
                                        &net.u1.head_b,
                                        &net.cross_w[0],
                                        &net.u2->encoder.stages[4][0].fc2_b[0],
                                        &net.u2->head_b};
    add_item(r, "coupled_net_full",
             check_gradients(
                 probes,
                 [&](Tape<double>& t) {
                     auto out = net.forward(t, t.parameter(img), BnMode::Train);
                     Var l1 = sum_all(t, mul(t, out.p1, t.constant(w1)));
                     Var l2 = sum_all(t, mul(t, out.p2, t.constant(w2)));
                     return add(t, l1, l2);
                 },
                 1e-5, 2, 77));
}

}  // namespace

GradReport gradient_suite(const std::string& scale) {
    if (scale != "ops" && scale != "blocks" && scale != "full")
        throw std::invalid_argument("gradient_suite: scale must be ops, blocks, or full, got '" +
                                    scale + "'");
    GradReport r;
    Rng rng(1234);
    ops_items(r, rng);
    if (scale == "ops") return r;
    block_items(r, rng);
    if (scale == "blocks") return r;
    full_item(r, rng);
    return r;
}

}  // namespace agcu
