#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "model/attention_gate.hpp"
#include "model/splat.hpp"

namespace agcu {

struct CoupledNetConfig {
    int64_t side = 64;
    EncoderConfig encoder;
    std::array<int64_t, 5> decoder_widths{};
    bool attention_gates = true;
    bool cross_connections = true;
    bool second_unet = true;
    enum class Bridge { Multiply, ConcatProject };
    Bridge bridge = Bridge::Multiply;
    bool bridge_from_logits = false;

    static CoupledNetConfig from_base_width(int64_t side, int64_t w, int cardinality, int radix);
    void validate() const;
};

/// Upsample 2x, concatenate the skips, then twice conv3x3 -> BN -> ReLU.
template <typename T>
struct DecoderBlock {
    int64_t in_ch, out_ch;
    Tensor<T> w1, gamma1, beta1;
    BatchNormState<T> bn1;
    Tensor<T> w2, gamma2, beta2;
    BatchNormState<T> bn2;

    DecoderBlock(int64_t in, int64_t out);
    void init(Rng& rng);
    void register_into(ParamSet<T>& ps, const std::string& prefix);
    Var forward(Tape<T>& t, Var coarse, const std::vector<Var>& skips, BnMode mode);
};

/// One attention-gated UNet: splat encoder, five gated decoder levels, 1x1
/// sigmoid head. Exposes every intermediate map the coupling needs.
template <typename T>
struct UNet {
    EncoderConfig enc_cfg;
    std::array<int64_t, 5> dec_widths;
    bool use_gates;
    bool cross_decoder_inputs;  // widen decoder inputs for partner features

    SplatEncoder<T> encoder;
    std::vector<AttentionGate<T>> gates;
    std::vector<DecoderBlock<T>> decoder;
    Tensor<T> head_w, head_b;

    UNet(const EncoderConfig& e, const std::array<int64_t, 5>& dw, bool gates_on, bool cross_dec);
    void init(Rng& rng);
    void register_into(ParamSet<T>& ps, const std::string& prefix);

    struct Out {
        Var logits, p;
        Var stem;
        std::array<Var, 5> enc;
        std::array<Var, 5> dec;  // coarse to fine, strides 16, 8, 4, 2, 1
        Var last_alpha;          // finest gate's coefficient map; invalid when gates are off
    };
    Out forward(Tape<T>& t, Var image, BnMode mode,
                const typename SplatEncoder<T>::Hook& enc_hook = {},
                const std::array<Var, 5>* cross_dec = nullptr);

    int64_t skip_width(int level) const;  // encoder feature width gated at a decoder level
    int64_t gate_g_width(int level) const;
};

struct NetworkOutput {
    Var p1, p2;
    Var alpha_final;  // last gate of the final UNet; invalid when gates are off
};

/// Two coupled attention-gated UNets: UNet-1's probability map modulates the
/// input image for UNet-2, UNet-1 encoder features fuse into UNet-2's encoder
/// stage inputs, and UNet-1 decoder features join UNet-2's decoder concats.
template <typename T>
struct CoupledNet {
    CoupledNetConfig cfg;
    UNet<T> u1;
    std::optional<UNet<T>> u2;
    std::vector<Tensor<T>> cross_w, cross_b;  // per-stage 1x1 fusion projections
    Tensor<T> bridge_w, bridge_b;             // concat-project bridge only

    explicit CoupledNet(CoupledNetConfig c);
    void init(uint64_t seed);
    ParamSet<T> param_set();

    NetworkOutput forward(Tape<T>& t, Var image, BnMode mode);
};

/// Analytic cost model over the layer plan of a configuration, one image
/// (B = 1). Convolutions and FC layers count 2 ops per multiply-accumulate
/// (bias adds excluded); BN counts 2 per element; ReLU 1, sigmoid 4,
/// softmax 5 per element; bilinear resampling 8 per output element; elementwise
/// add/mul 1 per element. Parameters count every learnable value incl. biases.
struct CostEstimate {
    int64_t flops = 0;
    int64_t conv_flops = 0;
    int64_t params = 0;
};
CostEstimate estimate_flops_params(const CoupledNetConfig& cfg);

/// Cost of one convolution under the accounting above.
int64_t conv_flop_count(int64_t cin, int64_t cout, int64_t k, int64_t out_h, int64_t out_w);
int64_t conv_param_count(int64_t cin, int64_t cout, int64_t k, bool bias);

}  // namespace agcu
