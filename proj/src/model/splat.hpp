#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "core/ops.hpp"
#include "core/optimizer.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

namespace agcu {

inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEps = 1e-5;

struct SplatConfig {
    int64_t in_channels = 0;
    int64_t out_channels = 0;
    int cardinality = 2;
    int radix = 2;
    int stride = 1;
    int64_t attn_hidden = 0;  // 0 derives max(out_channels/4, 8)

    int64_t hidden() const {
        return attn_hidden > 0 ? attn_hidden : std::max<int64_t>(out_channels / 4, 8);
    }
    int groups() const { return cardinality * radix; }
    void validate() const;
};

/// Split-attention residual block: G = K*R group transforms (3x3 conv + BN),
/// per-cardinal-group channel attention over the R splits, fused by a weighted
/// sum, concatenated across cardinal groups, added to the (possibly projected)
/// input.
template <typename T>
struct SplatBlock {
    SplatConfig cfg;
    std::vector<Tensor<T>> conv_w;
    std::vector<Tensor<T>> bn_gamma, bn_beta;
    std::vector<BatchNormState<T>> bn_state;
    std::vector<Tensor<T>> fc1_w, fc1_b, fc2_w, fc2_b;
    bool has_shortcut;
    Tensor<T> short_w, short_b;

    explicit SplatBlock(SplatConfig c);
    void init(Rng& rng);
    void register_into(ParamSet<T>& ps, const std::string& prefix);

    struct Out {
        Var y;
        std::vector<Var> attn;  // one [B, R, C/K] tensor per cardinal group
    };
    Out forward(Tape<T>& t, Var x, BnMode mode);
};

struct EncoderConfig {
    std::array<int64_t, 5> widths{};
    std::array<int, 5> blocks{1, 1, 1, 1, 1};
    int cardinality = 2;
    int radix = 2;
    int64_t stem_width = 8;

    static EncoderConfig from_base_width(int64_t w, int cardinality, int radix);
    void validate() const;
};

/// Stem (full-resolution 3x3 conv + BN + ReLU) followed by five stages of
/// split-attention blocks, each stage entered at stride 2, so the pyramid
/// runs at strides 2, 4, 8, 16, 32 of the input side.
template <typename T>
struct SplatEncoder {
    EncoderConfig cfg;
    Tensor<T> stem_w, stem_gamma, stem_beta;
    BatchNormState<T> stem_bn;
    std::vector<std::vector<SplatBlock<T>>> stages;

    explicit SplatEncoder(EncoderConfig c);
    void init(Rng& rng);
    void register_into(ParamSet<T>& ps, const std::string& prefix);

    /// Transforms the tensor entering stage `site` (0..4); site 0 receives the
    /// stem output. Used for cross-network fusion.
    using Hook = std::function<Var(Tape<T>&, int, Var)>;

    struct Out {
        Var stem;                   // stride 1
        std::array<Var, 5> pyramid; // strides 2..32; last is the bottleneck
    };
    Out forward(Tape<T>& t, Var image, BnMode mode, const Hook& hook = {});
};

}  // namespace agcu
