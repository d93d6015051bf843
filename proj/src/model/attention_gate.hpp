#pragma once

#include <string>

#include "core/ops.hpp"
#include "core/optimizer.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

namespace agcu {

/// Gated skip connection: a single-channel coefficient map alpha in (0,1) is
/// computed from the skip feature x and the coarser gating feature g, then
/// broadcast-multiplied over x's channels. Never adds content, only scales.
template <typename T>
struct AttentionGate {
    int64_t fx, fg, fi;
    Tensor<T> wx;          // 1x1, no bias
    Tensor<T> wg, wg_b;    // 1x1 with bias
    Tensor<T> psi, psi_b;  // 1x1 to one channel

    AttentionGate(int64_t f_x, int64_t f_g, int64_t f_i = 0);
    void init(Rng& rng);
    void register_into(ParamSet<T>& ps, const std::string& prefix);

    struct Out {
        Var x_hat;  // same shape as x
        Var alpha;  // [B, 1, H_x, W_x]
    };
    Out forward(Tape<T>& t, Var x, Var g);
};

}  // namespace agcu
