#pragma once

#include "core/ops.hpp"
#include "core/tape.hpp"

namespace agcu {

/// Asymmetric overlap objective. alpha scales the false-positive mass, beta
/// the false-negative mass; alpha = beta = 0.5 reduces to soft Dice.
struct TverskyParams {
    double alpha = 0.3;
    double beta = 0.7;
    double eps = 1e-6;

    void validate() const;
};

/// Overlap index in [0,1] over all elements of p against a binary target,
/// smoothed by eps in numerator and denominator. Differentiable in p.
template <typename T>
Var tversky_index(Tape<T>& t, Var p, Var target, const TverskyParams& params);

/// (1 - T(p2)) + (1 - T(p1)): the training loss over both probability maps.
template <typename T>
Var coupled_loss(Tape<T>& t, Var p1, Var p2, Var target, const TverskyParams& params);

/// Same index computed directly, for reporting outside a recorded graph.
template <typename T>
double tversky_scalar(const Tensor<T>& p, const Tensor<T>& target, const TverskyParams& params);

}  // namespace agcu
