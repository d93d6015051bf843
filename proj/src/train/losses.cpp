#include "train/losses.hpp"

#include <stdexcept>
#include <string>

namespace agcu {

void TverskyParams::validate() const {
    if (alpha < 0 || beta < 0 || alpha + beta <= 0)
        throw std::invalid_argument("tversky: alpha and beta must be non-negative with a positive sum");
    if (eps <= 0) throw std::invalid_argument("tversky: eps must be positive");
}

namespace {

template <typename T>
void check_target(const Tensor<T>& p, const Tensor<T>& g) {
    if (p.shape() != g.shape())
        throw std::invalid_argument("tversky: prediction " + shape_str(p.shape()) +
                                    " and target " + shape_str(g.shape()) + " differ");
    for (T v : g.vec())
        if (v != T(0) && v != T(1))
            throw std::invalid_argument("tversky: target must be binary");
}

}  // namespace

template <typename T>
Var tversky_index(Tape<T>& t, Var p, Var target, const TverskyParams& params) {
    params.validate();
    check_target(t.value(p), t.value(target));

    Var inv_g = affine(t, target, T(-1), T(1));
    Var inv_p = affine(t, p, T(-1), T(1));
    Var tp = sum_all(t, mul(t, p, target));
    Var fp = sum_all(t, mul(t, p, inv_g));
    Var fn = sum_all(t, mul(t, inv_p, target));

    Var num = affine(t, tp, T(1), static_cast<T>(params.eps));
    Var den = add(t, tp, add(t, affine(t, fp, static_cast<T>(params.alpha), T(0)),
                             affine(t, fn, static_cast<T>(params.beta), static_cast<T>(params.eps))));
    return divide(t, num, den);
}

template <typename T>
Var coupled_loss(Tape<T>& t, Var p1, Var p2, Var target, const TverskyParams& params) {
    Var t2 = tversky_index(t, p2, target, params);
    Var t1 = tversky_index(t, p1, target, params);
    return affine(t, add(t, t1, t2), T(-1), T(2));
}

template <typename T>
double tversky_scalar(const Tensor<T>& p, const Tensor<T>& target, const TverskyParams& params) {
    params.validate();
    check_target(p, target);
    double tp = 0, fp = 0, fn = 0;
    for (int64_t i = 0; i < p.numel(); ++i) {
        double pv = static_cast<double>(p[i]), gv = static_cast<double>(target[i]);
        tp += pv * gv;
        fp += pv * (1.0 - gv);
        fn += (1.0 - pv) * gv;
    }
    return (tp + params.eps) / (tp + params.alpha * fp + params.beta * fn + params.eps);
}

template Var tversky_index<float>(Tape<float>&, Var, Var, const TverskyParams&);
template Var tversky_index<double>(Tape<double>&, Var, Var, const TverskyParams&);
template Var coupled_loss<float>(Tape<float>&, Var, Var, Var, const TverskyParams&);
template Var coupled_loss<double>(Tape<double>&, Var, Var, Var, const TverskyParams&);
template double tversky_scalar<float>(const Tensor<float>&, const Tensor<float>&, const TverskyParams&);
template double tversky_scalar<double>(const Tensor<double>&, const Tensor<double>&, const TverskyParams&);

}  // namespace agcu
