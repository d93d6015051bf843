#include "model/attention_gate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace agcu {

template <typename T>
AttentionGate<T>::AttentionGate(int64_t f_x, int64_t f_g, int64_t f_i)
    : fx(f_x),
      fg(f_g),
      fi(f_i > 0 ? f_i : std::max<int64_t>(f_x / 2, 4)),
      wx(Shape{fi, fx, 1, 1}),
      wg(Shape{fi, fg, 1, 1}),
      wg_b(Shape{fi}),
      psi(Shape{1, fi, 1, 1}),
      psi_b(Shape{1}) {
    if (fx < 1 || fg < 1) throw std::invalid_argument("attention gate: channel counts must be positive");
}

template <typename T>
void AttentionGate<T>::init(Rng& rng) {
    auto fill = [&](Tensor<T>& w, int64_t fan_in) {
        double std = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * std);
    };
    fill(wx, fx);
    fill(wg, fg);
    fill(psi, fi);
}

template <typename T>
void AttentionGate<T>::register_into(ParamSet<T>& ps, const std::string& prefix) {
    ps.add_param(prefix + ".wx", &wx);
    ps.add_param(prefix + ".wg", &wg);
    ps.add_param(prefix + ".wg_b", &wg_b);
    ps.add_param(prefix + ".psi", &psi);
    ps.add_param(prefix + ".psi_b", &psi_b);
}

template <typename T>
typename AttentionGate<T>::Out AttentionGate<T>::forward(Tape<T>& t, Var x, Var g) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& gv = t.value(g);
    if (xv.rank() != 4 || gv.rank() != 4 || xv.dim(0) != gv.dim(0))
        throw std::invalid_argument("attention gate: x " + shape_str(xv.shape()) + " and g " +
                                    shape_str(gv.shape()) + " disagree on batch");
    if (xv.dim(1) != fx || gv.dim(1) != fg)
        throw std::invalid_argument("attention gate: channels of x " + shape_str(xv.shape()) +
                                    " / g " + shape_str(gv.shape()) + " do not match the gate");
    if (gv.dim(2) > xv.dim(2) || gv.dim(3) > xv.dim(3))
        throw std::invalid_argument("attention gate: g must be at most as fine as x");
    // Recording ops grows the tape, so the tensor references above go stale.
    int64_t hx = xv.dim(2), wx_ = xv.dim(3), hg = gv.dim(2), wg_ = gv.dim(3);

    Var x_coarse = resample_bilinear(t, x, hg, wg_);
    Var q = relu(t, add(t, conv2d(t, x_coarse, t.parameter(wx), Var{}, 1, 0),
                        conv2d(t, g, t.parameter(wg), t.parameter(wg_b), 1, 0)));
    Var coarse = sigmoid(t, conv2d(t, q, t.parameter(psi), t.parameter(psi_b), 1, 0));
    Out out;
    out.alpha = resample_bilinear(t, coarse, hx, wx_);
    out.x_hat = mul_gate(t, x, out.alpha);
    return out;
}

template struct AttentionGate<float>;
template struct AttentionGate<double>;

}  // namespace agcu
