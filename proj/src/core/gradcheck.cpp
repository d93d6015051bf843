#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "core/rng.hpp"

namespace agcu {

namespace {

double eval_loss(const std::function<Var(Tape<double>&)>& build) {
    Tape<double> t;
    Var loss = build(t);
    return t.value(loss)[0];
}

}  // namespace

double check_gradients(const std::vector<Tensor<double>*>& inputs,
                       const std::function<Var(Tape<double>&)>& build, double eps,
                       int64_t sample_per_tensor, uint64_t seed) {
    {
        Tape<double> t;
        Var loss = build(t);
        if (t.value(loss).numel() != 1)
            throw std::invalid_argument("check_gradients: build must produce a scalar");
        t.backward(loss);
    }
    std::vector<std::vector<double>> analytic;
    for (Tensor<double>* in : inputs) {
        if (!in->has_grad())
            throw std::invalid_argument("check_gradients: an input never reached the tape");
        analytic.push_back(in->grad());
    }

    Rng rng(seed);
    double worst = 0.0;
    for (size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor<double>& x = *inputs[ti];
        std::vector<int64_t> coords;
        if (sample_per_tensor <= 0 || sample_per_tensor >= x.numel()) {
            coords.resize(static_cast<size_t>(x.numel()));
            for (int64_t i = 0; i < x.numel(); ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int64_t i = 0; i < sample_per_tensor; ++i)
                coords.push_back(rng.uniform_int(0, x.numel() - 1));
        }
        for (int64_t c : coords) {
            double keep = x[c];
            x[c] = keep + eps;
            double fp = eval_loss(build);
            x[c] = keep - eps;
            double fm = eval_loss(build);
            x[c] = keep;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = analytic[ti][static_cast<size_t>(c)];
            double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace agcu
