#pragma once

#include <functional>
#include <vector>

#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace agcu {

/// Central finite differences against the tape's analytic gradients, in double
/// precision. `build` records a scalar loss on a fresh tape, registering each
/// tensor in `inputs` via tape.parameter(); it is called once per probe, so it
/// must be a pure function of those tensors.
///
/// Returns max over checked coordinates of |a - n| / max(|a|, |n|, 1e-8).
/// With sample_per_tensor > 0, that many coordinates per tensor are drawn
/// deterministically from `seed` instead of sweeping all of them.
double check_gradients(const std::vector<Tensor<double>*>& inputs,
                       const std::function<Var(Tape<double>&)>& build, double eps = 1e-5,
                       int64_t sample_per_tensor = 0, uint64_t seed = 7);

}  // namespace agcu
