#pragma once

#include <cstdint>
#include <vector>

#include "data/dataset.hpp"

namespace agcu {

/// Controls the synthetic blob dataset. Each sample is a textured
/// background with `min_blobs`..`max_blobs` filled ellipses in a distinct
/// color; the mask is the union of the ellipses. Samples whose positive
/// fraction falls outside [1%, 60%] are redrawn.
struct SyntheticConfig {
    int64_t count = 200;
    int64_t side = 64;
    int min_blobs = 1;
    int max_blobs = 3;
    double ecc_min = 0.45;
    double ecc_max = 1.0;
    double noise_amp = 0.08;
    uint64_t seed = 0;

    void validate() const;
};

/// Generates the dataset. The same config always yields bit-identical
/// samples; ids are sample_000 .. sample_{count-1} zero-padded to the width
/// of count-1.
std::vector<SamplePair> synth_generate(const SyntheticConfig& cfg);

}  // namespace agcu
