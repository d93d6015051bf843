#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "core/optimizer.hpp"
#include "core/tensor.hpp"

namespace agcu {

/// On-disk snapshot of a run: magic header, format version, the config text
/// verbatim, training position, and three name-indexed tensor sections
/// (parameters, buffers, optimizer velocities), all float32 little-endian.
struct Checkpoint {
    uint32_t version = 1;
    std::string config_text;
    int32_t phase = 0;
    int64_t epoch = 0;
    double best_val_mdice = 0.0;
    std::vector<std::pair<std::string, Tensor<float>>> params;
    std::vector<std::pair<std::string, Tensor<float>>> buffers;
    std::vector<std::pair<std::string, Tensor<float>>> velocities;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Copies the registry's current tensors into a checkpoint.
Checkpoint snapshot_params(const ParamSet<float>& ps);

/// Writes checkpoint tensors back into the registry by name. Any missing,
/// unexpected, or shape-mismatched name is an error; the message lists the
/// full diff.
void restore_params(const ParamSet<float>& ps, const Checkpoint& ck);

}  // namespace agcu
