#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "data/dataset.hpp"
#include "model/coupled_net.hpp"
#include "train/checkpoint.hpp"
#include "train/config.hpp"
#include "train/metrics.hpp"

namespace agcu {

struct EpochRecord {
    int phase = 0;
    int64_t epoch = 0;  // 1-based within the phase
    double train_loss = 0;
    double val_mdice = 0;
    double val_miou = 0;
    double wall_s = 0;

    std::string to_json() const;
};

struct TrainResult {
    std::vector<EpochRecord> epochs;
    double best_val_mdice = 0;
    std::string checkpoint_path;  // best phase-2 (final) checkpoint
    bool nan_abort = false;
};

/// Two-phase optimization. Phase 1 trains the first UNet's parameters
/// against its own Tversky loss and tracks validation mDice of p1; phase 2
/// starts from the phase-1 best, trains all parameters (or everything but
/// the first UNet when freeze_first_unet is set) against the coupled loss,
/// and tracks p2. Each phase stops when max_epochs is reached or the best
/// epoch is `patience` epochs old, then rolls back to its best snapshot.
/// Appends one JSON line per epoch to `runlog` when given. A non-finite
/// training loss records the offending epoch and aborts.
TrainResult train_two_phase(const TrainConfig& cfg, const std::vector<SamplePair>& train,
                            const std::vector<SamplePair>& val, CoupledNet<float>& net,
                            std::ostream* runlog = nullptr);

struct EvalResult {
    MetricReport report;
    CurveData curves;
    bool has_curves = false;  // pooled curves need both classes present
};

/// Eval-mode sweep over `samples`: binarizes the final probability map at
/// `threshold` for per-image metrics and pools every pixel for the curves.
/// With `oracle` set the ground truth is scored as if it were the
/// prediction, a self-check that must yield perfect metrics.
EvalResult evaluate_samples(CoupledNet<float>& net, const std::vector<SamplePair>& samples,
                            double threshold, int64_t batch_size, bool oracle = false);

/// Runs one image through the network in eval mode. Returns the binarized
/// mask as [H,W] of {0,1}; when `alpha_out` is non-null and the gates are
/// on, stores the final gate coefficient map resampled over [0,1].
Tensor<float> infer_mask(CoupledNet<float>& net, const Tensor<float>& image, double threshold,
                         Tensor<float>* alpha_out = nullptr);

}  // namespace agcu
