#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/scenario.hpp"
#include "model/coupled_net.hpp"
#include "train/losses.hpp"

namespace agcu {

/// Everything one training or evaluation run depends on, as a flat key set.
/// The same keys appear in config files (`key = value`, '#' comments), as
/// CLI overrides, and verbatim in the run record via to_text().
struct TrainConfig {
    // optimization
    double lr = 5e-3;
    double momentum = 0.9;
    int64_t batch_size = 4;
    int64_t max_epochs = 30;
    int64_t patience = 10;
    uint64_t seed = 0;
    bool freeze_first_unet = false;

    // loss
    TverskyParams tversky;

    // model
    int64_t side = 64;
    int64_t base_width = 8;
    int cardinality = 2;
    int radix = 2;
    bool attention_gates = true;
    bool cross_connections = true;
    bool second_unet = true;
    std::string bridge = "multiply";  // multiply | concat
    bool bridge_from_logits = false;

    // data
    int scenario = 1;
    std::vector<std::string> train_sources;
    std::vector<std::string> test_sources;
    double val_fraction = 0.1;
    int fold_count = 5;
    int fold_index = 0;
    bool augment = true;

    // evaluation and output
    double threshold = 0.5;
    std::string output_dir = "run";

    CoupledNetConfig net_config() const;
    ScenarioSpec scenario_spec() const;
    void validate() const;

    /// One `key = value` line per key, fixed order, defaults included.
    std::string to_text() const;

    /// Applies a single override; unknown keys are hard errors.
    void set(const std::string& key, const std::string& value);

    /// Applies every `key = value` line in `text` on top of the current
    /// values ('#' comments and blank lines skipped).
    void apply_text(const std::string& text);

    static TrainConfig from_text(const std::string& text);
    static TrainConfig from_file(const std::string& path);
};

}  // namespace agcu
