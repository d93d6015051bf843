#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/dataset.hpp"

namespace agcu {

/// Splits indices 0..n-1 into k folds: seeded shuffle, then round-robin
/// assignment, so fold sizes differ by at most one and the same seed always
/// yields the same folds.
std::vector<std::vector<int64_t>> make_folds(int64_t n, int k, uint64_t seed);

/// One sample's place in a split: which source manifest it came from plus
/// its manifest entry.
struct SampleRef {
    std::string source;
    ManifestEntry entry;
};

struct ScenarioSplit {
    std::vector<SampleRef> train;
    std::vector<SampleRef> validation;
    std::vector<SampleRef> test;
};

/// Evaluation scenario selector.
///
///   1-3  cross-dataset: train on the union of `train_sources` with a
///        seeded `val_fraction` holdout as validation; test on the full
///        `test_sources`.
///   4    merge every listed source, then split 80/10/10 (floor for
///        validation and test, remainder to train); test entries keep
///        their source tag.
///   5-6  k-fold cross-validation over the merged `train_sources`: fold
///        `fold_index` is the test set, a `val_fraction` holdout of the
///        remainder is validation, the rest trains.
struct ScenarioSpec {
    int id = 1;
    std::vector<std::string> train_sources;
    std::vector<std::string> test_sources;
    double val_fraction = 0.1;
    int fold_count = 5;
    int fold_index = 0;
    uint64_t seed = 0;

    void validate() const;
};

struct NamedSource {
    std::string name;
    DatasetManifest manifest;
};

/// Assembles the split from the named source manifests. Every source name
/// referenced by the spec must be present; each id lands in exactly one of
/// train/validation/test.
ScenarioSplit scenario_split(const ScenarioSpec& spec, const std::vector<NamedSource>& sources);

/// Writes fold files fold_0 .. fold_{k-1} under `dir`, one id per line, for
/// the given manifest.
void write_folds(const DatasetManifest& manifest, int k, uint64_t seed, const std::string& dir);

}  // namespace agcu
