#include "data/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "core/rng.hpp"

namespace agcu {
namespace {

std::vector<SampleRef> collect(const std::vector<std::string>& names,
                               const std::vector<NamedSource>& sources) {
    std::vector<SampleRef> out;
    for (const auto& name : names) {
        auto it = std::find_if(sources.begin(), sources.end(),
                               [&](const NamedSource& s) { return s.name == name; });
        if (it == sources.end())
            throw std::invalid_argument("scenario_split: unknown source '" + name + "'");
        for (const auto& e : it->manifest.entries) out.push_back({name, e});
    }
    return out;
}

std::vector<int64_t> shuffled_indices(int64_t n, Rng& rng) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    return idx;
}

}  // namespace

std::vector<std::vector<int64_t>> make_folds(int64_t n, int k, uint64_t seed) {
    if (k < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
    if (n < k)
        throw std::invalid_argument("make_folds: " + std::to_string(n) + " samples cannot fill " +
                                    std::to_string(k) + " folds");
    Rng rng(seed);
    std::vector<int64_t> idx = shuffled_indices(n, rng);
    std::vector<std::vector<int64_t>> folds(static_cast<size_t>(k));
    for (int64_t i = 0; i < n; ++i)
        folds[static_cast<size_t>(i % k)].push_back(idx[static_cast<size_t>(i)]);
    return folds;
}

void ScenarioSpec::validate() const {
    if (id < 1 || id > 6)
        throw std::invalid_argument("ScenarioSpec: id must be 1..6, got " + std::to_string(id));
    if (train_sources.empty()) throw std::invalid_argument("ScenarioSpec: no train sources");
    if (id <= 3 && test_sources.empty())
        throw std::invalid_argument("ScenarioSpec: scenarios 1-3 need a test source");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("ScenarioSpec: val_fraction must be in [0,1)");
    if (id >= 5) {
        if (fold_count < 2) throw std::invalid_argument("ScenarioSpec: fold_count must be >= 2");
        if (fold_index < 0 || fold_index >= fold_count)
            throw std::invalid_argument("ScenarioSpec: fold_index out of range");
    }
}

ScenarioSplit scenario_split(const ScenarioSpec& spec, const std::vector<NamedSource>& sources) {
    spec.validate();
    Rng rng(spec.seed);
    ScenarioSplit out;

    if (spec.id <= 3) {
        std::vector<SampleRef> pool = collect(spec.train_sources, sources);
        auto idx = shuffled_indices(static_cast<int64_t>(pool.size()), rng);
        int64_t n_val =
            static_cast<int64_t>(static_cast<double>(pool.size()) * spec.val_fraction);
        for (size_t i = 0; i < idx.size(); ++i) {
            auto& dst = (static_cast<int64_t>(i) < n_val) ? out.validation : out.train;
            dst.push_back(pool[static_cast<size_t>(idx[i])]);
        }
        out.test = collect(spec.test_sources, sources);
        return out;
    }

    if (spec.id == 4) {
        std::vector<std::string> names = spec.train_sources;
        for (const auto& t : spec.test_sources)
            if (std::find(names.begin(), names.end(), t) == names.end()) names.push_back(t);
        std::vector<SampleRef> pool = collect(names, sources);
        const int64_t n = static_cast<int64_t>(pool.size());
        const int64_t n_val = n / 10;
        const int64_t n_test = n / 10;
        const int64_t n_train = n - n_val - n_test;
        auto idx = shuffled_indices(n, rng);
        for (int64_t i = 0; i < n; ++i) {
            auto& dst = (i < n_train) ? out.train : (i < n_train + n_val) ? out.validation
                                                                          : out.test;
            dst.push_back(pool[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
        }
        return out;
    }

    // Scenarios 5 and 6: k-fold cross-validation over the merged pool.
    std::vector<SampleRef> pool = collect(spec.train_sources, sources);
    auto folds = make_folds(static_cast<int64_t>(pool.size()), spec.fold_count, spec.seed);
    std::vector<int64_t> rest;
    for (int f = 0; f < spec.fold_count; ++f) {
        if (f == spec.fold_index) {
            for (int64_t i : folds[static_cast<size_t>(f)])
                out.test.push_back(pool[static_cast<size_t>(i)]);
        } else {
            rest.insert(rest.end(), folds[static_cast<size_t>(f)].begin(),
                        folds[static_cast<size_t>(f)].end());
        }
    }
    rng.shuffle(rest);
    int64_t n_val = static_cast<int64_t>(static_cast<double>(rest.size()) * spec.val_fraction);
    for (size_t i = 0; i < rest.size(); ++i) {
        auto& dst = (static_cast<int64_t>(i) < n_val) ? out.validation : out.train;
        dst.push_back(pool[static_cast<size_t>(rest[i])]);
    }
    return out;
}

void write_folds(const DatasetManifest& manifest, int k, uint64_t seed, const std::string& dir) {
    auto folds = make_folds(static_cast<int64_t>(manifest.entries.size()), k, seed);
    std::filesystem::create_directories(dir);
    for (int f = 0; f < k; ++f) {
        std::vector<std::string> ids;
        for (int64_t i : folds[static_cast<size_t>(f)])
            ids.push_back(manifest.entries[static_cast<size_t>(i)].id);
        std::sort(ids.begin(), ids.end());
        std::ofstream out(std::filesystem::path(dir) / ("fold_" + std::to_string(f)));
        if (!out)
            throw std::runtime_error("write_folds: cannot write fold_" + std::to_string(f) +
                                     " under " + dir);
        for (const auto& id : ids) out << id << "\n";
    }
}

}  // namespace agcu
