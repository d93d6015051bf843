#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace agcu {

/// One image/mask pair. The image is [3,H,W] in [0,1]; the mask is [H,W]
/// holding exactly 0 or 1.
struct SamplePair {
    std::string id;
    Tensor<float> image;
    Tensor<float> mask;

    void validate() const;
};

struct ManifestEntry {
    std::string id;
    std::string image_path;
    std::string mask_path;
};

/// Scan result for one dataset directory. Entries are ordered
/// lexicographically by id; the checksum covers ids and relative paths, so
/// two scans of the same tree agree bit for bit. Files present on only one
/// side of the images/masks pairing are listed in `orphans` and excluded.
struct DatasetManifest {
    std::string root;
    std::vector<ManifestEntry> entries;
    std::vector<std::string> orphans;
    uint64_t checksum = 0;

    std::string to_text() const;
};

/// Scans `dir`, which must contain images/ and masks/ subdirectories with
/// PPM/PGM files matched by basename (extension ignored).
DatasetManifest scan_dataset(const std::string& dir);

/// Decodes one pair. Mask pixels at gray 128/255 or above become 1, the rest
/// 0. Unreadable or malformed files raise an error naming the path.
SamplePair load_pair(const ManifestEntry& entry);

std::vector<SamplePair> load_dataset(const DatasetManifest& manifest);

/// Resamples a pair to side x side: bilinear for the image,
/// nearest-neighbor for the mask so it stays binary. `side` must be a
/// positive multiple of 32. A pair already at the target size is returned
/// unchanged.
SamplePair resize_pair(const SamplePair& s, int64_t side);

/// Writes pairs under dir/images and dir/masks as <id>.ppm / <id>.pgm.
void save_dataset(const std::vector<SamplePair>& samples, const std::string& dir);

}  // namespace agcu
