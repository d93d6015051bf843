#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>

#include "data/image_io.hpp"
#include "data/resample.hpp"

namespace fs = std::filesystem;

namespace agcu {
namespace {

constexpr float kMaskThreshold = 128.0f / 255.0f;

uint64_t fnv1a(uint64_t h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

bool netpbm_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::map<std::string, std::string> list_by_stem(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || !netpbm_file(e.path())) continue;
        std::string stem = e.path().stem().string();
        auto [it, inserted] = out.emplace(stem, e.path().string());
        if (!inserted)
            throw std::runtime_error("scan_dataset: duplicate id '" + stem + "' in " +
                                     dir.string());
    }
    return out;
}

}  // namespace

void SamplePair::validate() const {
    if (image.shape().size() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("SamplePair " + id + ": image must be [3,H,W], got " +
                                    shape_str(image.shape()));
    if (mask.shape().size() != 2 || mask.dim(0) != image.dim(1) || mask.dim(1) != image.dim(2))
        throw std::invalid_argument("SamplePair " + id + ": mask " + shape_str(mask.shape()) +
                                    " does not match image " + shape_str(image.shape()));
    for (float v : mask.vec())
        if (v != 0.0f && v != 1.0f)
            throw std::invalid_argument("SamplePair " + id + ": mask is not binary");
}

std::string DatasetManifest::to_text() const {
    std::ostringstream out;
    for (const auto& e : entries) out << e.id << "\n";
    return out.str();
}

DatasetManifest scan_dataset(const std::string& dir) {
    fs::path root(dir);
    fs::path images = root / "images";
    fs::path masks = root / "masks";
    if (!fs::is_directory(images) || !fs::is_directory(masks))
        throw std::runtime_error("scan_dataset: " + dir + " must contain images/ and masks/");

    auto image_files = list_by_stem(images);
    auto mask_files = list_by_stem(masks);

    DatasetManifest m;
    m.root = dir;
    for (const auto& [id, path] : image_files) {
        auto it = mask_files.find(id);
        if (it == mask_files.end()) {
            m.orphans.push_back("images/" + fs::path(path).filename().string());
        } else {
            m.entries.push_back({id, path, it->second});
        }
    }
    for (const auto& [id, path] : mask_files) {
        if (!image_files.count(id))
            m.orphans.push_back("masks/" + fs::path(path).filename().string());
    }
    std::sort(m.orphans.begin(), m.orphans.end());

    uint64_t h = 1469598103934665603ULL;
    for (const auto& e : m.entries) {
        h = fnv1a(h, e.id);
        h = fnv1a(h, fs::path(e.image_path).filename().string());
        h = fnv1a(h, fs::path(e.mask_path).filename().string());
    }
    m.checksum = h;
    return m;
}

SamplePair load_pair(const ManifestEntry& entry) {
    SamplePair s;
    s.id = entry.id;
    s.image = read_image(entry.image_path);
    s.mask = read_gray(entry.mask_path);
    for (float& v : s.mask.vec()) v = (v >= kMaskThreshold) ? 1.0f : 0.0f;
    s.validate();
    return s;
}

std::vector<SamplePair> load_dataset(const DatasetManifest& manifest) {
    std::vector<SamplePair> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) out.push_back(load_pair(e));
    return out;
}

SamplePair resize_pair(const SamplePair& s, int64_t side) {
    if (side <= 0 || side % 32 != 0)
        throw std::invalid_argument("resize_pair: side must be a positive multiple of 32, got " +
                                    std::to_string(side));
    s.validate();
    if (s.image.dim(1) == side && s.image.dim(2) == side) return s;
    SamplePair out;
    out.id = s.id;
    out.image = bilinear_resize_chw(s.image, side, side);
    out.mask = nearest_resize_hw(s.mask, side, side);
    return out;
}

void save_dataset(const std::vector<SamplePair>& samples, const std::string& dir) {
    fs::path root(dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    for (const auto& s : samples) {
        s.validate();
        write_ppm((root / "images" / (s.id + ".ppm")).string(), s.image);
        write_pgm((root / "masks" / (s.id + ".pgm")).string(), s.mask);
    }
}

}  // namespace agcu
