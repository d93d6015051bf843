#include "train/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace agcu {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'A', 'G', 'C', 'U', 'C', 'K', 'P', 'T'};

template <typename V>
void put(std::ostream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& path) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw std::runtime_error("checkpoint: " + path + ": truncated");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& path) {
    uint64_t n = get<uint64_t>(in, path);
    if (n > (1ULL << 30)) throw std::runtime_error("checkpoint: " + path + ": corrupt length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("checkpoint: " + path + ": truncated");
    return s;
}

void put_section(std::ostream& out, const std::vector<std::pair<std::string, Tensor<float>>>& v) {
    put<uint64_t>(out, v.size());
    for (const auto& [name, t] : v) {
        put_string(out, name);
        put<uint32_t>(out, static_cast<uint32_t>(t.shape().size()));
        for (int64_t d : t.shape()) put<int64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
    }
}

std::vector<std::pair<std::string, Tensor<float>>> get_section(std::istream& in,
                                                               const std::string& path) {
    uint64_t n = get<uint64_t>(in, path);
    if (n > (1ULL << 24)) throw std::runtime_error("checkpoint: " + path + ": corrupt count");
    std::vector<std::pair<std::string, Tensor<float>>> out;
    out.reserve(n);
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = get_string(in, path);
        uint32_t rank = get<uint32_t>(in, path);
        if (rank > 8) throw std::runtime_error("checkpoint: " + path + ": corrupt rank");
        Shape shape;
        for (uint32_t d = 0; d < rank; ++d) shape.push_back(get<int64_t>(in, path));
        Tensor<float> t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
        if (!in) throw std::runtime_error("checkpoint: " + path + ": truncated");
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    put<uint32_t>(out, ck.version);
    put_string(out, ck.config_text);
    put<int32_t>(out, ck.phase);
    put<int64_t>(out, ck.epoch);
    put<double>(out, ck.best_val_mdice);
    put_section(out, ck.params);
    put_section(out, ck.buffers);
    put_section(out, ck.velocities);
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: " + path + ": bad magic header");
    Checkpoint ck;
    ck.version = get<uint32_t>(in, path);
    if (ck.version != 1)
        throw std::runtime_error("checkpoint: " + path + ": unsupported version " +
                                 std::to_string(ck.version));
    ck.config_text = get_string(in, path);
    ck.phase = get<int32_t>(in, path);
    ck.epoch = get<int64_t>(in, path);
    ck.best_val_mdice = get<double>(in, path);
    ck.params = get_section(in, path);
    ck.buffers = get_section(in, path);
    ck.velocities = get_section(in, path);
    return ck;
}

Checkpoint snapshot_params(const ParamSet<float>& ps) {
    Checkpoint ck;
    for (const auto& [name, t] : ps.params) ck.params.emplace_back(name, *t);
    for (const auto& [name, t] : ps.buffers) ck.buffers.emplace_back(name, *t);
    return ck;
}

void restore_params(const ParamSet<float>& ps, const Checkpoint& ck) {
    auto apply = [](const std::vector<std::pair<std::string, Tensor<float>*>>& dst,
                    const std::vector<std::pair<std::string, Tensor<float>>>& src,
                    const char* kind, std::ostringstream& diff) {
        std::map<std::string, const Tensor<float>*> by_name;
        for (const auto& [name, t] : src) by_name.emplace(name, &t);
        for (const auto& [name, t] : dst) {
            auto it = by_name.find(name);
            if (it == by_name.end()) {
                diff << "  missing " << kind << ": " << name << "\n";
                continue;
            }
            if (it->second->shape() != t->shape()) {
                diff << "  shape mismatch for " << name << ": model "
                     << shape_str(t->shape()) << ", checkpoint "
                     << shape_str(it->second->shape()) << "\n";
            }
            by_name.erase(it);
        }
        for (const auto& [name, t] : by_name) diff << "  unexpected " << kind << ": " << name
                                                   << "\n";
    };

    std::ostringstream diff;
    apply(ps.params, ck.params, "parameter", diff);
    apply(ps.buffers, ck.buffers, "buffer", diff);
    if (!diff.str().empty())
        throw std::runtime_error("checkpoint does not match the model:\n" + diff.str());

    for (const auto& [name, src] : ck.params) {
        Tensor<float>* dst = ps.find_param(name);
        std::copy(src.vec().begin(), src.vec().end(), dst->vec().begin());
    }
    for (const auto& [name, src] : ck.buffers) {
        for (const auto& [n, t] : ps.buffers)
            if (n == name) std::copy(src.vec().begin(), src.vec().end(), t->vec().begin());
    }
}

}  // namespace agcu
