#include "agcunet.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <streambuf>
#include <string>
#include <vector>

#include "data/augment.hpp"
#include "data/dataset.hpp"
#include "data/image_io.hpp"
#include "data/resample.hpp"
#include "data/scenario.hpp"
#include "data/synth.hpp"
#include "json.hpp"
#include "train/checkpoint.hpp"
#include "train/config.hpp"
#include "train/gradsuite.hpp"
#include "train/trainer.hpp"

using namespace agcu;
namespace fs = std::filesystem;

extern "C" struct agcu_config {
    TrainConfig cfg;
};

namespace {

thread_local std::string g_last_error = "";

agcu_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void emit_log(const std::string& line) {
    if (g_log_fn) g_log_fn(line.c_str(), g_log_user);
}

agcu_status fail(agcu_status s, const std::string& msg) {
    g_last_error = msg;
    return s;
}

/// Runs `body`, translating exceptions into status codes.
template <typename F>
agcu_status guarded(F&& body) {
    try {
        return body();
    } catch (const std::invalid_argument& e) {
        return fail(AGCU_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(AGCU_RUNTIME_ERROR, e.what());
    }
}

void copy_out(const std::string& text, char* buf, size_t cap, size_t* written) {
    if (written) *written = text.size();
    if (buf && cap > 0) {
        size_t n = std::min(cap - 1, text.size());
        std::memcpy(buf, text.data(), n);
        buf[n] = '\0';
    }
}

agcu_status need(const void* p, const char* what, agcu_status& out) {
    if (!p) {
        out = fail(AGCU_INVALID_ARGUMENT, std::string(what) + " must not be NULL");
        return out;
    }
    out = AGCU_OK;
    return out;
}

/// Stream buffer that forwards complete lines to the run-log file and the
/// registered callback.
class LineTee : public std::streambuf {
public:
    explicit LineTee(std::ostream* file) : file_(file) {}

    int overflow(int c) override {
        if (c == EOF) return 0;
        if (c == '\n') {
            if (file_) (*file_) << line_ << "\n" << std::flush;
            emit_log(line_);
            line_.clear();
        } else {
            line_.push_back(static_cast<char>(c));
        }
        return c;
    }

private:
    std::ostream* file_;
    std::string line_;
};

struct Splits {
    std::vector<SamplePair> train;
    std::vector<SamplePair> val;
    std::map<std::string, std::vector<SamplePair>> test_by_source;
};

SamplePair load_sized(const ManifestEntry& entry, int64_t side) {
    return resize_pair(load_pair(entry), side);
}

Splits assemble_splits(const TrainConfig& cfg) {
    std::map<std::string, std::string> dir_of;
    std::vector<NamedSource> sources;
    auto add_dir = [&](const std::string& dir) {
        std::string name = fs::path(dir).filename().string();
        auto it = dir_of.find(name);
        if (it != dir_of.end()) {
            if (it->second != dir)
                throw std::invalid_argument("train: two sources share the name '" + name + "'");
            return;
        }
        dir_of[name] = dir;
        NamedSource src;
        src.name = name;
        src.manifest = scan_dataset(dir);
        sources.push_back(std::move(src));
    };
    for (const auto& d : cfg.train_sources) add_dir(d);
    for (const auto& d : cfg.test_sources) add_dir(d);

    ScenarioSplit split = scenario_split(cfg.scenario_spec(), sources);

    Splits out;
    for (const auto& ref : split.train) {
        SamplePair s = load_sized(ref.entry, cfg.side);
        if (cfg.augment) {
            auto vars = augment_twelve(s);
            out.train.push_back(std::move(s));
            for (auto& v : vars) out.train.push_back(std::move(v));
        } else {
            out.train.push_back(std::move(s));
        }
    }
    for (const auto& ref : split.validation) out.val.push_back(load_sized(ref.entry, cfg.side));
    for (const auto& ref : split.test)
        out.test_by_source[ref.source].push_back(load_sized(ref.entry, cfg.side));
    return out;
}

void write_eval_outputs(const EvalResult& res, const fs::path& out_dir,
                        const std::string& prefix) {
    fs::create_directories(out_dir);
    std::ofstream(out_dir / (prefix + "report.json")) << res.report.to_json() << "\n";
    std::ofstream(out_dir / (prefix + "report.csv")) << res.report.to_csv();
    if (res.has_curves) {
        std::ofstream(out_dir / (prefix + "roc.csv")) << res.curves.roc_csv();
        std::ofstream(out_dir / (prefix + "pr.csv")) << res.curves.pr_csv();
        nlohmann::json j;
        j["auc"] = res.curves.auc;
        j["map"] = res.curves.map;
        std::ofstream(out_dir / (prefix + "curves.json")) << j.dump(2) << "\n";
    }
}

/// Builds the network a checkpoint describes and loads its tensors. A
/// caller-supplied config overrides the embedded one; mismatches surface as
/// invalid arguments carrying the name diff.
std::pair<TrainConfig, CoupledNet<float>> model_from_checkpoint(const Checkpoint& ck,
                                                                const TrainConfig* override_cfg) {
    TrainConfig cfg =
        override_cfg ? *override_cfg : TrainConfig::from_text(ck.config_text);
    CoupledNet<float> net(cfg.net_config());
    net.init(cfg.seed);
    ParamSet<float> ps = net.param_set();
    try {
        restore_params(ps, ck);
    } catch (const std::runtime_error& e) {
        throw std::invalid_argument(e.what());
    }
    return {std::move(cfg), std::move(net)};
}

std::vector<SamplePair> load_dir_sized(const std::string& data_dir, int64_t side) {
    DatasetManifest m = scan_dataset(data_dir);
    std::vector<SamplePair> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) out.push_back(load_sized(e, side));
    return out;
}

}  // namespace

extern "C" {

agcu_config* agcu_config_create(void) { return new agcu_config(); }

void agcu_config_destroy(agcu_config* cfg) { delete cfg; }

agcu_status agcu_config_load_file(agcu_config* cfg, const char* path) {
    agcu_status st;
    if (need(cfg, "cfg", st) || need(path, "path", st)) return st;
    return guarded([&] {
        std::ifstream in(path);
        if (!in) throw std::runtime_error(std::string("config: cannot open ") + path);
        std::stringstream ss;
        ss << in.rdbuf();
        TrainConfig merged = cfg->cfg;
        merged.apply_text(ss.str());
        cfg->cfg = merged;
        return AGCU_OK;
    });
}

agcu_status agcu_config_set(agcu_config* cfg, const char* key, const char* value) {
    agcu_status st;
    if (need(cfg, "cfg", st) || need(key, "key", st) || need(value, "value", st)) return st;
    return guarded([&] {
        cfg->cfg.set(key, value);
        return AGCU_OK;
    });
}

agcu_status agcu_config_apply_text(agcu_config* cfg, const char* text) {
    agcu_status st;
    if (need(cfg, "cfg", st) || need(text, "text", st)) return st;
    return guarded([&] {
        TrainConfig merged = cfg->cfg;
        merged.apply_text(text);
        cfg->cfg = merged;
        return AGCU_OK;
    });
}

agcu_status agcu_config_text(const agcu_config* cfg, char* buf, size_t cap, size_t* written) {
    agcu_status st;
    if (need(cfg, "cfg", st)) return st;
    return guarded([&] {
        copy_out(cfg->cfg.to_text(), buf, cap, written);
        return AGCU_OK;
    });
}

agcu_status agcu_checkpoint_config(const char* checkpoint_path, char* buf, size_t cap,
                                   size_t* written) {
    agcu_status st;
    if (need(checkpoint_path, "checkpoint_path", st)) return st;
    return guarded([&] {
        copy_out(load_checkpoint(checkpoint_path).config_text, buf, cap, written);
        return AGCU_OK;
    });
}

const char* agcu_last_error(void) { return g_last_error.c_str(); }

void agcu_set_log_callback(agcu_log_fn fn, void* user) {
    g_log_fn = fn;
    g_log_user = user;
}

agcu_status agcu_train(const agcu_config* cfg_in) {
    agcu_status st;
    if (need(cfg_in, "cfg", st)) return st;
    return guarded([&] {
        const TrainConfig& cfg = cfg_in->cfg;
        cfg.validate();
        if (cfg.train_sources.empty())
            throw std::invalid_argument("train: config names no train_sources");

        fs::path out_dir(cfg.output_dir);
        fs::create_directories(out_dir);
        std::ofstream(out_dir / "config.txt") << cfg.to_text();

        Splits splits = assemble_splits(cfg);

        std::ofstream log_file(out_dir / "runlog.jsonl");
        if (!log_file)
            throw std::runtime_error("train: cannot write " +
                                     (out_dir / "runlog.jsonl").string());
        LineTee tee(&log_file);
        std::ostream runlog(&tee);

        CoupledNet<float> net(cfg.net_config());
        net.init(cfg.seed);
        TrainResult res = train_two_phase(cfg, splits.train, splits.val, net, &runlog);
        if (res.nan_abort)
            throw std::runtime_error("train: aborted on a non-finite loss; see runlog.jsonl");

        for (const auto& [source, samples] : splits.test_by_source) {
            EvalResult ev =
                evaluate_samples(net, samples, cfg.threshold, cfg.batch_size, false);
            write_eval_outputs(ev, out_dir, source + "_");
            nlohmann::json j;
            j["final"] = true;
            j["source"] = source;
            j["report"] = nlohmann::json::parse(ev.report.to_json());
            if (ev.has_curves) {
                j["auc"] = ev.curves.auc;
                j["map"] = ev.curves.map;
            }
            runlog << j.dump() << "\n";
        }
        return AGCU_OK;
    });
}

agcu_status agcu_evaluate(const agcu_config* cfg, const char* checkpoint_path,
                          const char* data_dir, const char* out_dir, int oracle) {
    agcu_status st;
    if (need(checkpoint_path, "checkpoint_path", st) || need(data_dir, "data_dir", st) ||
        need(out_dir, "out_dir", st))
        return st;
    return guarded([&] {
        Checkpoint ck = load_checkpoint(checkpoint_path);
        auto [run_cfg, net] = model_from_checkpoint(ck, cfg ? &cfg->cfg : nullptr);
        auto samples = load_dir_sized(data_dir, run_cfg.side);
        EvalResult res = evaluate_samples(net, samples, run_cfg.threshold, run_cfg.batch_size,
                                          oracle != 0);
        write_eval_outputs(res, out_dir, "");
        return AGCU_OK;
    });
}

agcu_status agcu_infer(const char* checkpoint_path, const char* image_path,
                       const char* mask_out_path, const char* attention_path,
                       double threshold) {
    agcu_status st;
    if (need(checkpoint_path, "checkpoint_path", st) || need(image_path, "image_path", st) ||
        need(mask_out_path, "mask_out_path", st))
        return st;
    return guarded([&] {
        Checkpoint ck = load_checkpoint(checkpoint_path);
        auto [cfg, net] = model_from_checkpoint(ck, nullptr);
        Tensor<float> image = read_image(image_path);
        if (image.dim(1) != cfg.side || image.dim(2) != cfg.side)
            image = bilinear_resize_chw(image, cfg.side, cfg.side);
        double th = (threshold > 0.0 && threshold < 1.0) ? threshold : cfg.threshold;
        Tensor<float> alpha;
        Tensor<float> mask = infer_mask(net, image, th, attention_path ? &alpha : nullptr);
        write_pgm(mask_out_path, mask);
        if (attention_path) {
            if (alpha.numel() == 0)
                throw std::invalid_argument(
                    "infer: this checkpoint's model has no attention gates");
            write_pgm(attention_path, alpha);
        }
        return AGCU_OK;
    });
}

agcu_status agcu_gradcheck(const char* scale, double* max_err) {
    agcu_status st;
    if (need(scale, "scale", st)) return st;
    try {
        GradReport report = gradient_suite(scale);
        for (const auto& [name, err] : report.items) {
            nlohmann::json j;
            j["check"] = name;
            j["err"] = err;
            emit_log(j.dump());
        }
        if (max_err) *max_err = report.max_err;
        if (!report.passed())
            return fail(AGCU_VERIFICATION_FAILURE,
                        "gradient check failed: worst relative error " +
                            std::to_string(report.max_err));
        return AGCU_OK;
    } catch (const std::invalid_argument& e) {
        return fail(AGCU_INVALID_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return fail(AGCU_RUNTIME_ERROR, e.what());
    }
}

agcu_status agcu_synth(const char* out_dir, int64_t count, int64_t side, uint64_t seed) {
    agcu_status st;
    if (need(out_dir, "out_dir", st)) return st;
    return guarded([&] {
        SyntheticConfig cfg;
        cfg.count = count;
        cfg.side = side;
        cfg.seed = seed;
        save_dataset(synth_generate(cfg), out_dir);
        return AGCU_OK;
    });
}

agcu_status agcu_folds(const char* data_dir, int fold_count, uint64_t seed,
                       const char* out_dir) {
    agcu_status st;
    if (need(data_dir, "data_dir", st) || need(out_dir, "out_dir", st)) return st;
    return guarded([&] {
        write_folds(scan_dataset(data_dir), fold_count, seed, out_dir);
        return AGCU_OK;
    });
}

agcu_status agcu_curves(const char* checkpoint_path, const char* data_dir,
                        const char* out_dir) {
    agcu_status st;
    if (need(checkpoint_path, "checkpoint_path", st) || need(data_dir, "data_dir", st) ||
        need(out_dir, "out_dir", st))
        return st;
    return guarded([&] {
        Checkpoint ck = load_checkpoint(checkpoint_path);
        auto [cfg, net] = model_from_checkpoint(ck, nullptr);
        auto samples = load_dir_sized(data_dir, cfg.side);
        EvalResult res =
            evaluate_samples(net, samples, cfg.threshold, cfg.batch_size, false);
        if (!res.has_curves)
            throw std::runtime_error("curves: the dataset has only one pixel class");
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "roc.csv") << res.curves.roc_csv();
        std::ofstream(fs::path(out_dir) / "pr.csv") << res.curves.pr_csv();
        nlohmann::json j;
        j["auc"] = res.curves.auc;
        j["map"] = res.curves.map;
        std::ofstream(fs::path(out_dir) / "curves.json") << j.dump(2) << "\n";
        return AGCU_OK;
    });
}

}  // extern "C"
