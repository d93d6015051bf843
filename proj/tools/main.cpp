#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "agcunet.h"

namespace {

void print_line(const char* line, void*) { std::printf("%s\n", line); }

int report(agcu_status st) {
    if (st != AGCU_OK) std::fprintf(stderr, "error: %s\n", agcu_last_error());
    return static_cast<int>(st);
}

/// Asks the library for its default config text and extracts the key names,
/// so every key becomes a same-name command-line flag without this binary
/// hardcoding the schema.
std::vector<std::string> config_keys() {
    agcu_config* c = agcu_config_create();
    size_t n = 0;
    agcu_config_text(c, nullptr, 0, &n);
    std::string text(n + 1, '\0');
    agcu_config_text(c, text.data(), text.size(), nullptr);
    text.resize(n);
    agcu_config_destroy(c);

    std::vector<std::string> keys;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        size_t end = eq;
        while (end > 0 && line[end - 1] == ' ') --end;
        keys.push_back(line.substr(0, end));
    }
    return keys;
}

/// --config plus one override flag per config key; the file applies first,
/// then the flags, so a flag always wins.
struct ConfigCli {
    std::string file;
    std::map<std::string, std::string> values;
    std::vector<std::string> keys;
    CLI::App* cmd = nullptr;

    void attach(CLI::App* c, const std::vector<std::string>& key_list) {
        cmd = c;
        keys = key_list;
        c->add_option("--config", file, "Config file of key = value lines");
        for (const auto& k : keys)
            c->add_option("--" + k, values[k], "Override the '" + k + "' config key");
    }

    bool any() const {
        if (!file.empty()) return true;
        for (const auto& k : keys)
            if (cmd->count("--" + k) > 0) return true;
        return false;
    }

    agcu_status apply(agcu_config* cfg) const {
        if (!file.empty()) {
            agcu_status st = agcu_config_load_file(cfg, file.c_str());
            if (st != AGCU_OK) return st;
        }
        for (const auto& k : keys) {
            if (cmd->count("--" + k) == 0) continue;
            agcu_status st = agcu_config_set(cfg, k.c_str(), values.at(k).c_str());
            if (st != AGCU_OK) return st;
        }
        return AGCU_OK;
    }
};

std::string checkpoint_text(const std::string& path, agcu_status& st) {
    size_t n = 0;
    st = agcu_checkpoint_config(path.c_str(), nullptr, 0, &n);
    if (st != AGCU_OK) return "";
    std::string text(n + 1, '\0');
    st = agcu_checkpoint_config(path.c_str(), text.data(), text.size(), nullptr);
    text.resize(n);
    return text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled attention-gated segmentation toolkit"};
    app.require_subcommand(1);
    agcu_set_log_callback(print_line, nullptr);

    std::vector<std::string> keys = config_keys();

    CLI::App* train = app.add_subcommand("train", "Two-phase training per the config's scenario");
    ConfigCli train_cfg;
    train_cfg.attach(train, keys);

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
    std::string eval_ckpt, eval_data, eval_out;
    bool eval_oracle = false;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--data", eval_data, "Dataset directory (images/ + masks/)")->required();
    eval->add_option("--out", eval_out, "Output directory for reports and curves")->required();
    eval->add_flag("--oracle", eval_oracle, "Score the ground truth against itself");
    ConfigCli eval_cfg;
    eval_cfg.attach(eval, keys);

    CLI::App* infer = app.add_subcommand("infer", "Segment one image with a checkpoint");
    std::string inf_ckpt, inf_image, inf_out, inf_attention;
    double inf_threshold = 0.0;
    infer->add_option("--checkpoint", inf_ckpt, "Checkpoint file")->required();
    infer->add_option("--image", inf_image, "Input image (PPM/PGM)")->required();
    infer->add_option("--out", inf_out, "Output mask path (PGM, {0,255})")->required();
    infer->add_option("--attention", inf_attention, "Also write the final gate map here");
    infer->add_option("--threshold", inf_threshold,
                      "Binarization threshold in (0,1); default: the checkpoint's");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::string scale = "full";
    gradcheck->add_option("--scale", scale, "Suite scale")
        ->check(CLI::IsMember({"ops", "blocks", "full"}))
        ->capture_default_str();

    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    std::string synth_out;
    int64_t synth_count = 200, synth_side = 64;
    uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "Output dataset directory")->required();
    synth->add_option("--count", synth_count, "Sample count")->capture_default_str();
    synth->add_option("--side", synth_side, "Image side (multiple of 32)")->capture_default_str();
    synth->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();

    CLI::App* folds = app.add_subcommand("folds", "Emit cross-validation fold files");
    std::string folds_data, folds_out;
    int folds_k = 5;
    uint64_t folds_seed = 0;
    folds->add_option("--data", folds_data, "Dataset directory")->required();
    folds->add_option("--out", folds_out, "Output directory for fold_<i> files")->required();
    folds->add_option("--count", folds_k, "Fold count")->capture_default_str();
    folds->add_option("--seed", folds_seed, "Shuffle seed")->capture_default_str();

    CLI::App* curves = app.add_subcommand("curves", "Export pooled ROC/PR curve CSVs");
    std::string cur_ckpt, cur_data, cur_out;
    curves->add_option("--checkpoint", cur_ckpt, "Checkpoint file")->required();
    curves->add_option("--data", cur_data, "Dataset directory")->required();
    curves->add_option("--out", cur_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*train) {
        agcu_config* cfg = agcu_config_create();
        agcu_status st = train_cfg.apply(cfg);
        if (st == AGCU_OK) st = agcu_train(cfg);
        agcu_config_destroy(cfg);
        return report(st);
    }

    if (*eval) {
        agcu_config* cfg = nullptr;
        agcu_status st = AGCU_OK;
        if (eval_cfg.any()) {
            // Overrides layer on top of the checkpoint's own config, so a
            // lone --threshold does not drag model keys back to defaults.
            std::string text = checkpoint_text(eval_ckpt, st);
            if (st == AGCU_OK) {
                cfg = agcu_config_create();
                st = agcu_config_apply_text(cfg, text.c_str());
            }
            if (st == AGCU_OK) st = eval_cfg.apply(cfg);
        }
        if (st == AGCU_OK)
            st = agcu_evaluate(cfg, eval_ckpt.c_str(), eval_data.c_str(), eval_out.c_str(),
                               eval_oracle ? 1 : 0);
        if (cfg) agcu_config_destroy(cfg);
        return report(st);
    }

    if (*infer)
        return report(agcu_infer(inf_ckpt.c_str(), inf_image.c_str(), inf_out.c_str(),
                                 inf_attention.empty() ? nullptr : inf_attention.c_str(),
                                 inf_threshold));

    if (*gradcheck) {
        double max_err = 0;
        agcu_status st = agcu_gradcheck(scale.c_str(), &max_err);
        if (st == AGCU_OK || st == AGCU_VERIFICATION_FAILURE)
            std::printf("max relative error: %.3g\n", max_err);
        return report(st);
    }

    if (*synth)
        return report(agcu_synth(synth_out.c_str(), synth_count, synth_side, synth_seed));

    if (*folds)
        return report(agcu_folds(folds_data.c_str(), folds_k, folds_seed, folds_out.c_str()));

    if (*curves)
        return report(agcu_curves(cur_ckpt.c_str(), cur_data.c_str(), cur_out.c_str()));

    return 0;
}
