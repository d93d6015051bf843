#include "train/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace agcu {
namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    }
}

int64_t parse_int(const std::string& key, const std::string& v) {
    int64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
        throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += v[i];
    }
    return out;
}

}  // namespace

CoupledNetConfig TrainConfig::net_config() const {
    CoupledNetConfig c = CoupledNetConfig::from_base_width(side, base_width, cardinality, radix);
    c.attention_gates = attention_gates;
    c.cross_connections = cross_connections;
    c.second_unet = second_unet;
    if (bridge == "multiply") {
        c.bridge = CoupledNetConfig::Bridge::Multiply;
    } else if (bridge == "concat") {
        c.bridge = CoupledNetConfig::Bridge::ConcatProject;
    } else {
        throw std::invalid_argument("config: bridge must be 'multiply' or 'concat', got '" +
                                    bridge + "'");
    }
    c.bridge_from_logits = bridge_from_logits;
    return c;
}

ScenarioSpec TrainConfig::scenario_spec() const {
    ScenarioSpec s;
    s.id = scenario;
    for (const auto& p : train_sources)
        s.train_sources.push_back(std::filesystem::path(p).filename().string());
    for (const auto& p : test_sources)
        s.test_sources.push_back(std::filesystem::path(p).filename().string());
    s.val_fraction = val_fraction;
    s.fold_count = fold_count;
    s.fold_index = fold_index;
    s.seed = seed;
    return s;
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw std::invalid_argument("config: lr must be positive");
    if (!(momentum >= 0 && momentum < 1))
        throw std::invalid_argument("config: momentum must be in [0,1)");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("config: max_epochs must be >= 1");
    if (patience < 0) throw std::invalid_argument("config: patience must be >= 0");
    if (!(threshold > 0 && threshold < 1))
        throw std::invalid_argument("config: threshold must be in (0,1)");
    tversky.validate();
    net_config().validate();
}

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out << "lr = " << fmt_double(lr) << "\n";
    out << "momentum = " << fmt_double(momentum) << "\n";
    out << "batch_size = " << batch_size << "\n";
    out << "max_epochs = " << max_epochs << "\n";
    out << "patience = " << patience << "\n";
    out << "seed = " << seed << "\n";
    out << "freeze_first_unet = " << (freeze_first_unet ? "true" : "false") << "\n";
    out << "tversky_alpha = " << fmt_double(tversky.alpha) << "\n";
    out << "tversky_beta = " << fmt_double(tversky.beta) << "\n";
    out << "tversky_eps = " << fmt_double(tversky.eps) << "\n";
    out << "side = " << side << "\n";
    out << "base_width = " << base_width << "\n";
    out << "cardinality = " << cardinality << "\n";
    out << "radix = " << radix << "\n";
    out << "attention_gates = " << (attention_gates ? "true" : "false") << "\n";
    out << "cross_connections = " << (cross_connections ? "true" : "false") << "\n";
    out << "second_unet = " << (second_unet ? "true" : "false") << "\n";
    out << "bridge = " << bridge << "\n";
    out << "bridge_from_logits = " << (bridge_from_logits ? "true" : "false") << "\n";
    out << "scenario = " << scenario << "\n";
    out << "train_sources = " << join(train_sources) << "\n";
    out << "test_sources = " << join(test_sources) << "\n";
    out << "val_fraction = " << fmt_double(val_fraction) << "\n";
    out << "fold_count = " << fold_count << "\n";
    out << "fold_index = " << fold_index << "\n";
    out << "augment = " << (augment ? "true" : "false") << "\n";
    out << "threshold = " << fmt_double(threshold) << "\n";
    out << "output_dir = " << output_dir << "\n";
    return out.str();
}

void TrainConfig::set(const std::string& rawkey, const std::string& rawvalue) {
    const std::string key = trim(rawkey), value = trim(rawvalue);
    if (key == "lr") lr = parse_double(key, value);
    else if (key == "momentum") momentum = parse_double(key, value);
    else if (key == "batch_size") batch_size = parse_int(key, value);
    else if (key == "max_epochs") max_epochs = parse_int(key, value);
    else if (key == "patience") patience = parse_int(key, value);
    else if (key == "seed") seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "freeze_first_unet") freeze_first_unet = parse_bool(key, value);
    else if (key == "tversky_alpha") tversky.alpha = parse_double(key, value);
    else if (key == "tversky_beta") tversky.beta = parse_double(key, value);
    else if (key == "tversky_eps") tversky.eps = parse_double(key, value);
    else if (key == "side") side = parse_int(key, value);
    else if (key == "base_width") base_width = parse_int(key, value);
    else if (key == "cardinality") cardinality = static_cast<int>(parse_int(key, value));
    else if (key == "radix") radix = static_cast<int>(parse_int(key, value));
    else if (key == "attention_gates") attention_gates = parse_bool(key, value);
    else if (key == "cross_connections") cross_connections = parse_bool(key, value);
    else if (key == "second_unet") second_unet = parse_bool(key, value);
    else if (key == "bridge") bridge = value;
    else if (key == "bridge_from_logits") bridge_from_logits = parse_bool(key, value);
    else if (key == "scenario") scenario = static_cast<int>(parse_int(key, value));
    else if (key == "train_sources") train_sources = parse_list(value);
    else if (key == "test_sources") test_sources = parse_list(value);
    else if (key == "val_fraction") val_fraction = parse_double(key, value);
    else if (key == "fold_count") fold_count = static_cast<int>(parse_int(key, value));
    else if (key == "fold_index") fold_index = static_cast<int>(parse_int(key, value));
    else if (key == "augment") augment = parse_bool(key, value);
    else if (key == "threshold") threshold = parse_double(key, value);
    else if (key == "output_dir") output_dir = value;
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

void TrainConfig::apply_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not 'key = value': " + t);
        set(t.substr(0, eq), t.substr(eq + 1));
    }
}

TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig cfg;
    cfg.apply_text(text);
    return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

}  // namespace agcu
