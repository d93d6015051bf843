#include "train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "core/rng.hpp"
#include "core/tape.hpp"
#include "json.hpp"
#include "train/losses.hpp"

namespace agcu {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_samples(const std::vector<SamplePair>& samples, int64_t side, const char* which) {
    if (samples.empty())
        throw std::invalid_argument(std::string("train: empty ") + which + " set");
    for (const auto& s : samples)
        if (s.image.dim(1) != side || s.image.dim(2) != side)
            throw std::invalid_argument(std::string("train: ") + which + " sample " + s.id +
                                        " is " + shape_str(s.image.shape()) +
                                        ", expected side " + std::to_string(side));
}

void fill_batch(const std::vector<SamplePair>& data, const std::vector<int64_t>& order,
                size_t from, size_t to, Tensor<float>& img, Tensor<float>& tgt) {
    const int64_t side = data[0].image.dim(1);
    const int64_t plane = side * side;
    for (size_t i = from; i < to; ++i) {
        const auto& s = data[static_cast<size_t>(order[i])];
        float* id = img.data() + static_cast<int64_t>(i - from) * 3 * plane;
        std::copy(s.image.vec().begin(), s.image.vec().end(), id);
        float* td = tgt.data() + static_cast<int64_t>(i - from) * plane;
        std::copy(s.mask.vec().begin(), s.mask.vec().end(), td);
    }
}

std::vector<std::pair<std::string, Tensor<float>*>> phase_params(ParamSet<float>& ps, int phase,
                                                                 bool freeze_first) {
    std::vector<std::pair<std::string, Tensor<float>*>> out;
    for (const auto& [name, t] : ps.params) {
        bool is_u1 = name.rfind("u1.", 0) == 0;
        if (phase == 1 ? is_u1 : (!freeze_first || !is_u1)) out.emplace_back(name, t);
    }
    if (out.empty()) throw std::invalid_argument("train: phase " + std::to_string(phase) +
                                                 " has no trainable parameters");
    return out;
}

// Macro mean dice/iou of the monitored probability map over a sample set.
std::pair<double, double> validate_phase(CoupledNet<float>& net,
                                         const std::vector<SamplePair>& val, int phase,
                                         double threshold, int64_t batch_size) {
    const int64_t side = val[0].image.dim(1);
    const int64_t plane = side * side;
    std::vector<int64_t> order(val.size());
    std::iota(order.begin(), order.end(), 0);
    double dice_sum = 0, iou_sum = 0;
    for (size_t from = 0; from < val.size(); from += static_cast<size_t>(batch_size)) {
        size_t to = std::min(val.size(), from + static_cast<size_t>(batch_size));
        int64_t b = static_cast<int64_t>(to - from);
        Tensor<float> img({b, 3, side, side}), tgt({b, 1, side, side});
        fill_batch(val, order, from, to, img, tgt);
        Tape<float> tape;
        auto out = net.forward(tape, tape.constant(img), BnMode::Eval);
        const Tensor<float>& p = tape.value(phase == 1 ? out.p1 : out.p2);
        for (int64_t i = 0; i < b; ++i) {
            Tensor<float> pred({side, side});
            std::copy(p.vec().begin() + i * plane, p.vec().begin() + (i + 1) * plane,
                      pred.vec().begin());
            ConfusionCounts cc =
                confusion(pred, val[from + static_cast<size_t>(i)].mask, threshold);
            ImageMetrics m = image_metrics(cc);
            dice_sum += m.dice;
            iou_sum += m.iou;
        }
    }
    double n = static_cast<double>(val.size());
    return {dice_sum / n, iou_sum / n};
}

struct PhaseOutcome {
    double best_val = 0;
    bool nan_abort = false;
};

PhaseOutcome run_phase(int phase, const TrainConfig& cfg, const std::vector<SamplePair>& train,
                       const std::vector<SamplePair>& val, CoupledNet<float>& net,
                       ParamSet<float>& ps, Rng& rng, std::vector<EpochRecord>& records,
                       std::ostream* runlog, const std::string& ckpt_path) {
    const int64_t side = cfg.side;
    auto params = phase_params(ps, phase, cfg.freeze_first_unet);
    SgdMomentum<float> opt(params, static_cast<float>(cfg.lr), static_cast<float>(cfg.momentum));

    std::vector<int64_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    PhaseOutcome outcome;
    double best_val = -1;
    int64_t best_epoch = 0;
    Checkpoint best;

    for (int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        auto t0 = Clock::now();
        rng.shuffle(order);
        double loss_sum = 0;
        bool nan_hit = false;
        for (size_t from = 0; from < train.size() && !nan_hit;) {
            size_t to = std::min(train.size(), from + static_cast<size_t>(cfg.batch_size));
            // A trailing single sample joins the previous batch: train-mode
            // normalization needs at least two values per channel once the
            // bottleneck reaches 1x1.
            if (train.size() - to == 1) to = train.size();
            int64_t b = static_cast<int64_t>(to - from);
            Tensor<float> img({b, 3, side, side}), tgt({b, 1, side, side});
            fill_batch(train, order, from, to, img, tgt);
            Tape<float> tape;
            Var target = tape.constant(tgt);
            auto out = net.forward(tape, tape.constant(img), BnMode::Train);
            Var loss = (phase == 1)
                           ? affine(tape, tversky_index(tape, out.p1, target, cfg.tversky),
                                    -1.0f, 1.0f)
                           : coupled_loss(tape, out.p1, out.p2, target, cfg.tversky);
            double l = static_cast<double>(tape.value(loss).data()[0]);
            if (!std::isfinite(l)) {
                nan_hit = true;
                loss_sum = l;
                break;
            }
            loss_sum += l * static_cast<double>(b);
            tape.backward(loss);
            opt.step();
            from = to;
        }

        EpochRecord rec;
        rec.phase = phase;
        rec.epoch = epoch;
        if (nan_hit) {
            rec.train_loss = loss_sum;
            rec.val_mdice = rec.val_miou = std::nan("");
            rec.wall_s = seconds_since(t0);
            records.push_back(rec);
            if (runlog) *runlog << rec.to_json() << "\n" << std::flush;
            outcome.nan_abort = true;
            break;
        }
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        auto [mdice, miou] = validate_phase(net, val, phase, cfg.threshold, cfg.batch_size);
        rec.val_mdice = mdice;
        rec.val_miou = miou;
        rec.wall_s = seconds_since(t0);
        records.push_back(rec);
        if (runlog) *runlog << rec.to_json() << "\n" << std::flush;

        if (mdice > best_val) {
            best_val = mdice;
            best_epoch = epoch;
            best = snapshot_params(ps);
            best.config_text = cfg.to_text();
            best.phase = phase;
            best.epoch = epoch;
            best.best_val_mdice = best_val;
            for (size_t i = 0; i < opt.size(); ++i) {
                Tensor<float> v({static_cast<int64_t>(opt.velocity(i).size())});
                std::copy(opt.velocity(i).begin(), opt.velocity(i).end(), v.vec().begin());
                best.velocities.emplace_back(opt.name(i), std::move(v));
            }
            save_checkpoint(best, ckpt_path);
        }
        if (epoch - best_epoch >= cfg.patience) break;
    }

    if (best_epoch > 0) restore_params(ps, best);
    outcome.best_val = best_val;
    return outcome;
}

}  // namespace

std::string EpochRecord::to_json() const {
    nlohmann::json j;
    j["phase"] = phase;
    j["epoch"] = epoch;
    j["train_loss"] = train_loss;
    j["val_mdice"] = val_mdice;
    j["val_miou"] = val_miou;
    j["wall_s"] = wall_s;
    return j.dump();
}

TrainResult train_two_phase(const TrainConfig& cfg, const std::vector<SamplePair>& train,
                            const std::vector<SamplePair>& val, CoupledNet<float>& net,
                            std::ostream* runlog) {
    cfg.validate();
    check_samples(train, cfg.side, "train");
    check_samples(val, cfg.side, "validation");
    std::filesystem::create_directories(cfg.output_dir);

    ParamSet<float> ps = net.param_set();
    Rng rng(cfg.seed ^ 0x74726e5f6c6f6f70ULL);

    TrainResult result;
    std::string p1_path = (std::filesystem::path(cfg.output_dir) / "phase1_best.ckpt").string();
    std::string p2_path = (std::filesystem::path(cfg.output_dir) / "best.ckpt").string();

    PhaseOutcome o1 = run_phase(1, cfg, train, val, net, ps, rng, result.epochs, runlog, p1_path);
    if (o1.nan_abort) {
        result.nan_abort = true;
        result.checkpoint_path = p1_path;
        result.best_val_mdice = o1.best_val;
        return result;
    }

    PhaseOutcome o2 = run_phase(2, cfg, train, val, net, ps, rng, result.epochs, runlog, p2_path);
    result.nan_abort = o2.nan_abort;
    result.best_val_mdice = o2.best_val;
    result.checkpoint_path = p2_path;
    return result;
}

EvalResult evaluate_samples(CoupledNet<float>& net, const std::vector<SamplePair>& samples,
                            double threshold, int64_t batch_size, bool oracle) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
    if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
    const int64_t side = net.cfg.side;
    check_samples(samples, side, "evaluation");
    const int64_t plane = side * side;

    std::vector<int64_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::string> ids;
    std::vector<ImageMetrics> per_image;
    std::vector<double> scores;
    std::vector<uint8_t> labels;
    scores.reserve(samples.size() * static_cast<size_t>(plane));
    labels.reserve(samples.size() * static_cast<size_t>(plane));

    for (size_t from = 0; from < samples.size(); from += static_cast<size_t>(batch_size)) {
        size_t to = std::min(samples.size(), from + static_cast<size_t>(batch_size));
        int64_t b = static_cast<int64_t>(to - from);
        Tensor<float> img({b, 3, side, side}), tgt({b, 1, side, side});
        fill_batch(samples, order, from, to, img, tgt);
        Tensor<float> probs;
        if (oracle) {
            probs = tgt;
        } else {
            Tape<float> tape;
            auto out = net.forward(tape, tape.constant(img), BnMode::Eval);
            probs = tape.value(out.p2);
        }
        for (int64_t i = 0; i < b; ++i) {
            const auto& s = samples[from + static_cast<size_t>(i)];
            Tensor<float> pred({side, side});
            std::copy(probs.vec().begin() + i * plane, probs.vec().begin() + (i + 1) * plane,
                      pred.vec().begin());
            ids.push_back(s.id);
            per_image.push_back(image_metrics(confusion(pred, s.mask, threshold)));
            for (int64_t p = 0; p < plane; ++p) {
                scores.push_back(static_cast<double>(pred.data()[p]));
                labels.push_back(s.mask.data()[p] == 1.0f ? 1 : 0);
            }
        }
    }

    EvalResult res;
    res.report = macro_aggregate(ids, per_image, threshold);
    bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (has_pos && has_neg) {
        res.curves = curves(scores, labels);
        res.has_curves = true;
    }
    return res;
}

Tensor<float> infer_mask(CoupledNet<float>& net, const Tensor<float>& image, double threshold,
                         Tensor<float>* alpha_out) {
    if (image.shape().size() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("infer: image must be [3,H,W], got " +
                                    shape_str(image.shape()));
    const int64_t side = net.cfg.side;
    if (image.dim(1) != side || image.dim(2) != side)
        throw std::invalid_argument("infer: image is " + shape_str(image.shape()) +
                                    ", expected side " + std::to_string(side));
    Tensor<float> batch({1, 3, side, side});
    std::copy(image.vec().begin(), image.vec().end(), batch.vec().begin());
    Tape<float> tape;
    auto out = net.forward(tape, tape.constant(batch), BnMode::Eval);
    const Tensor<float>& p = tape.value(out.p2);
    Tensor<float> mask({side, side});
    for (int64_t i = 0; i < side * side; ++i)
        mask.data()[i] = (static_cast<double>(p.data()[i]) >= threshold) ? 1.0f : 0.0f;
    if (alpha_out) {
        if (out.alpha_final.valid()) {
            const Tensor<float>& a = tape.value(out.alpha_final);
            *alpha_out = Tensor<float>({side, side});
            std::copy(a.vec().begin(), a.vec().end(), alpha_out->vec().begin());
        } else {
            *alpha_out = Tensor<float>();
        }
    }
    return mask;
}

}  // namespace agcu
