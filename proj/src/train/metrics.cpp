#include "train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace agcu {

template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& mask, double threshold) {
    if (pred.shape() != mask.shape())
        throw std::invalid_argument("confusion: prediction " + shape_str(pred.shape()) +
                                    " and mask " + shape_str(mask.shape()) + " differ");
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("confusion: threshold must lie in (0,1)");
    ConfusionCounts c;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        if (mask[i] != T(0) && mask[i] != T(1))
            throw std::invalid_argument("confusion: mask must be binary");
        bool p = static_cast<double>(pred[i]) >= threshold;
        bool g = mask[i] == T(1);
        if (p && g)
            ++c.tp;
        else if (p)
            ++c.fp;
        else if (g)
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

ImageMetrics image_metrics(const ConfusionCounts& c) {
    ImageMetrics m;
    bool mask_empty = c.tp + c.fn == 0;
    bool pred_empty = c.tp + c.fp == 0;
    if (mask_empty && pred_empty) {
        m.dice = m.iou = m.recall = m.precision = 1.0;
        return m;
    }
    auto td = static_cast<double>(c.tp);
    m.dice = 2.0 * td / static_cast<double>(2 * c.tp + c.fp + c.fn);
    m.iou = td / static_cast<double>(c.tp + c.fp + c.fn);
    m.recall = mask_empty ? 0.0 : td / static_cast<double>(c.tp + c.fn);
    m.precision = pred_empty ? 0.0 : td / static_cast<double>(c.tp + c.fp);
    return m;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

MetricReport macro_aggregate(std::vector<std::string> ids, std::vector<ImageMetrics> per_image,
                             double threshold) {
    if (per_image.empty()) throw std::invalid_argument("metrics: nothing to aggregate");
    if (ids.size() != per_image.size())
        throw std::invalid_argument("metrics: ids and records disagree in count");

    MetricReport r;
    r.threshold = threshold;
    r.ids = std::move(ids);
    r.per_image = std::move(per_image);

    auto n = static_cast<double>(r.per_image.size());
    for (const ImageMetrics& m : r.per_image) {
        r.mean.dice += m.dice;
        r.mean.iou += m.iou;
        r.mean.recall += m.recall;
        r.mean.precision += m.precision;
    }
    r.mean.dice /= n;
    r.mean.iou /= n;
    r.mean.recall /= n;
    r.mean.precision /= n;
    if (r.per_image.size() > 1) {
        ImageMetrics ss;
        for (const ImageMetrics& m : r.per_image) {
            ss.dice += (m.dice - r.mean.dice) * (m.dice - r.mean.dice);
            ss.iou += (m.iou - r.mean.iou) * (m.iou - r.mean.iou);
            ss.recall += (m.recall - r.mean.recall) * (m.recall - r.mean.recall);
            ss.precision += (m.precision - r.mean.precision) * (m.precision - r.mean.precision);
        }
        r.stddev.dice = std::sqrt(ss.dice / (n - 1));
        r.stddev.iou = std::sqrt(ss.iou / (n - 1));
        r.stddev.recall = std::sqrt(ss.recall / (n - 1));
        r.stddev.precision = std::sqrt(ss.precision / (n - 1));
    }
    return r;
}

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os << "id,dice,iou,recall,precision\n";
    for (size_t i = 0; i < per_image.size(); ++i) {
        const ImageMetrics& m = per_image[i];
        os << ids[i] << ',' << fmt(m.dice) << ',' << fmt(m.iou) << ',' << fmt(m.recall) << ','
           << fmt(m.precision) << '\n';
    }
    os << "mean," << fmt(mean.dice) << ',' << fmt(mean.iou) << ',' << fmt(mean.recall) << ','
       << fmt(mean.precision) << '\n';
    os << "std," << fmt(stddev.dice) << ',' << fmt(stddev.iou) << ',' << fmt(stddev.recall) << ','
       << fmt(stddev.precision) << '\n';
    return os.str();
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["threshold"] = threshold;
    j["count"] = per_image.size();
    auto block = [](const ImageMetrics& m) {
        return nlohmann::json{
            {"dice", m.dice}, {"iou", m.iou}, {"recall", m.recall}, {"precision", m.precision}};
    };
    j["mean"] = block(mean);
    j["std"] = block(stddev);
    j["images"] = nlohmann::json::array();
    for (size_t i = 0; i < per_image.size(); ++i) {
        nlohmann::json e = block(per_image[i]);
        e["id"] = ids[i];
        j["images"].push_back(std::move(e));
    }
    return j.dump(2);
}

CurveData curves(std::span<const double> scores, std::span<const uint8_t> labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("curves: scores and labels disagree in count");
    if (scores.empty()) throw std::invalid_argument("curves: empty input");
    int64_t pos = 0, neg = 0;
    for (uint8_t l : labels) {
        if (l > 1) throw std::invalid_argument("curves: labels must be 0 or 1");
        (l ? pos : neg)++;
    }
    if (pos == 0 || neg == 0)
        throw std::invalid_argument("curves: need at least one positive and one negative pixel");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    CurveData c;
    c.roc.emplace_back(0.0, 0.0);
    int64_t tp = 0, fp = 0;
    double prev_recall = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        // One sweep point per distinct score: ties enter together.
        double s = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tp : fp)++;
        double tpr = static_cast<double>(tp) / static_cast<double>(pos);
        double fpr = static_cast<double>(fp) / static_cast<double>(neg);
        double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
        c.roc.emplace_back(fpr, tpr);
        c.pr.emplace_back(tpr, prec);
        c.map += (tpr - prev_recall) * prec;
        prev_recall = tpr;
    }
    for (size_t k = 1; k < c.roc.size(); ++k)
        c.auc += (c.roc[k].first - c.roc[k - 1].first) * (c.roc[k].second + c.roc[k - 1].second) / 2.0;
    return c;
}

namespace {

std::string points_csv(const char* header, const std::vector<std::pair<double, double>>& pts) {
    std::ostringstream os;
    os << header << '\n';
    for (const auto& [x, y] : pts) os << fmt(x) << ',' << fmt(y) << '\n';
    return os.str();
}

}  // namespace

std::string CurveData::roc_csv() const { return points_csv("fpr,tpr", roc); }
std::string CurveData::pr_csv() const { return points_csv("recall,precision", pr); }

template ConfusionCounts confusion<float>(const Tensor<float>&, const Tensor<float>&, double);
template ConfusionCounts confusion<double>(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace agcu
