#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace agcu {

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Pixel counts of the prediction binarized at `threshold` against a binary
/// mask of the same shape.
template <typename T>
ConfusionCounts confusion(const Tensor<T>& pred, const Tensor<T>& mask, double threshold);

struct ImageMetrics {
    double dice = 0, iou = 0, recall = 0, precision = 0;
};

/// Overlap metrics with the empty-map convention: when mask and prediction
/// are both empty every metric is 1, when exactly one is empty it is 0.
ImageMetrics image_metrics(const ConfusionCounts& c);

struct MetricReport {
    double threshold = 0.5;
    std::vector<std::string> ids;
    std::vector<ImageMetrics> per_image;
    ImageMetrics mean;
    ImageMetrics stddev;

    std::string to_csv() const;
    std::string to_json() const;
};

/// Macro aggregation: arithmetic mean and sample standard deviation across
/// images (zero deviation for a single image).
MetricReport macro_aggregate(std::vector<std::string> ids, std::vector<ImageMetrics> per_image,
                             double threshold);

struct CurveData {
    std::vector<std::pair<double, double>> roc;  // (false positive rate, true positive rate)
    std::vector<std::pair<double, double>> pr;   // (recall, precision)
    double auc = 0;
    double map = 0;

    std::string roc_csv() const;
    std::string pr_csv() const;
};

/// Threshold sweep over the pooled pixel scores. AUC is the trapezoid area
/// under the ROC; MAP is the area under the precision-recall step curve.
/// Requires at least one positive and one negative label.
CurveData curves(std::span<const double> scores, std::span<const uint8_t> labels);

}  // namespace agcu
