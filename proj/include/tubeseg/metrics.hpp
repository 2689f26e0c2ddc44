#pragma once

// Evaluation: per-class IoU and F-score from pixel confusion counts, the
// Aggregated Jaccard Index over instance maps, and fold aggregation with
// 95% confidence intervals.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tubeseg/image.hpp"

namespace tubeseg {

struct ConfusionCounts {
    // Indexed by class id.
    std::vector<std::int64_t> tp, fp, fn;
    int num_classes = 0;
};

ConfusionCounts confusion_counts(const LabelMask& pred, const LabelMask& gt, int num_classes);

// TP/(TP+FP+FN); an empty-vs-empty class counts as perfect agreement (1).
double iou(const ConfusionCounts& counts, int cls);
// 2TP/(2TP+FP+FN); satisfies F = 2*IoU/(1+IoU).
double f_score(const ConfusionCounts& counts, int cls);

// Aggregated Jaccard Index: ground-truth instances are matched greedily in
// ascending id order to the unused prediction with the highest IoU;
// unmatched ground truth adds its area to the denominator, unused
// predictions add theirs.
double aji(const InstanceMap& gt, const InstanceMap& pred);

struct FoldAggregate {
    double mean = 0.0;
    double ci95_halfwidth = 0.0;
};

// Mean and t-based 95% confidence half-width (built-in t-table for n <= 30).
FoldAggregate aggregate_folds(const std::vector<double>& values);

// ---- report / CSV ----

struct ImageMetricsRow {
    std::string image;
    int fold = 0;
    double iou = 0.0;
    double fscore = 0.0;
    double aji = 0.0;
};

struct FoldMetrics {
    int fold = 0;
    double iou = 0.0;
    double fscore = 0.0;
    double aji = 0.0;
};

struct MetricsReport {
    std::vector<ImageMetricsRow> rows;
    std::vector<FoldMetrics> folds;
    FoldAggregate iou_agg, fscore_agg, aji_agg;

    static MetricsReport from_rows(std::vector<ImageMetricsRow> rows);
};

// One row per (fold, image), a summary row per fold, and a final aggregate
// row with mean and ci95. Byte-deterministic for identical inputs.
void write_metrics_csv(std::ostream& os, const MetricsReport& report);

}  // namespace tubeseg
