#include "tubeseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <stdexcept>

namespace tubeseg {

ConfusionCounts confusion_counts(const LabelMask& pred, const LabelMask& gt, int num_classes) {
    require_same_extent(pred.width, pred.height, gt.width, gt.height, "confusion_counts");
    ConfusionCounts c;
    c.num_classes = num_classes;
    c.tp.assign(num_classes, 0);
    c.fp.assign(num_classes, 0);
    c.fn.assign(num_classes, 0);
    for (std::size_t i = 0; i < pred.ids.size(); ++i) {
        const int p = pred.ids[i], g = gt.ids[i];
        if (p >= num_classes || g >= num_classes)
            throw std::invalid_argument("confusion_counts: class id out of range");
        if (p == g) {
            ++c.tp[p];
        } else {
            ++c.fp[p];
            ++c.fn[g];
        }
    }
    return c;
}

double iou(const ConfusionCounts& counts, int cls) {
    const auto tp = counts.tp[cls], fp = counts.fp[cls], fn = counts.fn[cls];
    const auto denom = tp + fp + fn;
    if (denom == 0) return 1.0;  // class absent from both masks
    return double(tp) / double(denom);
}

double f_score(const ConfusionCounts& counts, int cls) {
    const auto tp = counts.tp[cls], fp = counts.fp[cls], fn = counts.fn[cls];
    const auto denom = 2 * tp + fp + fn;
    if (denom == 0) return 1.0;
    return 2.0 * double(tp) / double(denom);
}

double aji(const InstanceMap& gt, const InstanceMap& pred) {
    require_same_extent(pred.width, pred.height, gt.width, gt.height, "aji");
    const int ng = gt.count, np = pred.count;
    if (ng == 0 && np == 0) return 1.0;

    std::vector<std::int64_t> gt_area(ng + 1, 0), pred_area(np + 1, 0);
    // Sparse intersection counts keyed by (gt id, pred id).
    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> inter;
    for (std::size_t i = 0; i < gt.ids.size(); ++i) {
        const std::int32_t g = gt.ids[i], p = pred.ids[i];
        if (g > 0) ++gt_area[g];
        if (p > 0) ++pred_area[p];
        if (g > 0 && p > 0) ++inter[{g, p}];
    }

    std::vector<bool> pred_used(np + 1, false);
    std::int64_t inter_sum = 0, union_sum = 0;
    for (std::int32_t g = 1; g <= ng; ++g) {
        std::int32_t best_pred = 0;
        double best_iou = 0.0;
        std::int64_t best_inter = 0;
        for (std::int32_t p = 1; p <= np; ++p) {
            if (pred_used[p]) continue;
            const auto it = inter.find({g, p});
            if (it == inter.end()) continue;
            const std::int64_t in = it->second;
            const double iou_gp = double(in) / double(gt_area[g] + pred_area[p] - in);
            if (iou_gp > best_iou) {
                best_iou = iou_gp;
                best_pred = p;
                best_inter = in;
            }
        }
        if (best_pred != 0) {
            pred_used[best_pred] = true;
            inter_sum += best_inter;
            union_sum += gt_area[g] + pred_area[best_pred] - best_inter;
        } else {
            union_sum += gt_area[g];  // unmatched ground truth
        }
    }
    for (std::int32_t p = 1; p <= np; ++p)
        if (!pred_used[p]) union_sum += pred_area[p];
    if (union_sum == 0) return 1.0;
    return double(inter_sum) / double(union_sum);
}

namespace {

// Two-sided 95% t quantiles, indexed by degrees of freedom 1..30.
constexpr double kT975[31] = {
    0.0,    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201,  2.179,  2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080,
    2.074,  2.069,  2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};

double t_quantile_975(int dof) {
    if (dof < 1) throw std::invalid_argument("t quantile requires dof >= 1");
    if (dof <= 30) return kT975[dof];
    return 1.960;  // normal approximation beyond the table
}

}  // namespace

FoldAggregate aggregate_folds(const std::vector<double>& values) {
    const auto n = values.size();
    if (n < 2) throw std::invalid_argument("aggregate_folds requires at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= double(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sample_std = std::sqrt(ss / double(n - 1));
    const double half = t_quantile_975(static_cast<int>(n) - 1) * sample_std / std::sqrt(double(n));
    return {mean, half};
}

MetricsReport MetricsReport::from_rows(std::vector<ImageMetricsRow> rows) {
    MetricsReport r;
    r.rows = std::move(rows);
    std::map<int, std::vector<const ImageMetricsRow*>> by_fold;
    for (const auto& row : r.rows) by_fold[row.fold].push_back(&row);
    for (const auto& [fold, fold_rows] : by_fold) {
        FoldMetrics f;
        f.fold = fold;
        for (const auto* row : fold_rows) {
            f.iou += row->iou;
            f.fscore += row->fscore;
            f.aji += row->aji;
        }
        const double n = double(fold_rows.size());
        f.iou /= n;
        f.fscore /= n;
        f.aji /= n;
        r.folds.push_back(f);
    }
    if (r.folds.size() >= 2) {
        std::vector<double> ious, fs, ajis;
        for (const auto& f : r.folds) {
            ious.push_back(f.iou);
            fs.push_back(f.fscore);
            ajis.push_back(f.aji);
        }
        r.iou_agg = aggregate_folds(ious);
        r.fscore_agg = aggregate_folds(fs);
        r.aji_agg = aggregate_folds(ajis);
    } else if (r.folds.size() == 1) {
        r.iou_agg = {r.folds[0].iou, 0.0};
        r.fscore_agg = {r.folds[0].fscore, 0.0};
        r.aji_agg = {r.folds[0].aji, 0.0};
    }
    return r;
}

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& os, const MetricsReport& report) {
    os << "image,fold,iou,fscore,aji\n";
    for (const auto& row : report.rows)
        os << row.image << ',' << row.fold << ',' << fmt(row.iou) << ',' << fmt(row.fscore) << ','
           << fmt(row.aji) << '\n';
    for (const auto& f : report.folds)
        os << "fold-summary," << f.fold << ',' << fmt(f.iou) << ',' << fmt(f.fscore) << ','
           << fmt(f.aji) << '\n';
    os << "aggregate-mean,-1," << fmt(report.iou_agg.mean) << ',' << fmt(report.fscore_agg.mean)
       << ',' << fmt(report.aji_agg.mean) << '\n';
    os << "aggregate-ci95,-1," << fmt(report.iou_agg.ci95_halfwidth) << ','
       << fmt(report.fscore_agg.ci95_halfwidth) << ',' << fmt(report.aji_agg.ci95_halfwidth)
       << '\n';
}

}  // namespace tubeseg
