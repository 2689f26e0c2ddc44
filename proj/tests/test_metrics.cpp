#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support/oracles.hpp"
#include "tubeseg/metrics.hpp"
#include "tubeseg/rng.hpp"

using namespace tubeseg;

namespace {

LabelMask mask_from(std::initializer_list<std::initializer_list<int>> rows) {
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows.begin()->size());
    LabelMask m(w, h);
    int y = 0;
    for (const auto& row : rows) {
        int x = 0;
        for (int v : row) m.at(x++, y) = static_cast<std::uint8_t>(v);
        ++y;
    }
    return m;
}

InstanceMap inst_from(std::initializer_list<std::initializer_list<int>> rows) {
    const int h = static_cast<int>(rows.size());
    const int w = static_cast<int>(rows.begin()->size());
    InstanceMap m(w, h);
    int y = 0;
    int maxid = 0;
    for (const auto& row : rows) {
        int x = 0;
        for (int v : row) {
            m.at(x++, y) = v;
            maxid = std::max(maxid, v);
        }
        ++y;
    }
    m.count = maxid;
    return m;
}

LabelMask random_label_mask(int w, int h, std::uint64_t seed) {
    LabelMask m(w, h);
    Rng rng(seed);
    for (auto& v : m.ids) v = static_cast<std::uint8_t>(rng.uniform_int(0, 1));
    return m;
}

}  // namespace

TEST_CASE("confusion_counts: identical, complementary, hand-tallied") {
    LabelMask a = mask_from({{0, 1, 0, 1}, {1, 1, 0, 0}, {0, 0, 1, 1}, {1, 0, 1, 0}});
    ConfusionCounts same = confusion_counts(a, a, 2);
    CHECK(same.fp[1] == 0);
    CHECK(same.fn[1] == 0);
    CHECK(same.tp[1] == 8);

    LabelMask b(4, 4);
    for (std::size_t i = 0; i < b.ids.size(); ++i) b.ids[i] = 1 - a.ids[i];
    ConfusionCounts comp = confusion_counts(b, a, 2);
    CHECK(comp.tp[1] == 0);
    CHECK(comp.tp[0] == 0);

    // Hand-counted 4x4 case: gt foreground 6 px, pred foreground 7 px,
    // overlap 5 px at (0,0),(0,1),(2,2),(3,2),(3,3).
    LabelMask pred = mask_from({{1, 1, 0, 0}, {1, 0, 0, 0}, {0, 0, 1, 1}, {0, 0, 1, 1}});
    LabelMask gt = mask_from({{1, 0, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 1}, {0, 0, 0, 1}});
    ConfusionCounts counts = confusion_counts(pred, gt, 2);
    CHECK(counts.tp[1] == 5);
    CHECK(counts.fp[1] == 2);
    CHECK(counts.fn[1] == 1);
    CHECK(counts.tp[1] + counts.fn[1] == 6);  // gt pixel count of the class

    LabelMask small(2, 2);
    CHECK_THROWS_AS(confusion_counts(small, gt, 2), std::invalid_argument);
}

TEST_CASE("iou and f_score: perfect, disjoint, half-overlap, empty-empty") {
    LabelMask gt(8, 8), pred(8, 8);
    // Equal 4x2 rectangles overlapping in half their area.
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 4; ++x) gt.at(x, y) = 1;
    for (int y = 0; y < 2; ++y)
        for (int x = 2; x < 6; ++x) pred.at(x, y) = 1;
    ConfusionCounts counts = confusion_counts(pred, gt, 2);
    CHECK(iou(counts, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(f_score(counts, 1) == doctest::Approx(0.5));

    ConfusionCounts perfect = confusion_counts(gt, gt, 2);
    CHECK(iou(perfect, 1) == 1.0);
    CHECK(f_score(perfect, 1) == 1.0);

    // Disjoint equal areas.
    LabelMask far(8, 8);
    for (int y = 6; y < 8; ++y)
        for (int x = 0; x < 4; ++x) far.at(x, y) = 1;
    ConfusionCounts disjoint = confusion_counts(far, gt, 2);
    CHECK(iou(disjoint, 1) == 0.0);
    CHECK(f_score(disjoint, 1) == 0.0);

    // A class absent from both masks counts as perfect agreement.
    ConfusionCounts empty = confusion_counts(LabelMask(4, 4), LabelMask(4, 4), 2);
    CHECK(iou(empty, 1) == 1.0);
    CHECK(f_score(empty, 1) == 1.0);
}

TEST_CASE("F = 2 IoU / (1 + IoU) on 1000 random mask pairs") {
    for (int trial = 0; trial < 1000; ++trial) {
        LabelMask pred = random_label_mask(8, 8, 2 * trial);
        LabelMask gt = random_label_mask(8, 8, 2 * trial + 1);
        ConfusionCounts counts = confusion_counts(pred, gt, 2);
        for (int cls = 0; cls < 2; ++cls) {
            const double i = iou(counts, cls);
            CHECK(f_score(counts, cls) == doctest::Approx(2.0 * i / (1.0 + i)).epsilon(1e-12));
        }
    }
}

TEST_CASE("aji: identity, empty prediction, and the worked two-squares case") {
    InstanceMap one = inst_from({{0, 1, 1}, {0, 1, 1}, {0, 0, 0}});
    CHECK(aji(one, one) == doctest::Approx(1.0));

    InstanceMap empty(3, 3);
    CHECK(aji(one, empty) == doctest::Approx(0.0));

    // gt: two adjacent 4-pixel squares; pred: their 8-pixel union as one
    // blob. Matched pair: intersection 4, union 8; unmatched gt adds 4.
    InstanceMap gt = inst_from({{1, 1, 2, 2}, {1, 1, 2, 2}, {0, 0, 0, 0}});
    InstanceMap pred = inst_from({{1, 1, 1, 1}, {1, 1, 1, 1}, {0, 0, 0, 0}});
    CHECK(aji(gt, pred) == doctest::Approx(4.0 / 12.0));
    CHECK(aji(gt, pred) == doctest::Approx(testsupport::exhaustive_aji(gt, pred)));
}

TEST_CASE("aji is invariant under instance id permutations") {
    InstanceMap gt = inst_from({{1, 1, 0, 2, 2}, {1, 1, 0, 2, 2}, {3, 0, 0, 0, 3}});
    InstanceMap pred = inst_from({{1, 1, 0, 2, 0}, {1, 0, 0, 2, 2}, {3, 3, 0, 0, 3}});
    const double base = aji(gt, pred);
    // Swap ids 1 and 3 on both sides.
    auto swap13 = [](InstanceMap m) {
        for (auto& v : m.ids) v = v == 1 ? 3 : v == 3 ? 1 : v;
        return m;
    };
    CHECK(aji(swap13(gt), pred) == doctest::Approx(base));
    CHECK(aji(gt, swap13(pred)) == doctest::Approx(base));
    CHECK(aji(swap13(gt), swap13(pred)) == doctest::Approx(base));
}

TEST_CASE("greedy aji equals exhaustive matching on small random scenes") {
    // Disjoint ground-truth instances with near-bijective predictions
    // (each instance shifted by at most one pixel), the regime real
    // segmentation outputs live in.
    Rng rng(41);
    int produced = 0;
    for (int trial = 0; trial < 200 && produced < 40; ++trial) {
        const int w = 20, h = 16;
        InstanceMap gt(w, h), pred(w, h);
        const int want = static_cast<int>(rng.uniform_int(1, 5));
        struct Box {
            int cx, cy, r;
        };
        std::vector<Box> boxes;
        for (int tries = 0; tries < 100 && static_cast<int>(boxes.size()) < want; ++tries) {
            Box b{static_cast<int>(rng.uniform_int(3, w - 4)),
                  static_cast<int>(rng.uniform_int(3, h - 4)),
                  static_cast<int>(rng.uniform_int(1, 2))};
            bool clash = false;
            for (const Box& o : boxes)
                if (std::abs(b.cx - o.cx) <= b.r + o.r + 2 && std::abs(b.cy - o.cy) <= b.r + o.r + 2)
                    clash = true;
            if (!clash) boxes.push_back(b);
        }
        if (boxes.empty()) continue;
        ++produced;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            const Box& b = boxes[i];
            for (int y = b.cy - b.r; y <= b.cy + b.r; ++y)
                for (int x = b.cx - b.r; x <= b.cx + b.r; ++x)
                    gt.at(x, y) = static_cast<std::int32_t>(i) + 1;
            const int dx = static_cast<int>(rng.uniform_int(-1, 1));
            const int dy = static_cast<int>(rng.uniform_int(-1, 1));
            for (int y = b.cy + dy - b.r; y <= b.cy + dy + b.r; ++y)
                for (int x = b.cx + dx - b.r; x <= b.cx + dx + b.r; ++x)
                    if (x >= 0 && y >= 0 && x < w && y < h)
                        pred.at(x, y) = static_cast<std::int32_t>(i) + 1;
        }
        gt.count = pred.count = static_cast<int>(boxes.size());
        CHECK(aji(gt, pred) == doctest::Approx(testsupport::exhaustive_aji(gt, pred)));
    }
    CHECK(produced >= 30);
}

TEST_CASE("aji bounded by the binary-union iou") {
    Rng rng(43);
    for (int trial = 0; trial < 20; ++trial) {
        InstanceMap gt(16, 16), pred(16, 16);
        for (int i = 0; i < 3; ++i) {
            const int x0 = static_cast<int>(rng.uniform_int(0, 12));
            const int y0 = static_cast<int>(rng.uniform_int(0, 12));
            for (int y = y0; y < y0 + 3; ++y)
                for (int x = x0; x < x0 + 3; ++x) {
                    gt.at(x, y) = i + 1;
                    if (rng.bernoulli(0.8)) pred.at(x, y) = i + 1;
                }
        }
        gt.count = pred.count = 3;
        LabelMask gt_bin(16, 16), pred_bin(16, 16);
        for (std::size_t i = 0; i < gt.ids.size(); ++i) {
            gt_bin.ids[i] = gt.ids[i] > 0;
            pred_bin.ids[i] = pred.ids[i] > 0;
        }
        const double union_iou = iou(confusion_counts(pred_bin, gt_bin, 2), 1);
        CHECK(aji(gt, pred) <= union_iou + 1e-12);
        CHECK(aji(gt, pred) >= 0.0);
    }
}

TEST_CASE("aggregate_folds: degenerate, two-point, permutation invariance") {
    const auto same = aggregate_folds({0.7, 0.7, 0.7});
    CHECK(same.mean == doctest::Approx(0.7));
    CHECK(same.ci95_halfwidth == doctest::Approx(0.0));

    // {0,1}: mean 0.5, half-width = t(0.975,1) * std / sqrt(2) = 12.706 * 0.5.
    const auto two = aggregate_folds({0.0, 1.0});
    CHECK(two.mean == doctest::Approx(0.5));
    CHECK(two.ci95_halfwidth == doctest::Approx(12.706 * 0.7071067811865476 / std::sqrt(2.0))
                                    .epsilon(1e-6));
    CHECK(two.ci95_halfwidth == doctest::Approx(6.353).epsilon(1e-3));

    const auto fwd = aggregate_folds({0.2, 0.5, 0.9, 0.4, 0.6});
    const auto rev = aggregate_folds({0.6, 0.4, 0.9, 0.5, 0.2});
    CHECK(fwd.mean == doctest::Approx(rev.mean));
    CHECK(fwd.ci95_halfwidth == doctest::Approx(rev.ci95_halfwidth));

    CHECK_THROWS_AS(aggregate_folds({0.5}), std::invalid_argument);
}

TEST_CASE("metrics report and CSV schema") {
    std::vector<ImageMetricsRow> rows;
    for (int fold = 0; fold < 2; ++fold)
        for (int i = 0; i < 2; ++i)
            rows.push_back({"img" + std::to_string(fold * 2 + i) + ".png", fold,
                            0.5 + 0.1 * fold, 0.6 + 0.1 * fold, 0.3 + 0.1 * fold});
    const MetricsReport report = MetricsReport::from_rows(rows);
    REQUIRE(report.folds.size() == 2);
    CHECK(report.iou_agg.mean == doctest::Approx(0.55));
    CHECK(report.folds[0].iou == doctest::Approx(0.5));
    // Fold means always bracket the aggregate mean.
    CHECK(report.iou_agg.mean >= report.folds[0].iou);
    CHECK(report.iou_agg.mean <= report.folds[1].iou);

    std::ostringstream os;
    write_metrics_csv(os, report);
    const std::string csv = os.str();
    CHECK(csv.find("image,fold,iou,fscore,aji") == 0);
    CHECK(csv.find("img0.png,0,") != std::string::npos);
    CHECK(csv.find("fold-summary,0,") != std::string::npos);
    CHECK(csv.find("fold-summary,1,") != std::string::npos);
    CHECK(csv.find("aggregate-mean,-1,") != std::string::npos);
    CHECK(csv.find("aggregate-ci95,-1,") != std::string::npos);

    // Byte-deterministic for identical inputs.
    std::ostringstream os2;
    write_metrics_csv(os2, report);
    CHECK(os.str() == os2.str());
}
