#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "support/gradcheck.hpp"
#include "tubeseg/losses.hpp"
#include "tubeseg/rng.hpp"

using namespace tubeseg;
using testsupport::finite_difference_check;

namespace {

constexpr double kSmooth = 1e-7;

// Random softmax-like probability tensor and matching one-hot target.
struct LossFixture {
    Tensor<double> probs;
    Tensor<double> onehot;
    std::vector<std::uint8_t> labels;
};

LossFixture random_fixture(std::int64_t n, int c, std::int64_t h, std::int64_t w,
                           std::uint64_t seed) {
    Rng rng(seed);
    LossFixture f;
    f.probs = Tensor<double>(Shape{n, c, h, w});
    f.labels.resize(static_cast<std::size_t>(n * h * w));
    auto pv = f.probs.values_mut();
    const std::int64_t plane = h * w;
    for (std::int64_t img = 0; img < n; ++img)
        for (std::int64_t p = 0; p < plane; ++p) {
            double total = 0.0;
            std::vector<double> raw(c);
            for (int k = 0; k < c; ++k) {
                raw[k] = rng.uniform(0.05, 1.0);
                total += raw[k];
            }
            for (int k = 0; k < c; ++k) pv[(img * c + k) * plane + p] = raw[k] / total;
            f.labels[img * plane + p] =
                static_cast<std::uint8_t>(rng.uniform_int(0, c - 1));
        }
    f.onehot = onehot_target<double>(f.labels, c, n, h, w);
    return f;
}

// Hard one-hot prediction equal to (or different from) the target.
Tensor<double> hard_onehot(const std::vector<std::uint8_t>& labels, int c, std::int64_t n,
                           std::int64_t h, std::int64_t w) {
    return onehot_target<double>(labels, c, n, h, w);
}

}  // namespace

TEST_CASE("class_weights: balanced, skewed and zero-count classes") {
    const auto balanced = class_weights<double>({50, 50});
    CHECK(balanced[0] == doctest::Approx(1.0));
    CHECK(balanced[1] == doctest::Approx(1.0));

    const auto skewed = class_weights<double>({75, 25});
    CHECK(skewed[0] == doctest::Approx(2.0 / 3.0));
    CHECK(skewed[1] == doctest::Approx(2.0));

    const auto with_zero = class_weights<double>({100, 0, 100});
    CHECK(with_zero[0] == doctest::Approx(2.0 / 3.0));
    CHECK(with_zero[1] == 0.0);
    CHECK(with_zero[2] == doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(class_weights<double>({0, 0}), std::invalid_argument);
}

TEST_CASE("weighted_ce: uniform prediction, perfect prediction, single pixel") {
    // Balanced 2-class, p = 0.5 everywhere -> ln 2.
    std::vector<std::uint8_t> labels(16);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    Tensor<double> y = onehot_target<double>(labels, 2, 1, 4, 4);
    Tensor<double> p(Shape{1, 2, 4, 4}, 0.5);
    const auto w = class_weights<double>({8, 8});
    CHECK(weighted_ce(p, y, w).item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

    // Perfect prediction: loss below 1e-6.
    Tensor<double> perfect = hard_onehot(labels, 2, 1, 4, 4);
    CHECK(weighted_ce(perfect, y, w).item() < 1e-6);

    // Single pixel, true class 1, p1 = 0.25 -> ln 4.
    std::vector<std::uint8_t> one{1};
    Tensor<double> y1 = onehot_target<double>(one, 2, 1, 1, 1);
    Tensor<double> p1 = Tensor<double>::from_data(Shape{1, 2, 1, 1}, {0.75, 0.25});
    CHECK(weighted_ce(p1, y1, {1.0, 1.0}).item() == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("dice_loss: perfect, fully wrong, and the single-pixel value") {
    std::vector<std::uint8_t> labels(16);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    Tensor<double> y = onehot_target<double>(labels, 2, 1, 4, 4);
    Tensor<double> perfect = hard_onehot(labels, 2, 1, 4, 4);
    CHECK(dice_loss(perfect, y).item() == doctest::Approx(-1.0).epsilon(1e-6));

    // All mass on the wrong class: numerators vanish.
    std::vector<std::uint8_t> flipped(labels);
    for (auto& l : flipped) l = 1 - l;
    Tensor<double> wrong = hard_onehot(flipped, 2, 1, 4, 4);
    CHECK(dice_loss(wrong, y).item() == doctest::Approx(0.0));

    // One pixel, y = class 1, p = (0.3, 0.7); evaluated from the formula.
    std::vector<std::uint8_t> one{1};
    Tensor<double> y1 = onehot_target<double>(one, 2, 1, 1, 1);
    Tensor<double> p1 = Tensor<double>::from_data(Shape{1, 2, 1, 1}, {0.3, 0.7});
    const double expected = -(0.0 / (0.3 + kSmooth) + 0.7 / (1.7 + kSmooth));
    CHECK(dice_loss(p1, y1).item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(dice_loss(p1, y1).item() == doctest::Approx(-0.4118).epsilon(1e-4));
}

TEST_CASE("dice_wce is the sum of its parts") {
    auto f = random_fixture(1, 2, 4, 4, 211);
    const auto counts = label_pixel_counts(f.labels, 2);
    const auto w = class_weights<double>(counts);
    const double sum = weighted_ce(f.probs, f.onehot, w).item() + dice_loss(f.probs, f.onehot).item();
    CHECK(dice_wce(f.probs, f.onehot, w).item() == doctest::Approx(sum).epsilon(1e-12));

    // Perfect prediction: ~0 + (-1).
    std::vector<std::uint8_t> labels(16);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    Tensor<double> y = onehot_target<double>(labels, 2, 1, 4, 4);
    Tensor<double> perfect = hard_onehot(labels, 2, 1, 4, 4);
    CHECK(dice_wce(perfect, y, {1.0, 1.0}).item() == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("tversky: perfect -2, zero-overlap 0, single-pixel regression value") {
    std::vector<std::uint8_t> labels(16);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    Tensor<double> y = onehot_target<double>(labels, 2, 1, 4, 4);
    Tensor<double> perfect = hard_onehot(labels, 2, 1, 4, 4);
    CHECK(tversky(perfect, y).item() == doctest::Approx(-2.0).epsilon(1e-6));

    std::vector<std::uint8_t> flipped(labels);
    for (auto& l : flipped) l = 1 - l;
    Tensor<double> wrong = hard_onehot(flipped, 2, 1, 4, 4);
    CHECK(tversky(wrong, y).item() == doctest::Approx(0.0));

    // One pixel, y = class 1, p = (0.4, 0.6), alpha 0.3 / beta 0.7:
    // class 0 term is 0; class 1 term = 0.6 / (0.6 + 0.3*0 + 0.7*0.4).
    std::vector<std::uint8_t> one{1};
    Tensor<double> y1 = onehot_target<double>(one, 2, 1, 1, 1);
    Tensor<double> p1 = Tensor<double>::from_data(Shape{1, 2, 1, 1}, {0.4, 0.6});
    const double class0 = 0.0 / (0.0 + 0.3 * 0.4 + 0.7 * 0.0 + kSmooth);
    const double class1 = 0.6 / (0.6 + 0.3 * 0.0 + 0.7 * 0.4 + kSmooth);
    const double expected = -(2.0 / 2.0) * (class0 + class1);
    CHECK(tversky(p1, y1).item() == doctest::Approx(expected).epsilon(1e-12));
    CHECK(tversky(p1, y1).item() == doctest::Approx(-0.681818).epsilon(1e-5));
}

TEST_CASE("tversky at alpha=beta=0.5: conventional form equals dice, paper form is twice it") {
    Rng rng(223);
    for (int trial = 0; trial < 20; ++trial) {
        auto f = random_fixture(1, 2, 4, 4, 300 + trial);
        // Hard one-hot prediction with random agreement.
        std::vector<std::uint8_t> pred_labels(f.labels.size());
        for (auto& l : pred_labels) l = static_cast<std::uint8_t>(rng.uniform_int(0, 1));
        Tensor<double> hard = hard_onehot(pred_labels, 2, 1, 4, 4);
        const double dice = dice_loss(hard, f.onehot).item();
        const double tv_conventional = tversky(hard, f.onehot, 0.5, 0.5, false).item();
        const double tv_paper = tversky(hard, f.onehot, 0.5, 0.5, true).item();
        CHECK(std::fabs(tv_conventional - dice) < 1e-6);
        CHECK(std::fabs(tv_paper - 2.0 * dice) < 1e-6);
    }
}

TEST_CASE("losses are permutation-invariant over pixels") {
    auto f = random_fixture(1, 3, 4, 4, 227);
    const auto w = class_weights<double>(label_pixel_counts(f.labels, 3));
    const double ce0 = weighted_ce(f.probs, f.onehot, w).item();
    const double dc0 = dice_loss(f.probs, f.onehot).item();
    const double tv0 = tversky(f.probs, f.onehot).item();

    // Shuffle pixel order identically in probs and targets.
    std::vector<int> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(229);
    for (int i = 15; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    Tensor<double> probs2(Shape{1, 3, 4, 4});
    Tensor<double> onehot2(Shape{1, 3, 4, 4});
    for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 16; ++p) {
            probs2.values_mut()[c * 16 + perm[p]] = f.probs.values()[c * 16 + p];
            onehot2.values_mut()[c * 16 + perm[p]] = f.onehot.values()[c * 16 + p];
        }
    CHECK(weighted_ce(probs2, onehot2, w).item() == doctest::Approx(ce0).epsilon(1e-12));
    CHECK(dice_loss(probs2, onehot2).item() == doctest::Approx(dc0).epsilon(1e-12));
    CHECK(tversky(probs2, onehot2).item() == doctest::Approx(tv0).epsilon(1e-12));
}

TEST_CASE("dice and tversky never increase when true-class mass grows") {
    Rng rng(233);
    for (int trial = 0; trial < 25; ++trial) {
        auto f = random_fixture(1, 2, 3, 3, 400 + trial);
        const double dice0 = dice_loss(f.probs, f.onehot).item();
        const double tv0 = tversky(f.probs, f.onehot).item();
        // Move mass toward the true class at one random pixel.
        const int pix = static_cast<int>(rng.uniform_int(0, 8));
        const int true_class = f.labels[pix];
        auto pv = f.probs.values_mut();
        const double delta = rng.uniform(0.0, 1.0 - pv[true_class * 9 + pix]);
        pv[true_class * 9 + pix] += delta;
        pv[(1 - true_class) * 9 + pix] -= delta;
        CHECK(dice_loss(f.probs, f.onehot).item() <= dice0 + 1e-12);
        CHECK(tversky(f.probs, f.onehot).item() <= tv0 + 1e-12);
    }
}

TEST_CASE("gradcheck: all losses at 64-bit") {
    auto f = random_fixture(2, 3, 3, 3, 239);
    const auto w = class_weights<double>(label_pixel_counts(f.labels, 3));

    auto ce = [&] { return weighted_ce(f.probs, f.onehot, w); };
    CHECK(finite_difference_check({&f.probs}, ce, 20, 241).max_rel_error < 1e-4);

    auto dc = [&] { return dice_loss(f.probs, f.onehot); };
    CHECK(finite_difference_check({&f.probs}, dc, 20, 251).max_rel_error < 1e-4);

    auto both = [&] { return dice_wce(f.probs, f.onehot, w); };
    CHECK(finite_difference_check({&f.probs}, both, 20, 257).max_rel_error < 1e-4);

    auto tv = [&] { return tversky(f.probs, f.onehot); };
    CHECK(finite_difference_check({&f.probs}, tv, 20, 263).max_rel_error < 1e-4);

    auto tv_conv = [&] { return tversky(f.probs, f.onehot, 0.5, 0.5, false); };
    CHECK(finite_difference_check({&f.probs}, tv_conv, 20, 269).max_rel_error < 1e-4);
}

TEST_CASE("loss gradients flow through softmax to logits") {
    Tensor<double> logits(Shape{1, 2, 2, 2});
    Rng rng(271);
    for (auto& v : logits.values_mut()) v = rng.uniform(-1.0, 1.0);
    std::vector<std::uint8_t> labels{0, 1, 1, 0};
    Tensor<double> y = onehot_target<double>(labels, 2, 1, 2, 2);
    auto loss = [&] { return tversky(softmax_channels(logits), y); };
    CHECK(finite_difference_check({&logits}, loss, 8, 277).max_rel_error < 1e-4);
}
