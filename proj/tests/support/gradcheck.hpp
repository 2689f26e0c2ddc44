#pragma once

// Central finite-difference gradient checking at 64-bit precision. The
// analytic gradients come from one taped backward pass; numeric derivatives
// re-run the forward closure with perturbed leaf values and no active tape.
//
// Sampled coordinates sitting on a relu/maxpool kink (where central
// differences average the two one-sided slopes and disagree with any
// subgradient) are detected by comparing the central and forward quotients
// and resampled; the loss is differentiable almost everywhere, so a few
// retries always find a smooth coordinate.

#include <cmath>
#include <functional>
#include <vector>

#include "tubeseg/rng.hpp"
#include "tubeseg/tensor.hpp"

namespace tubeseg::testsupport {

struct GradCheck {
    double max_rel_error = 0.0;
    int coords_checked = 0;
    int kinks_skipped = 0;
};

// make_loss must rebuild the whole forward computation from the current leaf
// values and return the scalar loss tensor.
inline GradCheck finite_difference_check(std::vector<Tensor<double>*> leaves,
                                         const std::function<Tensor<double>()>& make_loss,
                                         int samples_per_leaf, std::uint64_t seed,
                                         double step = 1e-5) {
    for (auto* leaf : leaves) {
        leaf->set_requires_grad(true);
        leaf->zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        GradientTape<double> tape;
        Tensor<double> loss = make_loss();
        tape.backward(loss);
    }
    // Copy every analytic gradient before zeroing: the leaf list may name
    // the same tensor more than once.
    for (auto* leaf : leaves) analytic.emplace_back(leaf->grad().begin(), leaf->grad().end());
    for (auto* leaf : leaves) leaf->zero_grad();
    const double f0 = make_loss().item();

    GradCheck result;
    Rng rng(seed);
    constexpr int kMaxResample = 8;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Tensor<double>& leaf = *leaves[li];
        const auto n = static_cast<std::int64_t>(leaf.numel());
        for (int s = 0; s < samples_per_leaf; ++s) {
            double rel = 0.0;
            for (int attempt = 0; attempt < kMaxResample; ++attempt) {
                const auto i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
                const double orig = leaf.values()[i];
                leaf.values_mut()[i] = orig + step;
                const double fp = make_loss().item();
                leaf.values_mut()[i] = orig - step;
                const double fm = make_loss().item();
                leaf.values_mut()[i] = orig;
                const double central = (fp - fm) / (2.0 * step);
                const double forward = (fp - f0) / step;
                const bool kinked =
                    std::fabs(central - forward) > 0.05 * std::max({std::fabs(central),
                                                                    std::fabs(forward), 1e-6});
                if (kinked && attempt + 1 < kMaxResample) {
                    ++result.kinks_skipped;
                    continue;
                }
                const double a = analytic[li].empty() ? 0.0 : analytic[li][i];
                rel = std::fabs(a - central) / std::max(1.0, std::fabs(central));
                break;
            }
            result.max_rel_error = std::max(result.max_rel_error, rel);
            ++result.coords_checked;
        }
    }
    return result;
}

}  // namespace tubeseg::testsupport
