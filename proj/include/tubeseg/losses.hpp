#pragma once

// Training objectives on softmax outputs and one-hot targets: weighted cross
// entropy, dice, their sum, and the Tversky loss with asymmetric
// false-positive/false-negative penalties. Each loss is a single taped
// operation with an analytic gradient into the probability tensor.

#include <cstdint>
#include <span>
#include <vector>

#include "tubeseg/tensor.hpp"

namespace tubeseg {

// w_c = (sum_c x_c) / (C * x_c); classes with zero pixels get weight 0 and
// are excluded from the cross-entropy sum.
template <typename T>
std::vector<T> class_weights(const std::vector<std::int64_t>& pixel_counts);

// One-hot target tensor [N,C,H,W] from per-pixel class labels (N*H*W values).
template <typename T>
Tensor<T> onehot_target(std::span<const std::uint8_t> labels, int num_classes, std::int64_t n,
                        std::int64_t h, std::int64_t w);

std::vector<std::int64_t> label_pixel_counts(std::span<const std::uint8_t> labels, int num_classes);

// -(1/N) sum_n sum_c w_c y log(clamp(p)) with N counting all pixels in the
// batch and clamp to [1e-7, 1].
template <typename T>
Tensor<T> weighted_ce(const Tensor<T>& probs, const Tensor<T>& onehot, const std::vector<T>& weights);

// -(2/C) sum_c (sum p*y) / (sum p + sum y + 1e-7); perfect prediction -> -1.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& onehot);

template <typename T>
Tensor<T> dice_wce(const Tensor<T>& probs, const Tensor<T>& onehot, const std::vector<T>& weights);

// With paper_prefactor the loss is -(2/C) sum_c TI_c (perfect -> -2); the
// conventional form drops the 2, giving -(1/C) sum_c TI_c, which reduces to
// dice_loss exactly at alpha = beta = 0.5.
template <typename T>
Tensor<T> tversky(const Tensor<T>& probs, const Tensor<T>& onehot, T alpha = T(0.3),
                  T beta = T(0.7), bool paper_prefactor = true);

}  // namespace tubeseg
