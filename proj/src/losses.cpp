#include "tubeseg/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace tubeseg {

namespace {

constexpr double kClampEps = 1e-7;   // probability floor before log
constexpr double kSmoothEps = 1e-7;  // ratio denominator smoothing

template <typename T>
struct LossDims {
    std::int64_t n, c, h, w, plane, pixels;
};

template <typename T>
LossDims<T> check_loss_inputs(const Tensor<T>& probs, const Tensor<T>& onehot) {
    if (probs.shape().size() != 4 || onehot.shape().size() != 4 ||
        probs.shape() != onehot.shape())
        throw std::invalid_argument("loss inputs must be identically shaped NCHW tensors, got " +
                                    shape_str(probs.shape()) + " and " + shape_str(onehot.shape()));
    const Shape& s = probs.shape();
    return {s[0], s[1], s[2], s[3], s[2] * s[3], s[0] * s[2] * s[3]};
}

}  // namespace

template <typename U>
Tensor<U> make_op_output(Shape shape, bool requires_grad);

template <typename T>
std::vector<T> class_weights(const std::vector<std::int64_t>& pixel_counts) {
    std::int64_t total = 0;
    for (auto c : pixel_counts) {
        if (c < 0) throw std::invalid_argument("class pixel counts must be non-negative");
        total += c;
    }
    if (total == 0) throw std::invalid_argument("class_weights: all class counts are zero");
    const auto num_classes = static_cast<T>(pixel_counts.size());
    std::vector<T> w(pixel_counts.size(), T(0));
    for (std::size_t c = 0; c < pixel_counts.size(); ++c)
        if (pixel_counts[c] > 0)
            w[c] = static_cast<T>(total) / (num_classes * static_cast<T>(pixel_counts[c]));
    return w;
}

std::vector<std::int64_t> label_pixel_counts(std::span<const std::uint8_t> labels, int num_classes) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (auto l : labels) {
        if (l >= num_classes)
            throw std::invalid_argument("label id " + std::to_string(int(l)) +
                                        " out of range for " + std::to_string(num_classes) +
                                        " classes");
        ++counts[l];
    }
    return counts;
}

template <typename T>
Tensor<T> onehot_target(std::span<const std::uint8_t> labels, int num_classes, std::int64_t n,
                        std::int64_t h, std::int64_t w) {
    if (static_cast<std::int64_t>(labels.size()) != n * h * w)
        throw std::invalid_argument("onehot_target: label count does not match n*h*w");
    Tensor<T> t(Shape{n, num_classes, h, w});
    auto v = t.values_mut();
    const std::int64_t plane = h * w;
    for (std::int64_t i = 0; i < n * plane; ++i) {
        const std::uint8_t l = labels[i];
        if (l >= num_classes)
            throw std::invalid_argument("label id out of range in onehot_target");
        const std::int64_t img = i / plane, pix = i % plane;
        v[(img * num_classes + l) * plane + pix] = T(1);
    }
    return t;
}

namespace {

// Shared recording helper for the scalar losses.
template <typename T, typename GradFn>
Tensor<T> record_scalar_loss(const char* name, const Tensor<T>& probs, const Tensor<T>& onehot,
                             T value, GradFn&& grad_into_probs) {
    const bool wants = GradientTape<T>::current() != nullptr && probs.requires_grad();
    Tensor<T> out = make_op_output<T>(Shape{1}, wants);
    out.values_mut()[0] = value;
    if (wants) {
        typename GradientTape<T>::Entry entry;
        entry.op = name;
        entry.input_ids = {probs.id(), onehot.id()};
        entry.output_id = out.id();
        entry.apply = [pn = probs.node(), on = out.node(),
                       grad = std::forward<GradFn>(grad_into_probs)] {
            if (on->grad.empty() || !pn->requires_grad) return;
            grad(on->grad[0], pn->ensure_grad());
        };
        GradientTape<T>::current()->record(std::move(entry));
    }
    return out;
}

}  // namespace

template <typename T>
Tensor<T> weighted_ce(const Tensor<T>& probs, const Tensor<T>& onehot,
                      const std::vector<T>& weights) {
    const auto d = check_loss_inputs(probs, onehot);
    if (static_cast<std::int64_t>(weights.size()) != d.c)
        throw std::invalid_argument("weighted_ce: weight vector must have C entries");
    const T* p = probs.values().data();
    const T* y = onehot.values().data();
    const T invn = T(1) / static_cast<T>(d.pixels);

    double acc = 0.0;
    for (std::int64_t i = 0; i < probs.numel(); ++i) {
        if (y[i] == T(0)) continue;
        const std::int64_t c = (i / d.plane) % d.c;
        if (weights[c] == T(0)) continue;
        const double clamped = std::min(std::max(double(p[i]), kClampEps), 1.0);
        acc += double(weights[c]) * double(y[i]) * std::log(clamped);
    }
    const T value = static_cast<T>(-acc) * invn;

    auto pn = probs.node();
    auto yn = onehot.node();
    return record_scalar_loss<T>("weighted_ce", probs, onehot, value,
                                 [pn, yn, weights, d, invn](T g0, std::span<T> gp) {
        const T* p = pn->value.data();
        const T* y = yn->value.data();
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(gp.size()); ++i) {
            if (y[i] == T(0)) continue;
            const std::int64_t c = (i / d.plane) % d.c;
            if (weights[c] == T(0)) continue;
            // Clamped regions have zero subgradient.
            if (double(p[i]) < kClampEps || double(p[i]) > 1.0) continue;
            gp[i] += g0 * (-invn) * weights[c] * y[i] / p[i];
        }
    });
}

namespace {

// Per-class sums used by dice; den gets the smoothing term at use sites.
template <typename T>
struct DiceSums {
    std::vector<double> num, den;
};

template <typename T>
DiceSums<T> dice_sums(const T* p, const T* y, const LossDims<T>& d) {
    DiceSums<T> s;
    s.num.assign(static_cast<std::size_t>(d.c), 0.0);
    s.den.assign(static_cast<std::size_t>(d.c), 0.0);
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
            const std::int64_t off = (n * d.c + c) * d.plane;
            double num = 0, den = 0;
            for (std::int64_t i = 0; i < d.plane; ++i) {
                num += double(p[off + i]) * double(y[off + i]);
                den += double(p[off + i]) + double(y[off + i]);
            }
            s.num[c] += num;
            s.den[c] += den;
        }
    return s;
}

}  // namespace

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& onehot) {
    const auto d = check_loss_inputs(probs, onehot);
    const T* p = probs.values().data();
    const T* y = onehot.values().data();
    auto sums = dice_sums(p, y, d);

    double acc = 0.0;
    for (std::int64_t c = 0; c < d.c; ++c) acc += sums.num[c] / (sums.den[c] + kSmoothEps);
    const T value = static_cast<T>(-2.0 / double(d.c) * acc);

    auto yn = onehot.node();
    return record_scalar_loss<T>("dice_loss", probs, onehot, value,
                                 [yn, d, sums](T g0, std::span<T> gp) {
        const T* y = yn->value.data();
        const double scale = -2.0 / double(d.c);
        for (std::int64_t n = 0; n < d.n; ++n)
            for (std::int64_t c = 0; c < d.c; ++c) {
                const std::int64_t off = (n * d.c + c) * d.plane;
                const double den = sums.den[c] + kSmoothEps;
                const double num = sums.num[c];
                for (std::int64_t i = 0; i < d.plane; ++i) {
                    const double dnum = double(y[off + i]);
                    gp[off + i] += static_cast<T>(double(g0) * scale * (dnum * den - num) / (den * den));
                }
            }
    });
}

template <typename T>
Tensor<T> dice_wce(const Tensor<T>& probs, const Tensor<T>& onehot, const std::vector<T>& weights) {
    return add(weighted_ce(probs, onehot, weights), dice_loss(probs, onehot));
}

template <typename T>
Tensor<T> tversky(const Tensor<T>& probs, const Tensor<T>& onehot, T alpha, T beta,
                  bool paper_prefactor) {
    if (alpha < T(0) || beta < T(0))
        throw std::invalid_argument("tversky requires alpha, beta >= 0");
    const auto d = check_loss_inputs(probs, onehot);
    const T* p = probs.values().data();
    const T* y = onehot.values().data();

    std::vector<double> num(static_cast<std::size_t>(d.c), 0.0);
    std::vector<double> fp(static_cast<std::size_t>(d.c), 0.0);  // (1-y) p
    std::vector<double> fn(static_cast<std::size_t>(d.c), 0.0);  // (1-p) y
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
            const std::int64_t off = (n * d.c + c) * d.plane;
            for (std::int64_t i = 0; i < d.plane; ++i) {
                const double pv = p[off + i], yv = y[off + i];
                num[c] += pv * yv;
                fp[c] += (1.0 - yv) * pv;
                fn[c] += (1.0 - pv) * yv;
            }
        }

    const double prefactor = (paper_prefactor ? 2.0 : 1.0) / double(d.c);
    const double a = double(alpha), b = double(beta);
    std::vector<double> den(static_cast<std::size_t>(d.c));
    double acc = 0.0;
    for (std::int64_t c = 0; c < d.c; ++c) {
        den[c] = num[c] + a * fp[c] + b * fn[c] + kSmoothEps;
        acc += num[c] / den[c];
    }
    const T value = static_cast<T>(-prefactor * acc);

    auto yn = onehot.node();
    return record_scalar_loss<T>("tversky", probs, onehot, value,
                                 [yn, d, num, den, a, b, prefactor](T g0, std::span<T> gp) {
        const T* y = yn->value.data();
        for (std::int64_t n = 0; n < d.n; ++n)
            for (std::int64_t c = 0; c < d.c; ++c) {
                const std::int64_t off = (n * d.c + c) * d.plane;
                for (std::int64_t i = 0; i < d.plane; ++i) {
                    const double yv = double(y[off + i]);
                    const double dnum = yv;
                    const double dden = yv + a * (1.0 - yv) - b * yv;
                    const double g = -prefactor * (dnum * den[c] - num[c] * dden) / (den[c] * den[c]);
                    gp[off + i] += static_cast<T>(double(g0) * g);
                }
            }
    });
}

#define TUBESEG_INSTANTIATE(T)                                                             \
    template std::vector<T> class_weights<T>(const std::vector<std::int64_t>&);            \
    template Tensor<T> onehot_target<T>(std::span<const std::uint8_t>, int, std::int64_t,  \
                                        std::int64_t, std::int64_t);                       \
    template Tensor<T> weighted_ce(const Tensor<T>&, const Tensor<T>&, const std::vector<T>&); \
    template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&);                      \
    template Tensor<T> dice_wce(const Tensor<T>&, const Tensor<T>&, const std::vector<T>&); \
    template Tensor<T> tversky(const Tensor<T>&, const Tensor<T>&, T, T, bool);

TUBESEG_INSTANTIATE(float)
TUBESEG_INSTANTIATE(double)

#undef TUBESEG_INSTANTIATE

}  // namespace tubeseg
