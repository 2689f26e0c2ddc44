#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tubeseg/kernels.hpp"
#include "tubeseg/tensor.hpp"

namespace tubeseg {

template <typename U>
Tensor<U> make_op_output(Shape shape, bool requires_grad);

namespace {

template <typename T>
bool conv_wants_grad(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>* c) {
    if (!GradientTape<T>::current()) return false;
    return a.requires_grad() || b.requires_grad() || (c && c->requires_grad());
}

// Valid output range [lo, hi) for one kernel tap so that the input index
// o*stride + k - padding stays inside [0, extent).
struct TapRange {
    std::int64_t lo, hi;
};

TapRange tap_range(std::int64_t out_extent, std::int64_t in_extent, std::int64_t k,
                   std::int64_t stride, std::int64_t padding) {
    std::int64_t lo = 0;
    if (k < padding) lo = (padding - k + stride - 1) / stride;
    const std::int64_t num = in_extent - 1 - k + padding;
    std::int64_t hi = num < 0 ? 0 : num / stride + 1;
    if (hi > out_extent) hi = out_extent;
    if (lo > hi) lo = hi;
    return {lo, hi};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                 int stride, int padding) {
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (is.size() != 4 || ws.size() != 4)
        throw std::invalid_argument("conv2d expects 4-d input and weight, got " + shape_str(is) +
                                    " and " + shape_str(ws));
    const std::int64_t N = is[0], Cin = is[1], H = is[2], W = is[3];
    const std::int64_t Cout = ws[0], kh = ws[2], kw = ws[3];
    if (ws[1] != Cin)
        throw std::invalid_argument("conv2d channel mismatch: input " + shape_str(is) +
                                    " has Cin=" + std::to_string(Cin) + " but weight " +
                                    shape_str(ws) + " expects Cin=" + std::to_string(ws[1]));
    auto supported = [](std::int64_t k) { return k == 1 || k == 3 || k == 7; };
    if (!supported(kh) || !supported(kw))
        throw std::invalid_argument("conv2d kernel extents must be in {1,3,7}, got " +
                                    shape_str(ws));
    if (stride < 1 || padding < 0)
        throw std::invalid_argument("conv2d requires stride >= 1 and padding >= 0");
    if (bias && bias->numel() != Cout)
        throw std::invalid_argument("conv2d bias must have Cout elements");
    const std::int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const std::int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    if (H + 2 * padding < kh || W + 2 * padding < kw || Ho < 1 || Wo < 1)
        throw std::invalid_argument("conv2d output would be empty for input " + shape_str(is) +
                                    ", kernel " + shape_str(ws));

    auto out = make_op_output<T>(Shape{N, Cout, Ho, Wo},
                                 conv_wants_grad<T>(input, weight, bias));
    const T* x = input.values().data();
    const T* wv = weight.values().data();
    T* y = out.values_mut().data();

    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Cout; ++co) {
            T* out_plane = y + (n * Cout + co) * Ho * Wo;
            if (bias) {
                const T b = bias->values()[co];
                for (std::int64_t i = 0; i < Ho * Wo; ++i) out_plane[i] = b;
            }
            for (std::int64_t ci = 0; ci < Cin; ++ci) {
                const T* in_plane = x + (n * Cin + ci) * H * W;
                for (std::int64_t ky = 0; ky < kh; ++ky)
                    for (std::int64_t kx = 0; kx < kw; ++kx) {
                        const T wgt = wv[((co * Cin + ci) * kh + ky) * kw + kx];
                        const TapRange rx = tap_range(Wo, W, kx, stride, padding);
                        if (rx.lo >= rx.hi) continue;
                        for (std::int64_t oy = 0; oy < Ho; ++oy) {
                            const std::int64_t iy = oy * stride + ky - padding;
                            if (iy < 0 || iy >= H) continue;
                            const T* in_row = in_plane + iy * W + rx.lo * stride + kx - padding;
                            T* out_row = out_plane + oy * Wo + rx.lo;
                            const auto count = static_cast<std::size_t>(rx.hi - rx.lo);
                            if (stride == 1) {
                                kern::axpy(wgt, in_row, out_row, count);
                            } else {
                                for (std::size_t i = 0; i < count; ++i)
                                    out_row[i] += wgt * in_row[i * stride];
                            }
                        }
                    }
            }
        }

    typename GradientTape<T>::Entry entry;
    if (out.requires_grad()) {
        auto in_node = input.node();
        auto w_node = weight.node();
        auto b_node = bias ? bias->node() : nullptr;
        auto out_node = out.node();
        entry.op = "conv2d";
        entry.input_ids = {input.id(), weight.id()};
        if (bias) entry.input_ids.push_back(bias->id());
        entry.output_id = out.id();
        const std::int64_t s = stride, p = padding;
        entry.apply = [in_node, w_node, b_node, out_node, N, Cin, Cout, H, W, Ho, Wo, kh, kw, s, p] {
            if (out_node->grad.empty()) return;
            const T* gy = out_node->grad.data();
            if (b_node && b_node->requires_grad) {
                auto gb = b_node->ensure_grad();
                for (std::int64_t n = 0; n < N; ++n)
                    for (std::int64_t co = 0; co < Cout; ++co)
                        gb[co] += kern::sum(gy + (n * Cout + co) * Ho * Wo,
                                            static_cast<std::size_t>(Ho * Wo));
            }
            const bool need_gx = in_node->requires_grad;
            const bool need_gw = w_node->requires_grad;
            if (!need_gx && !need_gw) return;
            std::span<T> gx = need_gx ? in_node->ensure_grad() : std::span<T>{};
            std::span<T> gw = need_gw ? w_node->ensure_grad() : std::span<T>{};
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t co = 0; co < Cout; ++co) {
                    const T* gout_plane = gy + (n * Cout + co) * Ho * Wo;
                    for (std::int64_t ci = 0; ci < Cin; ++ci) {
                        const T* in_plane = in_node->value.data() + (n * Cin + ci) * H * W;
                        T* gin_plane = need_gx ? gx.data() + (n * Cin + ci) * H * W : nullptr;
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t widx = ((co * Cin + ci) * kh + ky) * kw + kx;
                                const T wgt = w_node->value[widx];
                                const TapRange rx = tap_range(Wo, W, kx, s, p);
                                if (rx.lo >= rx.hi) continue;
                                T wacc = T(0);
                                for (std::int64_t oy = 0; oy < Ho; ++oy) {
                                    const std::int64_t iy = oy * s + ky - p;
                                    if (iy < 0 || iy >= H) continue;
                                    const std::int64_t ix0 = rx.lo * s + kx - p;
                                    const T* gout_row = gout_plane + oy * Wo + rx.lo;
                                    const auto count = static_cast<std::size_t>(rx.hi - rx.lo);
                                    if (s == 1) {
                                        if (need_gw)
                                            wacc += kern::dot(gout_row, in_plane + iy * W + ix0, count);
                                        if (need_gx)
                                            kern::axpy(wgt, gout_row, gin_plane + iy * W + ix0, count);
                                    } else {
                                        const T* in_row = in_plane + iy * W + ix0;
                                        T* gin_row = need_gx ? gin_plane + iy * W + ix0 : nullptr;
                                        for (std::size_t i = 0; i < count; ++i) {
                                            if (need_gw) wacc += gout_row[i] * in_row[i * s];
                                            if (need_gx) gin_row[i * s] += wgt * gout_row[i];
                                        }
                                    }
                                }
                                if (need_gw) gw[widx] += wacc;
                            }
                    }
                }
        };
        GradientTape<T>::current()->record(std::move(entry));
    }
    return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride, int padding) {
    const Shape& is = input.shape();
    if (is.size() != 4)
        throw std::invalid_argument("maxpool2d expects a 4-d tensor, got " + shape_str(is));
    const std::int64_t N = is[0], C = is[1], H = is[2], W = is[3];
    if (kernel < 1 || stride < 1 || padding < 0)
        throw std::invalid_argument("maxpool2d requires kernel, stride >= 1 and padding >= 0");
    if (H < kernel - padding || W < kernel - padding)
        throw std::invalid_argument("maxpool2d spatial extents must be >= kernel - padding");
    const std::int64_t Ho = (H + 2 * padding - kernel) / stride + 1;
    const std::int64_t Wo = (W + 2 * padding - kernel) / stride + 1;
    if (Ho < 1 || Wo < 1)
        throw std::invalid_argument("maxpool2d output would be empty for input " + shape_str(is));

    const bool wants =
        GradientTape<T>::current() != nullptr && input.requires_grad();
    auto out = make_op_output<T>(Shape{N, C, Ho, Wo}, wants);
    const T* x = input.values().data();
    T* y = out.values_mut().data();
    // Flat input index of the window maximum, for gradient routing.
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(N * C * Ho * Wo));

    for (std::int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = x + nc * H * W;
        T* out_plane = y + nc * Ho * Wo;
        std::int64_t* arg_plane = argmax.data() + nc * Ho * Wo;
        for (std::int64_t oy = 0; oy < Ho; ++oy)
            for (std::int64_t ox = 0; ox < Wo; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::int64_t best_idx = -1;
                for (std::int64_t ky = 0; ky < kernel; ++ky) {
                    const std::int64_t iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= H) continue;
                    for (std::int64_t kx = 0; kx < kernel; ++kx) {
                        const std::int64_t ix = ox * stride + kx - padding;
                        if (ix < 0 || ix >= W) continue;
                        const T v = plane[iy * W + ix];
                        if (v > best) {  // strict: ties keep the first index in scan order
                            best = v;
                            best_idx = iy * W + ix;
                        }
                    }
                }
                out_plane[oy * Wo + ox] = best;
                arg_plane[oy * Wo + ox] = nc * H * W + best_idx;
            }
    }

    if (wants) {
        typename GradientTape<T>::Entry entry;
        entry.op = "maxpool2d";
        entry.input_ids = {input.id()};
        entry.output_id = out.id();
        entry.apply = [in = input.node(), on = out.node(), argmax = std::move(argmax)] {
            if (on->grad.empty() || !in->requires_grad) return;
            auto gx = in->ensure_grad();
            for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += on->grad[i];
        };
        GradientTape<T>::current()->record(std::move(entry));
    }
    return out;
}

template Tensor<float> conv2d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>*,
                              int, int);
template Tensor<double> conv2d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>*,
                               int, int);
template Tensor<float> maxpool2d(const Tensor<float>&, int, int, int);
template Tensor<double> maxpool2d(const Tensor<double>&, int, int, int);

}  // namespace tubeseg
