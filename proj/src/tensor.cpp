#include "tubeseg/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tubeseg/kernels.hpp"

namespace tubeseg {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

template <typename T>
thread_local GradientTape<T>* g_active_tape = nullptr;

void check_shape_valid(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one extent");
    for (auto d : shape)
        if (d < 1)
            throw std::invalid_argument("tensor extents must be >= 1, got " + shape_str(shape));
}

template <typename T>
std::shared_ptr<detail::Node<T>> make_node(Shape shape, bool requires_grad) {
    check_shape_valid(shape);
    auto node = std::make_shared<detail::Node<T>>();
    node->value.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
    return node;
}

struct Dims4 {
    std::int64_t n, c, h, w;
};

template <typename T>
Dims4 dims4(const Tensor<T>& t, const char* what) {
    const Shape& s = t.shape();
    if (s.size() != 4)
        throw std::invalid_argument(std::string(what) + " expects a 4-d NCHW tensor, got " +
                                    shape_str(s));
    return {s[0], s[1], s[2], s[3]};
}

}  // namespace

template <typename T>
Tensor<T> make_op_output(Shape shape, bool requires_grad) {
    return Tensor<T>(make_node<T>(std::move(shape), requires_grad));
}

template Tensor<float> make_op_output<float>(Shape, bool);
template Tensor<double> make_op_output<double>(Shape, bool);

namespace {

template <typename T>
bool wants_grad(std::initializer_list<const Tensor<T>*> inputs) {
    if (!g_active_tape<T>) return false;
    for (const Tensor<T>* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

template <typename T, typename Fn>
void record_op(const char* op, std::initializer_list<const Tensor<T>*> inputs,
               const Tensor<T>& output, Fn&& apply) {
    if (!output.requires_grad()) return;
    typename GradientTape<T>::Entry entry;
    entry.op = op;
    for (const Tensor<T>* t : inputs) entry.input_ids.push_back(t->id());
    entry.output_id = output.id();
    entry.apply = std::forward<Fn>(apply);
    GradientTape<T>::current()->record(std::move(entry));
}

}  // namespace

// ---- Tensor ----

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad)
    : node_(make_node<T>(std::move(shape), requires_grad)) {
    if (fill != T(0))
        for (auto& v : node_->value) v = fill;
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
    check_shape_valid(shape);
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    Tensor t(std::move(shape), T(0), requires_grad);
    t.node_->value = std::move(data);
    return t;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1)
        throw std::invalid_argument("item() requires a single-element tensor, shape is " +
                                    shape_str(shape()));
    return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    const Shape& s = shape();
    if (s.size() != 4) throw std::invalid_argument("at() requires a 4-d tensor");
    return node_->value[static_cast<std::size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
}

// ---- GradientTape ----

template <typename T>
GradientTape<T>::GradientTape() : previous_(g_active_tape<T>) {
    g_active_tape<T> = this;
}

template <typename T>
GradientTape<T>::~GradientTape() {
    g_active_tape<T> = previous_;
}

template <typename T>
GradientTape<T>* GradientTape<T>::current() {
    return g_active_tape<T>;
}

template <typename T>
void GradientTape<T>::backward(const Tensor<T>& loss) {
    if (loss.numel() != 1)
        throw std::invalid_argument("backward() requires a scalar loss, shape is " +
                                    shape_str(loss.shape()));
    loss.node()->ensure_grad()[0] = T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->apply();
}

// ---- elementwise and shape ops ----

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    auto out = make_op_output<T>(input.shape(), wants_grad<T>({&input}));
    const auto n = static_cast<std::size_t>(input.numel());
    kern::relu(input.values().data(), out.values_mut().data(), n);
    record_op<T>("relu", {&input}, out, [in = input.node(), on = out.node(), n] {
        if (on->grad.empty() || !in->requires_grad) return;
        kern::relu_grad_acc(in->value.data(), on->grad.data(), in->ensure_grad().data(), n);
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    auto out = make_op_output<T>(input.shape(), wants_grad<T>({&input}));
    const auto n = static_cast<std::size_t>(input.numel());
    const T* x = input.values().data();
    T* y = out.values_mut().data();
    for (std::size_t i = 0; i < n; ++i) {
        // Split by sign to avoid overflow in exp.
        if (x[i] >= T(0)) {
            y[i] = T(1) / (T(1) + std::exp(-x[i]));
        } else {
            const T e = std::exp(x[i]);
            y[i] = e / (T(1) + e);
        }
    }
    record_op<T>("sigmoid", {&input}, out, [in = input.node(), on = out.node(), n] {
        if (on->grad.empty() || !in->requires_grad) return;
        auto g = in->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const T s = on->value[i];
            g[i] += on->grad[i] * s * (T(1) - s);
        }
    });
    return out;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& input) {
    const Dims4 d = dims4(input, "softmax_channels");
    auto out = make_op_output<T>(input.shape(), wants_grad<T>({&input}));
    const T* x = input.values().data();
    T* y = out.values_mut().data();
    const std::int64_t plane = d.h * d.w;
    const std::int64_t cstride = plane;
    for (std::int64_t n = 0; n < d.n; ++n) {
        const std::int64_t base = n * d.c * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
            T m = x[base + p];
            for (std::int64_t c = 1; c < d.c; ++c) m = std::max(m, x[base + c * cstride + p]);
            T denom = T(0);
            for (std::int64_t c = 0; c < d.c; ++c) {
                const T e = std::exp(x[base + c * cstride + p] - m);
                y[base + c * cstride + p] = e;
                denom += e;
            }
            for (std::int64_t c = 0; c < d.c; ++c) y[base + c * cstride + p] /= denom;
        }
    }
    record_op<T>("softmax", {&input}, out, [in = input.node(), on = out.node(), d] {
        if (on->grad.empty() || !in->requires_grad) return;
        auto gx = in->ensure_grad();
        const std::int64_t plane = d.h * d.w;
        for (std::int64_t n = 0; n < d.n; ++n) {
            const std::int64_t base = n * d.c * plane;
            for (std::int64_t p = 0; p < plane; ++p) {
                T dotpg = T(0);
                for (std::int64_t c = 0; c < d.c; ++c) {
                    const std::int64_t i = base + c * plane + p;
                    dotpg += on->grad[i] * on->value[i];
                }
                for (std::int64_t c = 0; c < d.c; ++c) {
                    const std::int64_t i = base + c * plane + p;
                    gx[i] += on->value[i] * (on->grad[i] - dotpg);
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
    const Dims4 d = dims4(input, "global_avg_pool");
    auto out = make_op_output<T>(Shape{d.n, d.c, 1, 1}, wants_grad<T>({&input}));
    const std::int64_t plane = d.h * d.w;
    const T inv = T(1) / static_cast<T>(plane);
    const T* x = input.values().data();
    T* y = out.values_mut().data();
    for (std::int64_t nc = 0; nc < d.n * d.c; ++nc)
        y[nc] = kern::sum(x + nc * plane, static_cast<std::size_t>(plane)) * inv;
    record_op<T>("global_avg_pool", {&input}, out, [in = input.node(), on = out.node(), d, inv] {
        if (on->grad.empty() || !in->requires_grad) return;
        auto gx = in->ensure_grad();
        const std::int64_t plane = d.h * d.w;
        for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
            const T g = on->grad[nc] * inv;
            T* dst = gx.data() + nc * plane;
            for (std::int64_t p = 0; p < plane; ++p) dst[p] += g;
        }
    });
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add requires identical shapes, got " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    auto out = make_op_output<T>(a.shape(), wants_grad<T>({&a, &b}));
    const auto n = static_cast<std::size_t>(a.numel());
    kern::add(a.values().data(), b.values().data(), out.values_mut().data(), n);
    record_op<T>("add", {&a, &b}, out, [an = a.node(), bn = b.node(), on = out.node(), n] {
        if (on->grad.empty()) return;
        if (an->requires_grad) kern::axpy(T(1), on->grad.data(), an->ensure_grad().data(), n);
        if (bn->requires_grad) kern::axpy(T(1), on->grad.data(), bn->ensure_grad().data(), n);
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("mul requires identical shapes, got " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    auto out = make_op_output<T>(a.shape(), wants_grad<T>({&a, &b}));
    const auto n = static_cast<std::size_t>(a.numel());
    kern::mul(a.values().data(), b.values().data(), out.values_mut().data(), n);
    record_op<T>("mul", {&a, &b}, out, [an = a.node(), bn = b.node(), on = out.node(), n] {
        if (on->grad.empty()) return;
        if (an->requires_grad) kern::mul_acc(on->grad.data(), bn->value.data(), an->ensure_grad().data(), n);
        if (bn->requires_grad) kern::mul_acc(on->grad.data(), an->value.data(), bn->ensure_grad().data(), n);
    });
    return out;
}

template <typename T>
Tensor<T> mul_broadcast(const Tensor<T>& a, const Tensor<T>& b) {
    const Dims4 da = dims4(a, "mul_broadcast");
    const Dims4 db = dims4(b, "mul_broadcast");
    const bool channel_gate = db.n == da.n && db.c == da.c && db.h == 1 && db.w == 1;
    const bool spatial_gate = db.n == da.n && db.c == 1 && db.h == da.h && db.w == da.w;
    if (!channel_gate && !spatial_gate)
        throw std::invalid_argument("mul_broadcast expects b of shape [N,C,1,1] or [N,1,H,W]; got a " +
                                    shape_str(a.shape()) + ", b " + shape_str(b.shape()));
    auto out = make_op_output<T>(a.shape(), wants_grad<T>({&a, &b}));
    const std::int64_t plane = da.h * da.w;
    const T* av = a.values().data();
    const T* bv = b.values().data();
    T* y = out.values_mut().data();
    if (channel_gate) {
        for (std::int64_t nc = 0; nc < da.n * da.c; ++nc)
            kern::scale(bv[nc], av + nc * plane, y + nc * plane, static_cast<std::size_t>(plane));
    } else {
        for (std::int64_t n = 0; n < da.n; ++n)
            for (std::int64_t c = 0; c < da.c; ++c)
                kern::mul(av + (n * da.c + c) * plane, bv + n * plane, y + (n * da.c + c) * plane,
                          static_cast<std::size_t>(plane));
    }
    record_op<T>("mul_broadcast", {&a, &b}, out,
                 [an = a.node(), bn = b.node(), on = out.node(), da, channel_gate] {
        if (on->grad.empty()) return;
        const std::int64_t plane = da.h * da.w;
        const auto splane = static_cast<std::size_t>(plane);
        if (channel_gate) {
            for (std::int64_t nc = 0; nc < da.n * da.c; ++nc) {
                if (an->requires_grad)
                    kern::axpy(bn->value[nc], on->grad.data() + nc * plane,
                               an->ensure_grad().data() + nc * plane, splane);
                if (bn->requires_grad)
                    bn->ensure_grad()[nc] +=
                        kern::dot(on->grad.data() + nc * plane, an->value.data() + nc * plane, splane);
            }
        } else {
            for (std::int64_t n = 0; n < da.n; ++n)
                for (std::int64_t c = 0; c < da.c; ++c) {
                    const std::int64_t off = (n * da.c + c) * plane;
                    if (an->requires_grad)
                        kern::mul_acc(on->grad.data() + off, bn->value.data() + n * plane,
                                      an->ensure_grad().data() + off, splane);
                    if (bn->requires_grad)
                        kern::mul_acc(on->grad.data() + off, an->value.data() + off,
                                      bn->ensure_grad().data() + n * plane, splane);
                }
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Dims4 da = dims4(a, "concat_channels");
    const Dims4 db = dims4(b, "concat_channels");
    if (da.n != db.n || da.h != db.h || da.w != db.w)
        throw std::invalid_argument("concat_channels requires matching N,H,W; got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    auto out = make_op_output<T>(Shape{da.n, da.c + db.c, da.h, da.w}, wants_grad<T>({&a, &b}));
    const std::int64_t plane = da.h * da.w;
    T* y = out.values_mut().data();
    const T* av = a.values().data();
    const T* bv = b.values().data();
    for (std::int64_t n = 0; n < da.n; ++n) {
        std::copy(av + n * da.c * plane, av + (n + 1) * da.c * plane,
                  y + n * (da.c + db.c) * plane);
        std::copy(bv + n * db.c * plane, bv + (n + 1) * db.c * plane,
                  y + (n * (da.c + db.c) + da.c) * plane);
    }
    record_op<T>("concat_channels", {&a, &b}, out,
                 [an = a.node(), bn = b.node(), on = out.node(), da, db] {
        if (on->grad.empty()) return;
        const std::int64_t plane = da.h * da.w;
        for (std::int64_t n = 0; n < da.n; ++n) {
            const T* gy = on->grad.data() + n * (da.c + db.c) * plane;
            if (an->requires_grad)
                kern::axpy(T(1), gy, an->ensure_grad().data() + n * da.c * plane,
                           static_cast<std::size_t>(da.c * plane));
            if (bn->requires_grad)
                kern::axpy(T(1), gy + da.c * plane, bn->ensure_grad().data() + n * db.c * plane,
                           static_cast<std::size_t>(db.c * plane));
        }
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    auto out = make_op_output<T>(a.shape(), wants_grad<T>({&a}));
    const auto n = static_cast<std::size_t>(a.numel());
    kern::scale(factor, a.values().data(), out.values_mut().data(), n);
    record_op<T>("scale", {&a}, out, [an = a.node(), on = out.node(), factor, n] {
        if (on->grad.empty() || !an->requires_grad) return;
        kern::axpy(factor, on->grad.data(), an->ensure_grad().data(), n);
    });
    return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
    auto out = make_op_output<T>(Shape{1}, wants_grad<T>({&a}));
    const auto n = static_cast<std::size_t>(a.numel());
    out.values_mut()[0] = kern::sum(a.values().data(), n);
    record_op<T>("sum_all", {&a}, out, [an = a.node(), on = out.node(), n] {
        if (on->grad.empty() || !an->requires_grad) return;
        const T g = on->grad[0];
        auto gx = an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
    return out;
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& input, int scale_factor) {
    const Dims4 d = dims4(input, "nearest_upsample");
    if (scale_factor < 1) throw std::invalid_argument("nearest_upsample scale must be >= 1");
    const std::int64_t s = scale_factor;
    auto out = make_op_output<T>(Shape{d.n, d.c, d.h * s, d.w * s}, wants_grad<T>({&input}));
    const T* x = input.values().data();
    T* y = out.values_mut().data();
    const std::int64_t oh = d.h * s, ow = d.w * s;
    for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
        const T* src = x + nc * d.h * d.w;
        T* dst = y + nc * oh * ow;
        for (std::int64_t yy = 0; yy < oh; ++yy) {
            const T* row = src + (yy / s) * d.w;
            for (std::int64_t xx = 0; xx < ow; ++xx) dst[yy * ow + xx] = row[xx / s];
        }
    }
    record_op<T>("nearest_upsample", {&input}, out, [in = input.node(), on = out.node(), d, s] {
        if (on->grad.empty() || !in->requires_grad) return;
        auto gx = in->ensure_grad();
        const std::int64_t oh = d.h * s, ow = d.w * s;
        for (std::int64_t nc = 0; nc < d.n * d.c; ++nc) {
            const T* g = on->grad.data() + nc * oh * ow;
            T* dst = gx.data() + nc * d.h * d.w;
            for (std::int64_t yy = 0; yy < oh; ++yy)
                for (std::int64_t xx = 0; xx < ow; ++xx)
                    dst[(yy / s) * d.w + xx / s] += g[yy * ow + xx];
        }
    });
    return out;
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, bool training, T epsilon, T momentum) {
    const Dims4 d = dims4(input, "batchnorm2d");
    if (gamma.numel() != d.c || beta.numel() != d.c)
        throw std::invalid_argument("batchnorm2d gamma/beta must have C=" + std::to_string(d.c) +
                                    " elements");
    const std::int64_t plane = d.h * d.w;
    const std::int64_t m = d.n * plane;  // samples per channel
    auto out = make_op_output<T>(input.shape(), wants_grad<T>({&input, &gamma, &beta}));

    std::vector<T> mean(static_cast<std::size_t>(d.c));
    std::vector<T> invstd(static_cast<std::size_t>(d.c));
    const T* x = input.values().data();
    T* y = out.values_mut().data();

    if (training) {
        if (m < 2)
            throw std::invalid_argument("batchnorm2d train mode requires N*H*W >= 2 per channel");
        for (std::int64_t c = 0; c < d.c; ++c) {
            T s = T(0);
            for (std::int64_t n = 0; n < d.n; ++n)
                s += kern::sum(x + (n * d.c + c) * plane, static_cast<std::size_t>(plane));
            const T mu = s / static_cast<T>(m);
            T sq = T(0);
            for (std::int64_t n = 0; n < d.n; ++n) {
                const T* p = x + (n * d.c + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const T dv = p[i] - mu;
                    sq += dv * dv;
                }
            }
            const T var = sq / static_cast<T>(m);  // biased, used for normalization
            mean[c] = mu;
            invstd[c] = T(1) / std::sqrt(var + epsilon);
            // Running statistics keep the unbiased variance.
            const T var_unbiased = m > 1 ? sq / static_cast<T>(m - 1) : var;
            auto rm = state.running_mean.values_mut();
            auto rv = state.running_var.values_mut();
            rm[c] = (T(1) - momentum) * rm[c] + momentum * mu;
            rv[c] = (T(1) - momentum) * rv[c] + momentum * var_unbiased;
        }
        state.batches_seen.values_mut()[0] += T(1);
    } else {
        if (state.batches_seen.values()[0] <= T(0))
            throw std::runtime_error(
                "batchnorm2d eval mode: uninitialized statistics (no training batches seen)");
        for (std::int64_t c = 0; c < d.c; ++c) {
            mean[c] = state.running_mean.values()[c];
            invstd[c] = T(1) / std::sqrt(state.running_var.values()[c] + epsilon);
        }
    }

    const T* gm = gamma.values().data();
    const T* bt = beta.values().data();
    for (std::int64_t n = 0; n < d.n; ++n)
        for (std::int64_t c = 0; c < d.c; ++c) {
            const T* src = x + (n * d.c + c) * plane;
            T* dst = y + (n * d.c + c) * plane;
            const T a = gm[c] * invstd[c];
            const T b = bt[c] - a * mean[c];
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = a * src[i] + b;
        }

    record_op<T>("batchnorm2d", {&input, &gamma, &beta}, out,
                 [in = input.node(), gn = gamma.node(), bn = beta.node(), on = out.node(), d,
                  mean = std::move(mean), invstd = std::move(invstd), m, training] {
        if (on->grad.empty()) return;
        const std::int64_t plane = d.h * d.w;
        const T invm = T(1) / static_cast<T>(m);
        for (std::int64_t c = 0; c < d.c; ++c) {
            // Channel reductions of g and g * xhat.
            T gsum = T(0), gxsum = T(0);
            for (std::int64_t n = 0; n < d.n; ++n) {
                const std::int64_t off = (n * d.c + c) * plane;
                const T* g = on->grad.data() + off;
                const T* xv = in->value.data() + off;
                for (std::int64_t i = 0; i < plane; ++i) {
                    gsum += g[i];
                    gxsum += g[i] * (xv[i] - mean[c]) * invstd[c];
                }
            }
            if (bn->requires_grad) bn->ensure_grad()[c] += gsum;
            if (gn->requires_grad) gn->ensure_grad()[c] += gxsum;
            if (in->requires_grad) {
                auto gx = in->ensure_grad();
                const T a = gn->value[c] * invstd[c];
                for (std::int64_t n = 0; n < d.n; ++n) {
                    const std::int64_t off = (n * d.c + c) * plane;
                    const T* g = on->grad.data() + off;
                    const T* xv = in->value.data() + off;
                    T* dst = gx.data() + off;
                    if (training) {
                        for (std::int64_t i = 0; i < plane; ++i) {
                            const T xhat = (xv[i] - mean[c]) * invstd[c];
                            dst[i] += a * (g[i] - gsum * invm - xhat * gxsum * invm);
                        }
                    } else {
                        for (std::int64_t i = 0; i < plane; ++i) dst[i] += a * g[i];
                    }
                }
            }
        }
    });
    return out;
}

// ---- explicit instantiations ----

#define TUBESEG_INSTANTIATE(T)                                                            \
    template class Tensor<T>;                                                             \
    template class GradientTape<T>;                                                       \
    template Tensor<T> relu(const Tensor<T>&);                                            \
    template Tensor<T> sigmoid(const Tensor<T>&);                                         \
    template Tensor<T> softmax_channels(const Tensor<T>&);                                \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                 \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> mul_broadcast(const Tensor<T>&, const Tensor<T>&);                 \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);               \
    template Tensor<T> scale(const Tensor<T>&, T);                                        \
    template Tensor<T> sum_all(const Tensor<T>&);                                         \
    template Tensor<T> nearest_upsample(const Tensor<T>&, int);                           \
    template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                   BatchNormState<T>&, bool, T, T);

TUBESEG_INSTANTIATE(float)
TUBESEG_INSTANTIATE(double)

#undef TUBESEG_INSTANTIATE

}  // namespace tubeseg
