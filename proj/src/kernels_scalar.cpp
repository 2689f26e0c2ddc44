#include "tubeseg/kernels.hpp"

namespace tubeseg::kern::detail {

namespace {

template <typename T>
void add_s(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub_s(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul_s(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale_s(T alpha, const T* x, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <typename T>
void axpy_s(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void mul_acc_s(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <typename T>
T dot_s(const T* a, const T* b, std::size_t n) {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T sum_s(const T* x, std::size_t n) {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
void relu_s(const T* x, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad_acc_s(const T* x, const T* g, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (x[i] > T(0)) out[i] += g[i];
}

template <typename T>
Ops<T> make_table() {
    Ops<T> t;
    t.add = add_s<T>;
    t.sub = sub_s<T>;
    t.mul = mul_s<T>;
    t.scale = scale_s<T>;
    t.axpy = axpy_s<T>;
    t.mul_acc = mul_acc_s<T>;
    t.dot = dot_s<T>;
    t.sum = sum_s<T>;
    t.relu = relu_s<T>;
    t.relu_grad_acc = relu_grad_acc_s<T>;
    return t;
}

}  // namespace

template <typename T>
const Ops<T>& scalar_table() {
    static const Ops<T> table = make_table<T>();
    return table;
}

template const Ops<float>& scalar_table<float>();
template const Ops<double>& scalar_table<double>();

}  // namespace tubeseg::kern::detail
