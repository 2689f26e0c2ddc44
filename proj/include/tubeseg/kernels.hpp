#pragma once

// Data-parallel inner loops shared by the tensor engine. Scalar reference
// implementations always exist; an AVX2 variant is selected at runtime when
// the CPU supports it. All variants of one kernel compute the same values up
// to floating-point reassociation in reductions, and the test suite checks
// scalar/SIMD equivalence for every entry point.

#include <cstddef>
#include <string>

namespace tubeseg::kern {

enum class Backend { scalar, avx2 };

// Table of primitive kernels for one scalar type.
template <typename T>
struct Ops {
    void (*add)(const T* a, const T* b, T* out, std::size_t n);
    void (*sub)(const T* a, const T* b, T* out, std::size_t n);
    void (*mul)(const T* a, const T* b, T* out, std::size_t n);
    void (*scale)(T alpha, const T* x, T* out, std::size_t n);
    void (*axpy)(T alpha, const T* x, T* y, std::size_t n);   // y += alpha * x
    void (*mul_acc)(const T* a, const T* b, T* out, std::size_t n);  // out += a * b
    T (*dot)(const T* a, const T* b, std::size_t n);
    T (*sum)(const T* x, std::size_t n);
    void (*relu)(const T* x, T* out, std::size_t n);
    // out += (x > 0 ? g : 0); the x == 0 subgradient is zero.
    void (*relu_grad_acc)(const T* x, const T* g, T* out, std::size_t n);
};

template <typename T>
const Ops<T>& ops();

// Runtime selection. The default is the widest backend the CPU supports;
// the TUBESEG_KERNEL_BACKEND environment variable ("scalar" or "avx2")
// overrides it, as does an explicit set_backend call.
Backend active_backend();
void set_backend(Backend b);
bool backend_supported(Backend b);
std::string backend_name(Backend b);

// Direct access to a specific backend's table (for equivalence tests).
template <typename T>
const Ops<T>& ops_for(Backend b);

// Convenience wrappers through the active table.
template <typename T> inline void add(const T* a, const T* b, T* out, std::size_t n) { ops<T>().add(a, b, out, n); }
template <typename T> inline void sub(const T* a, const T* b, T* out, std::size_t n) { ops<T>().sub(a, b, out, n); }
template <typename T> inline void mul(const T* a, const T* b, T* out, std::size_t n) { ops<T>().mul(a, b, out, n); }
template <typename T> inline void scale(T alpha, const T* x, T* out, std::size_t n) { ops<T>().scale(alpha, x, out, n); }
template <typename T> inline void axpy(T alpha, const T* x, T* y, std::size_t n) { ops<T>().axpy(alpha, x, y, n); }
template <typename T> inline void mul_acc(const T* a, const T* b, T* out, std::size_t n) { ops<T>().mul_acc(a, b, out, n); }
template <typename T> inline T dot(const T* a, const T* b, std::size_t n) { return ops<T>().dot(a, b, n); }
template <typename T> inline T sum(const T* x, std::size_t n) { return ops<T>().sum(x, n); }
template <typename T> inline void relu(const T* x, T* out, std::size_t n) { ops<T>().relu(x, out, n); }
template <typename T> inline void relu_grad_acc(const T* x, const T* g, T* out, std::size_t n) { ops<T>().relu_grad_acc(x, g, out, n); }

namespace detail {
template <typename T> const Ops<T>& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
template <typename T> const Ops<T>& avx2_table();
#endif
}  // namespace detail

}  // namespace tubeseg::kern
