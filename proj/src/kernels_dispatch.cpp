#include "tubeseg/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <cstring>

namespace tubeseg::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend detect_default() {
    if (const char* env = std::getenv("TUBESEG_KERNEL_BACKEND")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Backend::avx2;
    }
    return cpu_has_avx2() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& backend_slot() {
    static std::atomic<Backend> slot{detect_default()};
    return slot;
}

}  // namespace

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    if (!backend_supported(b))
        throw std::runtime_error("kernel backend not supported on this CPU: " + backend_name(b));
    backend_slot().store(b, std::memory_order_relaxed);
}

bool backend_supported(Backend b) {
    switch (b) {
        case Backend::scalar: return true;
        case Backend::avx2: return cpu_has_avx2();
    }
    return false;
}

std::string backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

template <typename T>
const Ops<T>& ops_for(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
    if (b == Backend::avx2) return detail::avx2_table<T>();
#endif
    (void)b;
    return detail::scalar_table<T>();
}

template <typename T>
const Ops<T>& ops() {
    return ops_for<T>(active_backend());
}

template const Ops<float>& ops_for<float>(Backend);
template const Ops<double>& ops_for<double>(Backend);
template const Ops<float>& ops<float>();
template const Ops<double>& ops<double>();

}  // namespace tubeseg::kern
