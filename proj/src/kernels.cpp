#include "prodexp/kernels.hpp"

#include <atomic>
#include <stdexcept>

namespace prodexp::kernels {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gram(const double* a, std::size_t n, std::size_t p, double* out) {
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t i = 0; i <= j; ++i) {
            double s = dot(a + i * n, a + j * n, n);
            out[i + j * p] = s;
            out[j + i * p] = s;
        }
    }
}

void gemv_t(const double* a, std::size_t n, std::size_t p, const double* v, double* out) {
    for (std::size_t j = 0; j < p; ++j) out[j] = dot(a + j * n, v, n);
}

}  // namespace scalar

namespace {

bool cpu_has_avx2() {
#if defined(PRODEXP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar};
    return isa;
}

#if !defined(PRODEXP_HAVE_AVX2)
[[noreturn]] void no_avx2() { throw std::runtime_error("AVX2 kernels not compiled in"); }
#endif

}  // namespace

#if !defined(PRODEXP_HAVE_AVX2)
namespace avx2 {
double dot(const double*, const double*, std::size_t) { no_avx2(); }
void axpy(double, const double*, double*, std::size_t) { no_avx2(); }
void gram(const double*, std::size_t, std::size_t, double*) { no_avx2(); }
void gemv_t(const double*, std::size_t, std::size_t, const double*, double*) { no_avx2(); }
}  // namespace avx2
#endif

Isa detected_isa() { return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (isa == Isa::Avx2 && !cpu_has_avx2())
        throw std::runtime_error("AVX2 not supported on this CPU or build");
    current().store(isa, std::memory_order_relaxed);
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

double dot(const double* a, const double* b, std::size_t n) {
    return active_isa() == Isa::Avx2 ? avx2::dot(a, b, n) : scalar::dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    if (active_isa() == Isa::Avx2)
        avx2::axpy(alpha, x, y, n);
    else
        scalar::axpy(alpha, x, y, n);
}

void gram(const double* a, std::size_t n, std::size_t p, double* out) {
    if (active_isa() == Isa::Avx2)
        avx2::gram(a, n, p, out);
    else
        scalar::gram(a, n, p, out);
}

void gemv_t(const double* a, std::size_t n, std::size_t p, const double* v, double* out) {
    if (active_isa() == Isa::Avx2)
        avx2::gemv_t(a, n, p, v, out);
    else
        scalar::gemv_t(a, n, p, v, out);
}

}  // namespace prodexp::kernels
