#pragma once

#include <cstddef>

// Dense double-precision kernels behind the regression and smoothing code.
// Matrices are column-major with leading dimension equal to the row count.
// Every routine has a scalar reference; an AVX2+FMA variant is picked at
// runtime when the CPU supports it.
namespace prodexp::kernels {

enum class Isa { Scalar, Avx2 };

Isa detected_isa();
Isa active_isa();
// Throws std::runtime_error when the requested ISA is unavailable.
void set_isa(Isa isa);
const char* isa_name(Isa isa);

double dot(const double* a, const double* b, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
// out (p x p, col-major) = A' A for A (n x p). Both triangles are written.
void gram(const double* a, std::size_t n, std::size_t p, double* out);
// out (p) = A' v for A (n x p).
void gemv_t(const double* a, std::size_t n, std::size_t p, const double* v, double* out);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gram(const double* a, std::size_t n, std::size_t p, double* out);
void gemv_t(const double* a, std::size_t n, std::size_t p, const double* v, double* out);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gram(const double* a, std::size_t n, std::size_t p, double* out);
void gemv_t(const double* a, std::size_t n, std::size_t p, const double* v, double* out);
}  // namespace avx2

}  // namespace prodexp::kernels
