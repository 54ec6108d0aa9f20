#pragma once

// Dense double-precision kernels used by retrieval (cosine scoring) and the
// logistic confidence model (logits and gradient accumulation).
//
// Each kernel has a scalar reference in kernels::scalar and vectorized
// variants in kernels::avx2 / kernels::neon. The free functions in
// nlicl::kernels dispatch to the best variant the running CPU supports; the
// choice can be pinned with the NLICL_SIMD environment variable
// (scalar|avx2|neon) or force_isa().

#include <cstddef>
#include <span>
#include <string_view>

namespace nlicl::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa active_isa();
// Throws ConfigError if the CPU does not support `isa`.
void force_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double sum_squares(std::span<const double> x);
// out[i] = dot(row i of `rows`, x); rows is row-major with x.size() columns.
void gemv(std::span<const double> rows, std::span<const double> x, std::span<double> out);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_squares(const double* x, std::size_t n);
}  // namespace neon
#endif

}  // namespace nlicl::kernels
