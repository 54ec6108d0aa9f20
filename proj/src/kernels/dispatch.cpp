#include <atomic>
#include <cstdlib>
#include <string>

#include "nlicl/error.hpp"
#include "nlicl/kernels.hpp"

namespace nlicl::kernels {
namespace {

struct Table {
  Isa isa;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*sum_squares)(const double*, std::size_t);
};

constexpr Table kScalarTable{Isa::kScalar, scalar::dot, scalar::axpy, scalar::sum_squares};
#if defined(__x86_64__) || defined(_M_X64)
constexpr Table kAvx2Table{Isa::kAvx2, avx2::dot, avx2::axpy, avx2::sum_squares};
#endif
#if defined(__aarch64__)
constexpr Table kNeonTable{Isa::kNeon, neon::dot, neon::axpy, neon::sum_squares};
#endif

const Table* table_for(Isa isa) {
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::kAvx2:
      return &kAvx2Table;
#endif
#if defined(__aarch64__)
    case Isa::kNeon:
      return &kNeonTable;
#endif
    default:
      return &kScalarTable;
  }
}

const Table* detect() {
  if (const char* env = std::getenv("NLICL_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (want == isa_name(isa) && isa_supported(isa)) return table_for(isa);
    }
  }
  if (isa_supported(Isa::kAvx2)) return table_for(Isa::kAvx2);
  if (isa_supported(Isa::kNeon)) return table_for(Isa::kNeon);
  return &kScalarTable;
}

std::atomic<const Table*>& active() {
  static std::atomic<const Table*> table{detect()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
    default:
      return "scalar";
  }
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return active().load()->isa; }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw ConfigError("SIMD variant '" + std::string(isa_name(isa)) + "' not supported on this CPU");
  }
  active().store(table_for(isa));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("dot: length mismatch");
  return active().load()->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw ConfigError("axpy: length mismatch");
  active().load()->axpy(alpha, x.data(), y.data(), x.size());
}

double sum_squares(std::span<const double> x) {
  return active().load()->sum_squares(x.data(), x.size());
}

void gemv(std::span<const double> rows, std::span<const double> x, std::span<double> out) {
  const std::size_t dim = x.size();
  if (rows.size() != dim * out.size()) throw ConfigError("gemv: shape mismatch");
  const Table* t = active().load();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = t->dot(rows.data() + i * dim, x.data(), dim);
}

}  // namespace nlicl::kernels
